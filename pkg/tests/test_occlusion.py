import numpy as np
import pytest

from conftest import make_scene, random_scene, rect_rgba
from flowgen.compositor import render_scene
from flowgen.geometry import AffineParams
from flowgen.occlusion import (binarize_alpha, combined_occlusion, nonvisible_region,
                               occlusion_for_layer, oracle_occlusion)


def loop_oracle(scene, threshold=0.4):
    """Pixel-loop forward occupancy for integer translations."""
    w, h = scene.canvas
    occ = np.zeros((h, w), dtype=bool)

    def present_t(layer, x, y):
        if layer.is_background:
            return 0 <= x < w and 0 <= y < h
        ox, oy = layer.offset
        lx, ly = x - ox, y - oy
        img = layer.image
        return 0 <= ly < img.shape[0] and 0 <= lx < img.shape[1] and img[ly, lx, 3] >= threshold

    for y in range(h):
        for x in range(w):
            top = 0
            for layer in scene.layers[1:]:
                tx, ty = (int(v) for v in layer.affine.translation)
                if present_t(layer, x + tx, y + ty):
                    top = layer.index
            tx, ty = (int(v) for v in scene.layers[top].affine.translation)
            dx, dy = x + tx, y + ty
            if 0 <= dx < w and 0 <= dy < h:
                occ[y, x] = any(present_t(layer, dx, dy) for layer in scene.layers[top + 1:])
    return occ


class TestPrimitives:
    def test_binarize_inclusive(self):
        np.testing.assert_array_equal(binarize_alpha(np.array([0.39, 0.4, 1.0])), [False, True, True])

    def test_nonvisible(self):
        a = [np.ones((1, 4), bool), np.array([[1, 1, 0, 0]], bool), np.array([[0, 1, 1, 0]], bool)]
        np.testing.assert_array_equal(nonvisible_region(0, a), [[1, 1, 1, 0]])
        np.testing.assert_array_equal(nonvisible_region(1, a), [[0, 1, 0, 0]])
        assert not nonvisible_region(2, a).any()
        with pytest.raises(IndexError):
            nonvisible_region(3, a)

    def test_occlusion_for_layer_floor(self):
        v_t = np.array([[0, 1, 1, 0]], bool)
        v_r = np.array([[0, 0, 1, 1]], bool)
        m = occlusion_for_layer(v_t, v_r, np.zeros((1, 4, 2)))
        np.testing.assert_array_equal(m, [[False, True, False, False]])


class TestHandCases:
    def test_square_slides_over_background(self):
        # static background, opaque 4x4 square moving right by 3
        bg = np.zeros((12, 16, 3))
        scene = make_scene((16, 12), bg, [(rect_rgba(4, 4), (6, 4), AffineParams((3.0, 0.0), 0, 1, (8, 6)))])
        occ = combined_occlusion(scene)
        # frame A square at x in [3, 7); frame B at [6, 10): bg pixels [7, 10) get covered
        expected = np.zeros((12, 16), bool)
        expected[4:8, 7:10] = True
        np.testing.assert_array_equal(occ, expected)
        np.testing.assert_array_equal(loop_oracle(scene), expected)

    def test_foreground_slides_under_higher_layer(self):
        bg = np.zeros((12, 20, 3))
        low = (rect_rgba(3, 3), (10, 4), AffineParams((-4.0, 0.0), 0, 1, (11, 5)))
        high = (rect_rgba(4, 6, (0, 1, 0)), (9, 3), AffineParams((0.0, 0.0), 0, 1, (10, 5)))
        scene = make_scene((20, 12), bg, [low, high])
        occ = combined_occlusion(scene)
        # low sits at x in [14, 17) in frame A; in frame B its columns 10, 11, 12 are under
        # the high layer (x 9..12), the column at 13 is not occluded. Background pixels at
        # x in [9, 13) rows 3..8 stay covered by the static high layer in both frames.
        expected = np.zeros((12, 20), bool)
        expected[4:7, 14:17] = True
        np.testing.assert_array_equal(occ, expected)
        np.testing.assert_array_equal(loop_oracle(scene), expected)

    def test_disocclusion_not_marked(self):
        bg = np.zeros((10, 10, 3))
        # static square, background moves: nothing becomes hidden except where bg goes under it
        scene = make_scene((10, 10), bg, [(rect_rgba(2, 2), (4, 4), AffineParams((0.0, 0.0), 0, 1, (5, 5)))],
                           AffineParams((2.0, 0.0), 0, 1, (4.5, 4.5)))
        occ = combined_occlusion(scene)
        expected = np.zeros((10, 10), bool)
        expected[4:6, 2:4] = True
        np.testing.assert_array_equal(occ, expected)


@pytest.mark.parametrize("seed", range(25))
def test_integer_scenes_match_loop_oracle(seed):
    scene = random_scene(np.random.default_rng(seed), canvas=(32, 24), n_fg=4, max_shift=6)
    expected = loop_oracle(scene)
    np.testing.assert_array_equal(combined_occlusion(scene), expected)
    np.testing.assert_array_equal(oracle_occlusion(scene), expected)
    np.testing.assert_array_equal(render_scene(scene).occlusion, expected)


@pytest.mark.parametrize("seed", range(10))
def test_windowed_matches_full_canvas(seed):
    scene = random_scene(np.random.default_rng(100 + seed), integer=False)
    total, per_layer = combined_occlusion(scene, per_layer=True)
    r = render_scene(scene, keep_layers=True)
    np.testing.assert_array_equal(r.occlusion, total)
    for a, b in zip(r.layer_occlusion, per_layer):
        np.testing.assert_array_equal(a, b)


def test_out_of_frame_flag():
    bg = np.zeros((8, 8, 3))
    scene = make_scene((8, 8), bg, [], AffineParams((2.0, 0.0), 0, 1, (3.5, 3.5)))
    assert not oracle_occlusion(scene).any()
    ext = oracle_occlusion(scene, out_of_frame=True)
    assert ext[:, 6:].all() and not ext[:, :6].any()


def test_general_affine_iou(catalog):
    """Smooth motions agree closely with nearest-neighbour forward mapping."""
    ious = []
    for seed in range(20):
        scene = random_scene(np.random.default_rng(500 + seed), integer=False)
        a, b = combined_occlusion(scene), oracle_occlusion(scene)
        union = (a | b).sum()
        ious.append(1.0 if union == 0 else (a & b).sum() / union)
    assert np.mean(ious) >= 0.9


@pytest.mark.parametrize("seed", range(8))
def test_layer_invariants(seed):
    scene = random_scene(np.random.default_rng(700 + seed), integer=False)
    r = render_scene(scene, keep_layers=True)
    for m, v in zip(r.layer_occlusion, r.layer_nonvisible_ref):
        assert not (m & v).any()
    assert not r.layer_occlusion[-1].any()


def test_dilation_can_shrink_mask():
    """Growing a moving layer's support also grows it in frame A, which can remove occluded pixels.

    A 4 px square moving right by 3 occludes background columns [7, 10); dilated to
    6 px (reference [2, 8), target [5, 11)) it occludes [8, 11), so column 7 drops out.
    """
    bg = np.zeros((12, 16, 3))
    small = make_scene((16, 12), bg, [(rect_rgba(4, 4), (6, 4), AffineParams((3.0, 0.0), 0, 1, (8, 6)))])
    big = make_scene((16, 12), bg, [(rect_rgba(6, 6), (5, 3), AffineParams((3.0, 0.0), 0, 1, (8, 6)))])
    m_small, m_big = combined_occlusion(small), combined_occlusion(big)
    assert m_small[5, 7] and not m_big[5, 7]
    np.testing.assert_array_equal(np.nonzero(m_big[5])[0], [8, 9, 10])

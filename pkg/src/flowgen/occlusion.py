"""Layered occlusion masks.

For every layer ``i`` the binarised alphas of the reference (``r``) and
target (``t``) frames give the regions hidden beneath higher layers::

    V_i = alpha_i  &  (alpha_{i+1} | ... | alpha_L)

The target-frame hidden region is inverse-warped into the reference frame
by the layer's own flow and re-binarised; what is hidden in the target but
not in the reference is occluded::

    M_i = max(warp(V_t_i, f_i) - V_r_i, 0),      M = M_0 | ... | M_L

Masks are boolean numpy arrays, so intersection, union and the floored
difference are ``&``, ``|`` and ``a & ~b``.  Pixels whose correspondence
leaves the frame are not part of ``M``; see
:attr:`flowgen.compositor.Sample.occlusion_extended` for the union with
out-of-frame pixels.
"""

from __future__ import annotations

from typing import List, Optional, Sequence

import numpy as np

from .geometry import BorderPolicy, bilinear_sample, inverse_warp_mask, pixel_grid


def binarize_alpha(alpha: np.ndarray, threshold: float = 0.4) -> np.ndarray:
    """``alpha >= threshold`` (inclusive)."""
    return np.asarray(alpha) >= threshold


def nonvisible_region(i: int, alphas: Sequence[np.ndarray]) -> np.ndarray:
    """Part of layer ``i`` covered by the union of all higher layers."""
    if not 0 <= i < len(alphas):
        raise IndexError(f"layer index {i} out of range for {len(alphas)} layers")
    above = np.zeros(np.shape(alphas[i]), dtype=bool)
    for a in alphas[i + 1:]:
        above |= a
    return np.asarray(alphas[i], dtype=bool) & above


def occlusion_for_layer(v_t: np.ndarray, v_r: np.ndarray, flow: np.ndarray,
                        threshold: float = 0.4) -> np.ndarray:
    """``max(warp(v_t, flow) - v_r, 0)`` on binary masks."""
    warped = inverse_warp_mask(np.asarray(v_t, dtype=np.float64), flow, threshold)
    return warped & ~np.asarray(v_r, dtype=bool)


def layer_alphas(scene, threshold: float = 0.4):
    """Full-canvas binary alphas ``(alpha_r, alpha_t)`` for every layer.

    The reference alphas are the target alphas inverse-warped with a
    transparent border; the background is opaque in both frames.
    """
    from .geometry import inverse_warp_image

    alpha_r, alpha_t = [], []
    for layer in scene.layers:
        a_t = layer.target_alpha(scene.canvas)
        if layer.is_background:
            alpha_r.append(np.ones(a_t.shape, dtype=bool))
        else:
            a_r = inverse_warp_image(a_t, layer.flow(scene.canvas), BorderPolicy.ZERO)
            alpha_r.append(a_r >= threshold)
        alpha_t.append(a_t >= threshold)
    return alpha_r, alpha_t


def combined_occlusion(scene, threshold: float = 0.4, per_layer: bool = False):
    """Occlusion mask of a whole scene at full canvas resolution.

    Straightforward full-canvas evaluation of the layer recursion; the
    renderer uses the windowed equivalent :func:`scene_occlusion`.
    """
    alpha_r, alpha_t = layer_alphas(scene, threshold)
    total = np.zeros(alpha_r[0].shape, dtype=bool)
    masks = []
    for i, layer in enumerate(scene.layers):
        v_t = nonvisible_region(i, alpha_t)
        v_r = nonvisible_region(i, alpha_r)
        m = occlusion_for_layer(v_t, v_r, layer.flow(scene.canvas), threshold)
        masks.append(m)
        total |= m
    return (total, masks) if per_layer else total


def scene_occlusion(scene, warped: list, window, threshold: float = 0.4):
    """Windowed occlusion from already warped layers.

    ``warped`` is the list produced by :func:`flowgen.compositor.warp_layer`
    for each layer (``None`` for layers that miss the window).  Returns the
    combined mask plus per-layer ``M`` and reference ``V`` masks, all over
    ``window``.
    """
    w, h = scene.canvas
    x0, y0, x1, y1 = window
    shape = (y1 - y0, x1 - x0)
    layers = scene.layers

    # target frame: hidden regions, top-down, in each layer's own bbox
    above_t = np.zeros((h, w), dtype=bool)
    v_t: List[Optional[np.ndarray]] = [None] * len(layers)
    for layer in reversed(layers[1:]):
        bx, by, bw, bh = layer.bbox
        a_t = layer.alpha >= threshold
        region = above_t[by:by + bh, bx:bx + bw]
        v_t[layer.index] = a_t & region
        region |= a_t
    v_t[0] = above_t

    # reference frame, restricted to the window
    above_r = np.zeros(shape, dtype=bool)
    v_r: List[Optional[np.ndarray]] = [None] * len(layers)
    for wl in reversed(warped[1:]):
        if wl is None:
            continue
        sl = (slice(wl.window[1] - y0, wl.window[3] - y0), slice(wl.window[0] - x0, wl.window[2] - x0))
        a_r = wl.alpha >= threshold
        v_r[wl.index] = a_r & above_r[sl]
        above_r[sl] |= a_r
    v_r[0] = above_r

    total = np.zeros(shape, dtype=bool)
    per_layer = [np.zeros(shape, dtype=bool) for _ in layers]
    bg = warped[0]
    gx, gy = pixel_grid(x0, y0, *shape[::-1])
    warped_bg = bilinear_sample(v_t[0].astype(np.float64), gx + bg.flow[..., 0],
                                gy + bg.flow[..., 1], BorderPolicy.ZERO) >= threshold
    per_layer[0] = warped_bg & ~v_r[0]
    total |= per_layer[0]
    for wl in warped[1:]:
        if wl is None or not v_t[wl.index].any():
            continue
        sl = (slice(wl.window[1] - y0, wl.window[3] - y0), slice(wl.window[0] - x0, wl.window[2] - x0))
        hv = bilinear_sample(v_t[wl.index].astype(np.float64), wl.src_x, wl.src_y,
                             BorderPolicy.ZERO) >= threshold
        m = hv & ~v_r[wl.index]
        per_layer[wl.index][sl] = m
        total[sl] |= m
    nonvis = []
    for i, v in enumerate(v_r):
        full = np.zeros(shape, dtype=bool)
        if v is not None:
            if i == 0:
                full = v.copy()
            else:
                wl = warped[i]
                full[wl.window[1] - y0:wl.window[3] - y0, wl.window[0] - x0:wl.window[2] - x0] = v
        nonvis.append(full)
    return total, per_layer, nonvis


def _topmost(masks: Sequence[np.ndarray]) -> np.ndarray:
    top = np.zeros(masks[0].shape, dtype=np.int32)
    for k, m in enumerate(masks):
        top[m] = k
    return top


def oracle_occlusion(scene, threshold: float = 0.4, out_of_frame: bool = False) -> np.ndarray:
    """Forward-occupancy reference for testing; nearest-neighbour only.

    For each reference pixel, find the topmost layer present there, map the
    pixel forward with that layer's affine, round to the nearest pixel and
    report occlusion when a strictly higher layer is present at the
    destination in the target frame.  Layer presence in the reference frame
    is looked up the same way (nearest-neighbour forward map), so no warping
    code is shared with :func:`combined_occlusion`.  With ``out_of_frame``
    destinations outside the canvas are flagged too.
    """
    w, h = scene.canvas
    gx, gy = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    pts = np.stack([gx, gy], axis=-1)
    present_t = [layer.target_alpha(scene.canvas) >= threshold for layer in scene.layers]
    present_t[0] = np.ones((h, w), dtype=bool)

    dests = []
    present_r = []
    for k, layer in enumerate(scene.layers):
        d = np.floor(layer.transform.apply(pts) + 0.5).astype(np.int64)
        inside = (d[..., 0] >= 0) & (d[..., 0] < w) & (d[..., 1] >= 0) & (d[..., 1] < h)
        dests.append((d, inside))
        if k == 0:
            present_r.append(np.ones((h, w), dtype=bool))
        else:
            p = np.zeros((h, w), dtype=bool)
            dx, dy = d[..., 0][inside], d[..., 1][inside]
            p[inside] = present_t[k][dy, dx]
            present_r.append(p)

    top_r = _topmost(present_r)
    top_t = _topmost(present_t)
    occ = np.zeros((h, w), dtype=bool)
    for k in range(len(scene.layers)):
        sel = top_r == k
        d, inside = dests[k]
        hit = sel & inside
        occ[hit] = top_t[d[..., 1][hit], d[..., 0][hit]] > k
        if out_of_frame:
            occ |= sel & ~inside
    return occ

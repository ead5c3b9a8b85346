import numpy as np
import pytest

from flowgen.assets import DEMO_ASSET_DIR, cached_catalog
from flowgen.compositor import Layer, Scene
from flowgen.geometry import AffineParams


@pytest.fixture(scope="session")
def catalog():
    return cached_catalog(DEMO_ASSET_DIR)


def disc_rgba(size, rng, soft=True):
    """Textured disc segment with an antialiased (or hard) alpha edge."""
    yy, xx = np.mgrid[:size, :size] + 0.5
    r = np.hypot(xx - size / 2, yy - size / 2)
    alpha = np.clip(size / 2 - r + 0.5, 0, 1) if soft else (r <= size / 2).astype(float)
    rgb = rng.random((size, size, 3))
    return np.concatenate([rgb, alpha[..., None]], axis=2)


def rect_rgba(w, h, color=(1.0, 0.0, 0.0), alpha=1.0):
    img = np.empty((h, w, 4))
    img[..., :3] = color
    img[..., 3] = alpha
    return img


def make_scene(canvas, background, foregrounds, bg_params=None):
    """Scene from explicit layers; ``foregrounds`` holds (rgba, offset, AffineParams)."""
    layers = [Layer(0, background, (0, 0), bg_params or AffineParams())]
    for img, offset, params in foregrounds:
        layers.append(Layer(len(layers), img, offset, params))
    return Scene(tuple(canvas), layers)


def random_scene(rng, canvas=(64, 48), n_fg=4, integer=True, max_shift=8):
    """Small random scene used by the occlusion equivalence suites.

    Integer scenes use pure integer translations; otherwise every layer also
    gets rotation within +-pi/100 and scale in [0.85, 1.15].
    """
    w, h = canvas
    bg = rng.random((h, w, 3))

    def params(pivot):
        t = tuple(float(v) for v in rng.integers(-max_shift, max_shift + 1, size=2))
        if integer:
            return AffineParams(t, 0.0, 1.0, pivot)
        t = tuple(float(v) for v in rng.uniform(-max_shift, max_shift, size=2))
        return AffineParams(t, float(rng.uniform(-np.pi / 100, np.pi / 100)),
                            float(rng.uniform(0.85, 1.15)), pivot)

    fgs = []
    for _ in range(n_fg):
        size = int(rng.integers(8, 20))
        img = disc_rgba(size, rng) if rng.random() < 0.5 else rect_rgba(
            size, int(rng.integers(6, 20)), tuple(rng.random(3)))
        ih, iw = img.shape[:2]
        ox = int(rng.integers(0, w - iw + 1))
        oy = int(rng.integers(0, h - ih + 1))
        pivot = (ox + iw / 2.0, oy + ih / 2.0)
        fgs.append((img, (ox, oy), params(pivot)))
    return make_scene(canvas, bg, fgs, params(((w - 1) / 2, (h - 1) / 2)))


# -- acceptance reporting -----------------------------------------------------------

ACCEPTANCE_LINES = []


def record(criterion, ok, detail):
    """Log one acceptance verdict, then fail the test if it did not pass."""
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}")
    assert ok, f"{criterion}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

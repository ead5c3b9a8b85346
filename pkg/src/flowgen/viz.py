"""Flow colour coding and report figures."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def make_colorwheel() -> np.ndarray:
    """The 55-entry Middlebury colour wheel, RGB in [0, 1]."""
    RY, YG, GC, CB, BM, MR = 15, 6, 4, 11, 13, 6
    wheel = np.zeros((RY + YG + GC + CB + BM + MR, 3))
    col = 0
    wheel[col:col + RY, 0] = 1
    wheel[col:col + RY, 1] = np.arange(RY) / RY
    col += RY
    wheel[col:col + YG, 0] = 1 - np.arange(YG) / YG
    wheel[col:col + YG, 1] = 1
    col += YG
    wheel[col:col + GC, 1] = 1
    wheel[col:col + GC, 2] = np.arange(GC) / GC
    col += GC
    wheel[col:col + CB, 1] = 1 - np.arange(CB) / CB
    wheel[col:col + CB, 2] = 1
    col += CB
    wheel[col:col + BM, 2] = 1
    wheel[col:col + BM, 0] = np.arange(BM) / BM
    col += BM
    wheel[col:col + MR, 2] = 1 - np.arange(MR) / MR
    wheel[col:col + MR, 0] = 1
    return wheel


def flow_to_color(flow: np.ndarray, max_magnitude: float | None = None) -> np.ndarray:
    """Hue from direction, saturation from magnitude; zero flow is white.

    Magnitudes are normalised by ``max_magnitude``, by default the 99th
    percentile of the field, and saturate beyond it.
    """
    u = np.asarray(flow[..., 0], dtype=np.float64)
    v = np.asarray(flow[..., 1], dtype=np.float64)
    mag = np.hypot(u, v)
    if max_magnitude is None:
        max_magnitude = float(np.percentile(mag, 99))
    rad = np.clip(mag / max(max_magnitude, 1e-12), 0.0, 1.0)

    wheel = make_colorwheel()
    n = wheel.shape[0]
    angle = np.arctan2(-v, -u) / np.pi
    fk = (angle + 1) / 2 * (n - 1)
    k0 = np.floor(fk).astype(int)
    k1 = (k0 + 1) % n
    f = (fk - k0)[..., None]
    col = (1 - f) * wheel[k0] + f * wheel[k1]
    return 1 - rad[..., None] * (1 - col)


def occlusion_overlay(frame: np.ndarray, mask: np.ndarray, color=(1.0, 0.0, 0.0), opacity=0.6) -> np.ndarray:
    out = np.array(frame, dtype=np.float64)
    m = np.asarray(mask, dtype=bool)
    out[m] = (1 - opacity) * out[m] + opacity * np.asarray(color)
    return out


def plot_histogram(hist, path, title="", xlabel="flow magnitude [px]"):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    widths = np.diff(hist.edges)
    ax.bar(hist.edges[:-1], hist.counts, width=widths, align="edge", color="tab:blue", linewidth=0)
    if hist.counts.any():
        ax.set_yscale("log")
    ax.set_xlim(hist.edges[0], hist.edges[-1])
    ax.set_xlabel(xlabel)
    ax.set_ylabel("count")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)


def plot_preview(frame_a, frame_b, flow_rgb, overlay, path):
    fig, axes = plt.subplots(2, 2, figsize=(10, 7.5))
    panels = [(frame_a, "frame A (reference)"), (frame_b, "frame B (target)"),
              (flow_rgb, "flow"), (overlay, "occlusion")]
    for ax, (img, title) in zip(axes.ravel(), panels):
        ax.imshow(np.clip(img, 0, 1))
        ax.set_title(title)
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)

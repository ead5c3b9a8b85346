"""Background and foreground-segment ingestion.

Backgrounds are 8-bit RGB (or grey) PNG/JPEG files resized to the canvas.
Segments are 8-bit straight-alpha RGBA PNGs that get trimmed to their tight
alpha bounding box.  A small procedurally drawn corpus ships with the
package so the generator runs without any external dataset.
"""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import List, Optional, Tuple

import cv2
import numpy as np
from scipy import ndimage

from .errors import AssetError, ParameterError

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}
CANVAS = (712, 584)
MIN_OPAQUE_FRACTION = 0.01
OPAQUE_THRESHOLD = 0.4

DEMO_ASSET_DIR = Path(__file__).resolve().parent / "data" / "demo_assets"


@dataclass(frozen=True, eq=False)
class Segment:
    """Trimmed straight-alpha RGBA cutout.

    ``image`` is an ``(h, w, 4)`` float64 array in [0, 1]; ``centroid`` is
    the alpha-weighted ``(x, y)`` centroid in trimmed coordinates.
    """

    image: np.ndarray
    centroid: Tuple[float, float]
    source_id: str

    @property
    def size(self) -> Tuple[int, int]:
        return self.image.shape[1], self.image.shape[0]

    @property
    def alpha(self) -> np.ndarray:
        return self.image[..., 3]


@dataclass(frozen=True)
class AssetEntry:
    path: str  # relative POSIX path under the catalog root
    sha256: str


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _read_8bit(path, flags) -> np.ndarray:
    data = np.fromfile(str(path), dtype=np.uint8)
    img = cv2.imdecode(data, flags) if data.size else None
    if img is None:
        raise AssetError(f"cannot decode image file: {path}")
    if img.dtype != np.uint8:
        raise AssetError(f"expected an 8-bit image: {path}")
    if img.size == 0:
        raise AssetError(f"zero-size image: {path}")
    return img


def resize_bilinear(img: np.ndarray, size: Tuple[int, int]) -> np.ndarray:
    """Half-pixel-centred bilinear resize to ``size = (width, height)``."""
    w, h = size
    if img.shape[1] == w and img.shape[0] == h:
        return img.copy()
    out = cv2.resize(img, (w, h), interpolation=cv2.INTER_LINEAR)
    if img.ndim == 3 and out.ndim == 2:
        out = out[..., None]
    return out


def load_background(path, target: Tuple[int, int] = CANVAS) -> np.ndarray:
    """Decode an image and stretch it to ``target`` (aspect ratio ignored)."""
    img = _read_8bit(path, cv2.IMREAD_COLOR)
    rgb = img[..., ::-1].astype(np.float64) / 255.0
    return np.clip(resize_bilinear(rgb, target), 0.0, 1.0)


def segment_from_rgba(rgba: np.ndarray, source_id: str = "") -> Segment:
    """Trim an RGBA float image to its support and compute its centroid."""
    rgba = np.asarray(rgba, dtype=np.float64)
    if rgba.ndim != 3 or rgba.shape[2] != 4:
        raise AssetError(f"segment {source_id!r} must be RGBA, got shape {rgba.shape}")
    alpha = rgba[..., 3]
    ys, xs = np.nonzero(alpha > 0)
    if ys.size == 0:
        raise AssetError(f"segment {source_id!r} is fully transparent")
    rgba = rgba[ys.min():ys.max() + 1, xs.min():xs.max() + 1].copy()
    alpha = rgba[..., 3]
    if np.mean(alpha > OPAQUE_THRESHOLD) < MIN_OPAQUE_FRACTION:
        raise AssetError(f"segment {source_id!r} has fewer than 1% of pixels with alpha > 0.4")
    gy, gx = np.mgrid[:alpha.shape[0], :alpha.shape[1]]
    total = alpha.sum()
    centroid = (float((alpha * gx).sum() / total), float((alpha * gy).sum() / total))
    rgba.setflags(write=False)
    return Segment(rgba, centroid, source_id)


def load_segment(path, source_id: Optional[str] = None) -> Segment:
    img = _read_8bit(path, cv2.IMREAD_UNCHANGED)
    if img.ndim != 3 or img.shape[2] != 4:
        raise AssetError(f"segment file must be RGBA: {path}")
    rgba = img[..., [2, 1, 0, 3]].astype(np.float64) / 255.0
    return segment_from_rgba(rgba, source_id if source_id is not None else str(path))


def gaussian_kernel1d(kernel: int) -> np.ndarray:
    # sigma rule used by OpenCV when sigma is left unspecified
    sigma = 0.3 * ((kernel - 1) / 2.0 - 1.0) + 0.8
    r = (kernel - 1) // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def blur_segment(s: Segment, kernel: int) -> Segment:
    """Gaussian-blur the RGB channels; alpha and centroid are kept.

    Uses periodic boundaries so the mean colour is preserved exactly.
    """
    if not isinstance(kernel, (int, np.integer)) or kernel < 1 or kernel % 2 == 0:
        raise ParameterError(f"blur kernel must be an odd integer >= 1, got {kernel}")
    if kernel == 1:
        return s
    k = gaussian_kernel1d(int(kernel))
    rgb = s.image[..., :3]
    rgb = ndimage.convolve1d(rgb, k, axis=0, mode="wrap")
    rgb = ndimage.convolve1d(rgb, k, axis=1, mode="wrap")
    img = np.concatenate([np.clip(rgb, 0.0, 1.0), s.image[..., 3:]], axis=2)
    img.setflags(write=False)
    return Segment(img, s.centroid, s.source_id)


def _scan(root: Path) -> List[Path]:
    if not root.is_dir():
        raise AssetError(f"asset directory does not exist: {root}")
    files = [p for p in root.rglob("*") if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES]
    files.sort(key=lambda p: p.relative_to(root).as_posix())
    if not files:
        raise AssetError(f"no image files found under {root}")
    return files


class AssetCatalog:
    """Ordered backgrounds (by reference) and segments (loaded in memory)."""

    def __init__(self, bg_root: Path, backgrounds: List[AssetEntry],
                 segments: List[Segment], segment_entries: List[AssetEntry],
                 canvas: Tuple[int, int] = CANVAS):
        if not backgrounds or not segments:
            raise AssetError("catalog needs at least one background and one segment")
        self.bg_root = Path(bg_root)
        self.backgrounds = list(backgrounds)
        self.segments = list(segments)
        self.segment_entries = list(segment_entries)
        self.canvas = tuple(canvas)
        self._bg_cache = {}

    def background(self, index: int) -> np.ndarray:
        img = self._bg_cache.get(index)
        if img is None:
            img = load_background(self.bg_root / self.backgrounds[index].path, self.canvas)
            img.setflags(write=False)
            if len(self._bg_cache) >= 16:
                self._bg_cache.pop(next(iter(self._bg_cache)))
            self._bg_cache[index] = img
        return img

    def digests(self) -> dict:
        return {
            "backgrounds": [{"path": e.path, "sha256": e.sha256} for e in self.backgrounds],
            "segments": [{"path": e.path, "sha256": e.sha256} for e in self.segment_entries],
        }

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_bg_cache"] = {}
        return state


def build_catalog(bg_dir, seg_dir, canvas: Tuple[int, int] = CANVAS,
                  max_workers: Optional[int] = None) -> AssetCatalog:
    """Scan both directories recursively in lexicographic relative-path order.

    Every file is decoded once so that a corrupt file fails here, naming
    the file, rather than in the middle of a generation run.
    """
    bg_root, seg_root = Path(bg_dir), Path(seg_dir)
    bg_files, seg_files = _scan(bg_root), _scan(seg_root)

    def check_bg(p):
        _read_8bit(p, cv2.IMREAD_UNCHANGED)
        return AssetEntry(p.relative_to(bg_root).as_posix(), sha256_file(p))

    def load_seg(p):
        rel = p.relative_to(seg_root).as_posix()
        return AssetEntry(rel, sha256_file(p)), load_segment(p, source_id=rel)

    workers = max_workers or min(8, os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        backgrounds = list(pool.map(check_bg, bg_files))
        seg_pairs = list(pool.map(load_seg, seg_files))
    for s in seg_pairs:
        w, h = s[1].size
        if w > canvas[0] or h > canvas[1]:
            raise AssetError(f"segment {s[0].path} ({w}x{h}) is larger than the canvas")
    return AssetCatalog(bg_root, backgrounds, [s for _, s in seg_pairs],
                        [e for e, _ in seg_pairs], canvas)


def default_asset_root(explicit: Optional[str] = None) -> Path:
    """Explicit path, else ``$FLOWGEN_ASSET_DIR``, else the bundled corpus."""
    if explicit:
        return Path(explicit)
    env = os.environ.get("FLOWGEN_ASSET_DIR")
    if env:
        return Path(env)
    return DEMO_ASSET_DIR


def catalog_from_root(root, canvas: Tuple[int, int] = CANVAS) -> AssetCatalog:
    root = Path(root)
    return build_catalog(root / "backgrounds", root / "segments", canvas)


@lru_cache(maxsize=4)
def _cached_catalog(root: str, canvas: Tuple[int, int]) -> AssetCatalog:
    return catalog_from_root(root, canvas)


def cached_catalog(root, canvas: Tuple[int, int] = CANVAS) -> AssetCatalog:
    return _cached_catalog(str(Path(root).resolve()), tuple(canvas))


# -- procedural demo corpus -------------------------------------------------

def _smooth_noise(rng, h, w, scale):
    coarse = rng.random((max(2, h // scale), max(2, w // scale), 3))
    return cv2.resize(coarse, (w, h), interpolation=cv2.INTER_CUBIC)


def _demo_background(rng, w, h):
    gy, gx = np.mgrid[:h, :w] / np.array(max(w, h), dtype=np.float64)
    img = 0.5 * _smooth_noise(rng, h, w, 24) + 0.25 * _smooth_noise(rng, h, w, 6)
    for _ in range(3):
        fx, fy = rng.uniform(-30, 30, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        color = rng.random(3)
        wave = 0.5 + 0.5 * np.sin(2 * np.pi * (fx * gx + fy * gy) + phase)
        img += 0.12 * wave[..., None] * color
    img -= img.min()
    return img / img.max()


def _demo_shape_alpha(rng, size, supersample=4):
    n = size * supersample
    gy, gx = (np.mgrid[:n, :n] + 0.5) / n * 2.0 - 1.0
    kind = rng.integers(3)
    if kind == 0:
        a, b = rng.uniform(0.5, 0.95, size=2)
        rot = rng.uniform(0, np.pi)
        xr = gx * np.cos(rot) + gy * np.sin(rot)
        yr = -gx * np.sin(rot) + gy * np.cos(rot)
        inside = (xr / a) ** 2 + (yr / b) ** 2 <= 1.0
    elif kind == 1:
        k = int(rng.integers(5, 9))
        r = np.hypot(gx, gy)
        th = np.arctan2(gy, gx)
        radius = 0.6 + 0.3 * np.cos(k * th + rng.uniform(0, np.pi))
        inside = r <= radius
    else:
        hw, hh = rng.uniform(0.4, 0.9, size=2)
        inside = (np.abs(gx) <= hw) & (np.abs(gy) <= hh)
        inside &= ~((np.abs(gx) < hw * 0.4) & (gy < 0))
    a = inside.reshape(size, supersample, size, supersample).mean(axis=(1, 3))
    return a


def _demo_texture(rng, size):
    gy, gx = np.mgrid[:size, :size] / float(size)
    base = _smooth_noise(rng, size, size, 8)
    kind = rng.integers(3)
    if kind == 0:
        f = rng.uniform(3, 10)
        pattern = (np.sin(2 * np.pi * f * (gx + gy)) > 0).astype(float)
    elif kind == 1:
        f = int(rng.integers(3, 9))
        pattern = ((np.floor(gx * f) + np.floor(gy * f)) % 2).astype(float)
    else:
        pattern = _smooth_noise(rng, size, size, 3)[..., 0]
    color = rng.random(3)
    img = 0.6 * base + 0.4 * pattern[..., None] * color
    return np.clip(img, 0.0, 1.0)


def write_demo_corpus(root, seed: int = 0, n_backgrounds: int = 6, n_segments: int = 24,
                      bg_size: Tuple[int, int] = (356, 292)) -> Path:
    """Write procedurally drawn backgrounds and RGBA segments under ``root``."""
    root = Path(root)
    rng = np.random.Generator(np.random.Philox(seed))
    (root / "backgrounds").mkdir(parents=True, exist_ok=True)
    (root / "segments").mkdir(parents=True, exist_ok=True)
    for i in range(n_backgrounds):
        img = _demo_background(rng, *bg_size)
        out = np.rint(img * 255).astype(np.uint8)[..., ::-1]
        cv2.imwrite(str(root / "backgrounds" / f"bg_{i:03d}.png"), out)
    for i in range(n_segments):
        size = int(rng.integers(48, 161))
        alpha = _demo_shape_alpha(rng, size)
        rgb = _demo_texture(rng, size)
        rgba = np.concatenate([rgb, alpha[..., None]], axis=2)
        out = np.rint(rgba * 255).astype(np.uint8)[..., [2, 1, 0, 3]]
        cv2.imwrite(str(root / "segments" / f"seg_{i:03d}.png"), out)
    return root

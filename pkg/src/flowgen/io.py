"""File formats: Middlebury .flo, KITTI 16-bit flow PNG, 8-bit PNG frames
and masks, JSON run configs and dataset manifests."""

from __future__ import annotations

import json
import os
from pathlib import Path

import cv2
import numpy as np

from .config import RunConfig
from .errors import ConfigError, FormatError, RangeError

FLO_TAG = 202021.25
KITTI_SCALE = 64.0
KITTI_OFFSET = 2 ** 15
MANIFEST_VERSION = "1"


# -- .flo ----------------------------------------------------------------------

def encode_flo(flow: np.ndarray) -> bytes:
    flow = np.asarray(flow)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise FormatError(f"flow must have shape (H, W, 2), got {flow.shape}")
    if not np.all(np.isfinite(flow)):
        raise FormatError("flow contains non-finite values")
    h, w = flow.shape[:2]
    header = np.array([FLO_TAG], "<f4").tobytes() + np.array([w, h], "<i4").tobytes()
    return header + np.ascontiguousarray(flow, dtype="<f4").tobytes()


def decode_flo(buf: bytes, name="<bytes>") -> np.ndarray:
    if len(buf) < 12:
        raise FormatError(f"{name}: truncated .flo header")
    tag = np.frombuffer(buf, "<f4", count=1)[0]
    if tag != np.float32(FLO_TAG):
        raise FormatError(f"{name}: bad .flo tag {tag!r}")
    w, h = (int(v) for v in np.frombuffer(buf, "<i4", count=2, offset=4))
    if w <= 0 or h <= 0:
        raise FormatError(f"{name}: nonpositive dimensions {w}x{h}")
    n = 2 * w * h
    if len(buf) < 12 + 4 * n:
        raise FormatError(f"{name}: truncated .flo payload")
    return np.frombuffer(buf, "<f4", count=n, offset=12).astype(np.float32).reshape(h, w, 2)


def write_flo(flow: np.ndarray, path) -> None:
    Path(path).write_bytes(encode_flo(flow))


def read_flo(path) -> np.ndarray:
    """Read a .flo file as a float32 ``(H, W, 2)`` array."""
    return decode_flo(Path(path).read_bytes(), str(path))


# -- KITTI flow PNG ------------------------------------------------------------

def write_kitti_flow(flow: np.ndarray, valid, path) -> None:
    """16-bit RGB PNG: ``R, G = flow * 64 + 2**15``, ``B = valid``."""
    flow = np.asarray(flow, dtype=np.float64)
    if valid is None:
        valid = np.ones(flow.shape[:2], dtype=bool)
    enc = np.rint(flow * KITTI_SCALE + KITTI_OFFSET)
    bad = np.any((enc < 0) | (enc > 65535) | ~np.isfinite(enc), axis=2)
    if bad.any():
        raise RangeError(f"{int(bad.sum())} pixel(s) exceed the KITTI flow range (|flow| < 512)")
    out = np.empty(flow.shape[:2] + (3,), dtype=np.uint16)
    out[..., :2] = enc.astype(np.uint16)
    out[..., 2] = np.asarray(valid, dtype=bool)
    if not cv2.imwrite(str(path), out[..., ::-1]):
        raise OSError(f"could not write {path}")


def read_kitti_flow(path):
    """Return ``(flow, valid)`` from a KITTI flow PNG."""
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None or img.dtype != np.uint16 or img.ndim != 3 or img.shape[2] != 3:
        raise FormatError(f"{path}: not a 16-bit 3-channel PNG")
    img = img[..., ::-1].astype(np.float64)
    flow = (img[..., :2] - KITTI_OFFSET) / KITTI_SCALE
    return flow, img[..., 2] > 0


# -- 8-bit images ----------------------------------------------------------------

def quantize(img: np.ndarray) -> np.ndarray:
    """[0, 1] floats to uint8, rounding half to even."""
    return np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_png(img: np.ndarray, path) -> None:
    q = quantize(img)
    if q.ndim == 3:
        q = q[..., ::-1]
    if not cv2.imwrite(str(path), q):
        raise OSError(f"could not write {path}")


def read_png(path) -> np.ndarray:
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise FormatError(f"cannot decode {path}")
    if img.ndim == 3:
        img = img[..., ::-1]
    return img.astype(np.float64) / 255.0


def write_mask(mask: np.ndarray, path) -> None:
    """Binary mask as 8-bit PNG, 0 = visible, 255 = occluded."""
    out = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    if not cv2.imwrite(str(path), out):
        raise OSError(f"could not write {path}")


def read_mask(path) -> np.ndarray:
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None or img.ndim != 2:
        raise FormatError(f"{path}: not a single-channel mask PNG")
    return img > 127


# -- samples ---------------------------------------------------------------------

SAMPLE_FILES = ("frame_a.png", "frame_b.png", "flow.flo", "occ.png")


def write_sample(sample, directory, kitti: bool = False, oob_mask: bool = False) -> dict:
    """Write one sample's files; returns ``{role: filename}``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = {"frame_a": "frame_a.png", "frame_b": "frame_b.png", "flow": "flow.flo", "occlusion": "occ.png"}
    write_png(sample.frame_a, d / files["frame_a"])
    write_png(sample.frame_b, d / files["frame_b"])
    write_flo(sample.flow, d / files["flow"])
    write_mask(sample.occlusion, d / files["occlusion"])
    if kitti:
        files["flow_kitti"] = "flow_kitti.png"
        write_kitti_flow(sample.flow, np.ones(sample.flow.shape[:2], bool), d / files["flow_kitti"])
    if oob_mask:
        files["occlusion_oob"] = "occ_oob.png"
        write_mask(sample.occlusion_extended, d / files["occlusion_oob"])
    return files


# -- config and manifest -----------------------------------------------------------

def read_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(str(path), f"invalid JSON: {e}") from None
    except OSError as e:
        raise ConfigError(str(path), f"cannot read: {e.strerror}") from None
    return RunConfig.from_dict(data)


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_json(obj, path) -> None:
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(dump_json(obj))
    os.replace(tmp, path)


def read_manifest(path) -> dict:
    p = Path(path)
    if p.is_dir():
        p = p / "manifest.json"
    try:
        m = json.loads(p.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise FormatError(f"cannot read manifest {p}: {e}") from None
    for key in ("format_version", "master_seed", "config", "catalog", "sample_count", "samples"):
        if key not in m:
            raise FormatError(f"manifest {p} lacks {key!r}")
    return m

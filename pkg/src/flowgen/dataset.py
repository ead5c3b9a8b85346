"""Dataset-level operations: parallel generation, manifests, validation,
statistics and throughput benchmarking."""

from __future__ import annotations

import logging
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import ndimage

from . import io as fio
from .assets import AssetCatalog, cached_catalog, default_asset_root, sha256_file
from .compositor import generate_sample
from .config import RunConfig
from .errors import AssetError, FormatError
from .geometry import BorderPolicy, bilinear_sample, pixel_grid
from .metrics import FlowStats, epe, acc_le1, fl_rate, magnitude_histogram, motion_histogram

log = logging.getLogger(__name__)

PHOTOMETRIC_TOLERANCE = 0.02
# a pixel whose residual exceeds OUTLIER_RESIDUAL is photometrically
# inconsistent; more than OUTLIER_FRACTION of them means the occlusion mask
# misses occluded pixels
OUTLIER_RESIDUAL = 0.1
OUTLIER_FRACTION = 0.005
SAMPLES_DIR = "samples"


def sample_dirname(index: int) -> str:
    return f"{SAMPLES_DIR}/{index:06d}"


def resolve_catalog(cfg: RunConfig) -> AssetCatalog:
    return cached_catalog(default_asset_root(cfg.assets), cfg.canvas)


# -- generation -------------------------------------------------------------------

_worker_state = {}


def _init_worker(catalog, cfg, out, master_seed):
    _worker_state.update(catalog=catalog, cfg=cfg, out=out, seed=master_seed)


def _produce(index: int) -> dict:
    from .sampling import SampleSeed

    st = _worker_state
    cfg = st["cfg"]
    sample = generate_sample(SampleSeed(st["seed"], index), st["catalog"], cfg)
    rel = sample_dirname(index)
    d = Path(st["out"]) / rel
    files = fio.write_sample(sample, d, kitti=cfg.kitti, oob_mask=cfg.oob_mask)
    entry = {
        "index": index,
        "dir": rel,
        "files": {role: {"path": f"{rel}/{name}", "sha256": sha256_file(d / name)}
                  for role, name in sorted(files.items())},
        "scene": sample.provenance["scene"],
    }
    if "counters" in sample.provenance:
        entry["counters"] = sample.provenance["counters"]
    return entry


def _report(done, total):
    step = max(1, total // 10)
    if done % step == 0 or done == total:
        log.info("generated %d/%d samples", done, total)


def generate_dataset(out, cfg: RunConfig, catalog: AssetCatalog, sample_count: int,
                     master_seed: int, workers: int = 1, progress: bool = False) -> dict:
    """Generate ``sample_count`` samples under ``out`` and write the manifest.

    The output is a pure function of ``(cfg, catalog, master_seed)``; the
    number of workers and their scheduling do not affect any byte.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    args = (catalog, cfg, str(out), master_seed)
    entries = []
    if workers == 1:
        _init_worker(*args)
        for i in range(sample_count):
            entries.append(_produce(i))
            if progress:
                _report(i + 1, sample_count)
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=args) as pool:
            for n, e in enumerate(pool.map(_produce, range(sample_count))):
                entries.append(e)
                if progress:
                    _report(n + 1, sample_count)
    entries.sort(key=lambda e: e["index"])
    manifest = {
        "format_version": fio.MANIFEST_VERSION,
        "master_seed": master_seed,
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "catalog": catalog.digests(),
        "sample_count": sample_count,
        "samples": entries,
    }
    fio.write_json(manifest, out / "manifest.json")
    return manifest


def regenerate(manifest_path, out, workers: int = 1) -> dict:
    """Rebuild a dataset from its manifest, checking the asset digests."""
    m = fio.read_manifest(manifest_path)
    cfg = RunConfig.from_dict(m["config"])
    catalog = resolve_catalog(cfg)
    if catalog.digests() != m["catalog"]:
        raise AssetError("asset catalog digests differ from the manifest")
    return generate_dataset(out, cfg, catalog, m["sample_count"], m["master_seed"], workers)


# -- photometric consistency ------------------------------------------------------------

def flow_boundaries(flow: np.ndarray, labels: Optional[np.ndarray] = None, jump: float = 0.5) -> np.ndarray:
    """Pixels within 1 px (8-neighbourhood) of a flow paste boundary.

    Uses the paste labels when available, otherwise flags neighbours whose
    flow differs by more than ``jump`` px.
    """
    footprint = np.ones((3, 3), dtype=bool)
    if labels is not None:
        hi = ndimage.maximum_filter(labels, footprint=footprint, mode="nearest")
        lo = ndimage.minimum_filter(labels, footprint=footprint, mode="nearest")
        return hi != lo
    edge = np.zeros(flow.shape[:2], dtype=bool)
    dx = np.linalg.norm(np.diff(flow, axis=1), axis=-1) > jump
    dy = np.linalg.norm(np.diff(flow, axis=0), axis=-1) > jump
    edge[:, 1:] |= dx
    edge[:, :-1] |= dx
    edge[1:] |= dy
    edge[:-1] |= dy
    return ndimage.binary_dilation(edge, structure=footprint)


def photometric_residuals(frame_a, frame_b, flow, occlusion, labels=None):
    """Per-pixel ``|A(x) - B(x + flow(x))|`` (channel mean) and the mask of
    pixels it is meaningful on: not occluded, target lookup in bounds and
    not within 1 px of a flow paste boundary."""
    frame_a = np.asarray(frame_a, dtype=np.float64)
    h, w = flow.shape[:2]
    gx, gy = pixel_grid(0, 0, w, h)
    tx = gx + flow[..., 0]
    ty = gy + flow[..., 1]
    inside = (tx >= 0) & (tx <= w - 1) & (ty >= 0) & (ty <= h - 1)
    sel = inside & ~np.asarray(occlusion, dtype=bool) & ~flow_boundaries(flow, labels)
    warped = bilinear_sample(np.asarray(frame_b, dtype=np.float64), tx, ty, BorderPolicy.CLAMP)
    return np.abs(frame_a - warped).mean(axis=-1), sel


def photometric_error(frame_a, frame_b, flow, occlusion, labels=None):
    """Mean photometric residual; returns ``(mean_error, pixel_count)``."""
    err, sel = photometric_residuals(frame_a, frame_b, flow, occlusion, labels)
    if not sel.any():
        return 0.0, 0
    return float(err[sel].mean()), int(sel.sum())


# -- validation ---------------------------------------------------------------------------

def validate_sample(root: Path, entry: dict, crop) -> dict:
    """Re-check one written sample; returns ``{"index", "ok", "checks", "errors"}``."""
    errors, checks = [], {}
    files = entry["files"]
    for role, f in files.items():
        p = root / f["path"]
        if not p.is_file():
            errors.append(f"{f['path']}: missing")
        elif sha256_file(p) != f["sha256"]:
            errors.append(f"{f['path']}: sha256 differs from manifest")
    checks["integrity"] = not errors

    try:
        flo_path = root / files["flow"]["path"]
        raw = flo_path.read_bytes()
        flow = fio.decode_flo(raw, files["flow"]["path"])
        checks["flo_roundtrip"] = fio.encode_flo(flow) == raw
        if not checks["flo_roundtrip"]:
            errors.append(f"{files['flow']['path']}: re-encoding is not byte-identical")
        frame_a = fio.read_png(root / files["frame_a"]["path"])
        frame_b = fio.read_png(root / files["frame_b"]["path"])
        occ_raw = fio.read_png(root / files["occlusion"]["path"])
    except (FormatError, OSError, KeyError) as e:
        errors.append(str(e))
        return {"index": entry["index"], "ok": False, "checks": checks, "errors": errors}

    w, h = crop
    shapes_ok = (flow.shape == (h, w, 2) and frame_a.shape == (h, w, 3)
                 and frame_b.shape == (h, w, 3) and occ_raw.shape == (h, w))
    checks["dimensions"] = shapes_ok
    if not shapes_ok:
        errors.append(f"sample {entry['index']}: raster dimensions are not {w}x{h}")
        return {"index": entry["index"], "ok": False, "checks": checks, "errors": errors}
    checks["flow_finite"] = bool(np.all(np.isfinite(flow)))
    if not checks["flow_finite"]:
        errors.append(f"{files['flow']['path']}: non-finite flow values")
    checks["occlusion_binary"] = bool(np.all((occ_raw == 0) | (occ_raw == 1)))
    if not checks["occlusion_binary"]:
        errors.append(f"{files['occlusion']['path']}: mask is not binary")
    occ = occ_raw > 0.5

    if "occlusion_oob" in files:
        oob = fio.read_mask(root / files["occlusion_oob"]["path"])
        checks["oob_superset"] = bool(np.all(oob[occ]))
        if not checks["oob_superset"]:
            errors.append(f"{files['occlusion_oob']['path']}: does not contain the occlusion mask")
    if "flow_kitti" in files:
        kflow, kvalid = fio.read_kitti_flow(root / files["flow_kitti"]["path"])
        kerr = np.abs(kflow - flow)[kvalid].max() if kvalid.any() else 0.0
        checks["kitti_roundtrip"] = bool(kerr <= 1.0 / 128 + 1e-9)
        if not checks["kitti_roundtrip"]:
            errors.append(f"{files['flow_kitti']['path']}: differs from flow.flo by {kerr:.4f} px")

    res, sel = photometric_residuals(frame_a, frame_b, flow.astype(np.float64), occ)
    n = int(sel.sum())
    err = float(res[sel].mean()) if n else 0.0
    outliers = float((res[sel] > OUTLIER_RESIDUAL).mean()) if n else 0.0
    checks["photometric_error"] = err
    checks["photometric_pixels"] = n
    checks["photometric"] = err <= PHOTOMETRIC_TOLERANCE
    if not checks["photometric"]:
        errors.append(f"sample {entry['index']}: photometric error {err:.4f} > {PHOTOMETRIC_TOLERANCE}")
    checks["outlier_fraction"] = outliers
    checks["occlusion_consistency"] = outliers <= OUTLIER_FRACTION
    if not checks["occlusion_consistency"]:
        errors.append(f"{files['occlusion']['path']}: {100 * outliers:.2f}% of non-occluded pixels are "
                      f"photometrically inconsistent (limit {100 * OUTLIER_FRACTION:.1f}%)")
    return {"index": entry["index"], "ok": not errors, "checks": checks, "errors": errors}


def validate_dataset(root) -> dict:
    root = Path(root)
    try:
        m = fio.read_manifest(root)
        cfg = RunConfig.from_dict(m["config"])
    except Exception as e:  # noqa: BLE001 - everything is reported, nothing raised
        return {"ok": False, "errors": [str(e)], "samples": []}
    reports = [validate_sample(root, e, cfg.crop) for e in m["samples"]]
    errors = [msg for r in reports for msg in r["errors"]]
    if len(m["samples"]) != m["sample_count"]:
        errors.append(f"manifest lists {len(m['samples'])} samples, expected {m['sample_count']}")
    return {"ok": not errors, "sample_count": len(reports), "errors": errors, "samples": reports}


# -- statistics ---------------------------------------------------------------------------

def foreground_translations(manifest: dict) -> np.ndarray:
    mags = [np.hypot(*fg["translation"]) for e in manifest["samples"]
            for fg in e["scene"]["foregrounds"]]
    return np.asarray(mags, dtype=np.float64)


def dataset_stats(root, bins: int = 160, estimates=None) -> dict:
    """Per-pixel flow-magnitude and foreground-translation statistics.

    ``estimates`` optionally names a directory of ``{index:06d}.flo``
    predictions, which adds EPE, Fl and <=1 accuracy.
    """
    root = Path(root)
    m = fio.read_manifest(root)
    if not m["samples"]:
        raise FormatError(f"dataset {root} has no samples")
    flows = [fio.read_flo(root / e["files"]["flow"]["path"]).astype(np.float64) for e in m["samples"]]
    hist = motion_histogram(flows, bins)
    mags = np.concatenate([np.linalg.norm(f, axis=-1).ravel() for f in flows])
    fg = foreground_translations(m)
    result = {
        "samples": len(flows),
        "pixels": int(mags.size),
        "flow_magnitude": {
            "mean": float(mags.mean()),
            "median": float(np.median(mags)),
            "p99": float(np.percentile(mags, 99)),
            "max": float(mags.max()),
        },
        "fg_translation": {
            "count": int(fg.size),
            "mean": float(fg.mean()) if fg.size else None,
        },
        "histogram": hist,
        "fg_histogram": magnitude_histogram(fg, bins),
    }
    if estimates is not None:
        est = [fio.read_flo(Path(estimates) / f"{e['index']:06d}.flo") for e in m["samples"]]
        gt_all = np.concatenate([f.reshape(-1, 2) for f in flows])
        est_all = np.concatenate([np.asarray(f, np.float64).reshape(-1, 2) for f in est])
        result["flow_stats"] = FlowStats(epe(est_all, gt_all), fl_rate(est_all, gt_all),
                                         acc_le1(est_all, gt_all), hist)
    return result


# -- throughput -------------------------------------------------------------------------------

def bench(sample_count: int = 100, fg_count: Optional[int] = 7, workers: int = 1,
          cfg: Optional[RunConfig] = None, seed: int = 0, catalog=None) -> dict:
    """Wall time of generating and encoding ``sample_count`` pairs."""
    cfg = cfg or RunConfig()
    if fg_count is not None:
        from dataclasses import replace
        cfg = cfg.replace(motion=replace(cfg.motion, fg_count_range=(fg_count, fg_count)))
    catalog = catalog or resolve_catalog(cfg)
    with tempfile.TemporaryDirectory(prefix="flowgen-bench-") as tmp:
        t0 = time.perf_counter()
        generate_dataset(tmp, cfg, catalog, sample_count, seed, workers)
        elapsed = time.perf_counter() - t0
    return {
        "samples": sample_count,
        "fg_count": fg_count,
        "workers": workers,
        "seconds": elapsed,
        "pairs_per_second": sample_count / elapsed,
        "cpu_count": os.cpu_count(),
    }

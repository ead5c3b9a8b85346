"""Flow error metrics and magnitude histograms."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .errors import ShapeError, UndefinedMetricError

HIST_RANGE = (0.0, 160.0)
HIST_BINS = 160


def _errors(est, gt, valid):
    est = np.asarray(est, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if est.shape != gt.shape or est.shape[-1] != 2:
        raise ShapeError(f"flow shapes differ or are not (..., 2): {est.shape} vs {gt.shape}")
    if valid is None:
        valid = np.ones(gt.shape[:-1], dtype=bool)
    valid = np.asarray(valid, dtype=bool)
    if valid.shape != gt.shape[:-1]:
        raise ShapeError(f"valid mask {valid.shape} does not match flow {gt.shape[:-1]}")
    if not valid.any():
        raise UndefinedMetricError("metric is undefined on an empty valid set")
    err = np.linalg.norm(est[valid] - gt[valid], axis=-1)
    mag = np.linalg.norm(gt[valid], axis=-1)
    return err, mag


def epe(est, gt, valid=None) -> float:
    """Mean end-point error over valid pixels."""
    err, _ = _errors(est, gt, valid)
    return float(err.mean())


def fl_rate(est, gt, valid=None) -> float:
    """Percentage of outliers: error > 3 px and > 5% of the true magnitude."""
    err, mag = _errors(est, gt, valid)
    return float(100.0 * np.mean((err > 3.0) & (err > 0.05 * mag)))


def acc_le1(est, gt, valid=None) -> float:
    """Fraction of pixels with error at most 1 px."""
    err, _ = _errors(est, gt, valid)
    return float(np.mean(err <= 1.0))


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray

    def __add__(self, other):
        if not np.array_equal(self.edges, other.edges):
            raise ValueError("histograms have different bins")
        return Histogram(self.edges, self.counts + other.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def rows(self):
        for lo, hi, c in zip(self.edges[:-1], self.edges[1:], self.counts):
            yield float(lo), float(hi), int(c)

    def to_csv(self) -> str:
        lines = ["bin_lo,bin_hi,count"]
        lines += [f"{lo:g},{hi:g},{c}" for lo, hi, c in self.rows()]
        return "\n".join(lines) + "\n"


def magnitude_histogram(values, bins: int = HIST_BINS, range_=HIST_RANGE) -> Histogram:
    """Fixed-width histogram; values beyond the range land in the end bins."""
    edges = np.linspace(range_[0], range_[1], bins + 1)
    v = np.clip(np.asarray(values, dtype=np.float64).ravel(), range_[0], range_[1])
    counts, _ = np.histogram(v, bins=edges)
    return Histogram(edges, counts.astype(np.int64))


def motion_histogram(flows: Iterable[np.ndarray], bins: int = HIST_BINS,
                     valid: Optional[Iterable] = None) -> Histogram:
    """Per-pixel flow-magnitude histogram accumulated over several fields."""
    total = None
    valid = iter(valid) if valid is not None else None
    for f in flows:
        mag = np.linalg.norm(np.asarray(f, dtype=np.float64), axis=-1)
        if valid is not None:
            mag = mag[np.asarray(next(valid), dtype=bool)]
        h = magnitude_histogram(mag, bins)
        total = h if total is None else total + h
    if total is None:
        raise ValueError("motion_histogram needs at least one flow field")
    return total


@dataclass
class FlowStats:
    epe: float
    fl: float
    acc_le1: float
    histogram: Optional[Histogram] = None

    def to_dict(self):
        return {"epe": self.epe, "fl": self.fl, "acc_le1": self.acc_le1}


def evaluate(est, gt, valid=None, bins: int = HIST_BINS) -> FlowStats:
    if valid is None:
        valid = np.ones(np.shape(gt)[:-1], dtype=bool)
    mag = np.linalg.norm(np.asarray(gt, dtype=np.float64), axis=-1)[np.asarray(valid, bool)]
    return FlowStats(epe(est, gt, valid), fl_rate(est, gt, valid), acc_le1(est, gt, valid),
                     magnitude_histogram(mag, bins))

"""Seeded sampling of motion coefficients, foreground counts and placements.

Every random quantity of a sample is drawn from a per-sample generator
returned by :func:`derive_rng`.  The generator is a counter-based Philox
stream keyed on ``(master_seed, sample_index)`` so samples can be produced
in any order, on any number of workers, with identical results.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np

from .errors import AssetError, ConfigError
from .geometry import AffineParams

EXP_RETRY_CAP = 64
MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class Exponential:
    """Magnitude density proportional to ``exp(-m / T)`` on ``[0, max]``."""

    T: float = 20.0
    max: float = 150.0
    kind = "exponential"

    def __post_init__(self):
        if not self.T > 0:
            raise ConfigError("fg_translation.T", "must be > 0")
        if not self.max > 0:
            raise ConfigError("fg_translation.max", "must be > 0")

    def to_dict(self):
        return {"kind": self.kind, "T": self.T, "max": self.max}


@dataclass(frozen=True)
class UniformMagnitude:
    max: float = 150.0
    kind = "uniform"

    def __post_init__(self):
        if not self.max > 0:
            raise ConfigError("fg_translation.max", "must be > 0")

    def to_dict(self):
        return {"kind": self.kind, "max": self.max}


@dataclass(frozen=True)
class CubedGaussian:
    """``|clip(sign(g) * |g|**3, -clip, clip)|`` with ``g ~ N(0, sigma**2)``."""

    sigma: float = 2.3
    clip: float = 150.0
    kind = "cubed_gaussian"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigError("fg_translation.sigma", "must be > 0")
        if not self.clip > 0:
            raise ConfigError("fg_translation.clip", "must be > 0")

    def to_dict(self):
        return {"kind": self.kind, "sigma": self.sigma, "clip": self.clip}


TranslationDist = Union[Exponential, UniformMagnitude, CubedGaussian]

DISTRIBUTIONS = {
    "exponential": Exponential,
    "uniform": UniformMagnitude,
    "cubed_gaussian": CubedGaussian,
}


def translation_dist_from_dict(d: dict) -> TranslationDist:
    if not isinstance(d, dict) or "kind" not in d:
        raise ConfigError("fg_translation", "must be an object with a 'kind' key")
    kind = d["kind"]
    if kind not in DISTRIBUTIONS:
        raise ConfigError("fg_translation.kind", f"must be one of {sorted(DISTRIBUTIONS)}, got {kind!r}")
    cls = DISTRIBUTIONS[kind]
    allowed = set(cls.__dataclass_fields__)
    unknown = set(d) - allowed - {"kind"}
    if unknown:
        raise ConfigError(f"fg_translation.{sorted(unknown)[0]}", "unknown field")
    kwargs = {}
    for k in allowed & set(d):
        v = d[k]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"fg_translation.{k}", "must be a number")
        kwargs[k] = float(v)
    return cls(**kwargs)


@dataclass(frozen=True)
class MotionConfig:
    """Sampling ranges for all layer motions.

    Defaults: background translation in
    [-20, 20] px per axis reset to zero 30% of the time, rotation within
    +-pi/100, scale in [0.85, 1.15], foreground translation magnitude from a
    truncated exponential (T=20, max 150) and 7 to 15 foregrounds.
    ``fg_zero_prob`` is an extension (off by default) applying the same zero
    reset to foregrounds.
    """

    bg_translation_range: float = 20.0
    bg_zero_prob: float = 0.3
    fg_zero_prob: float = 0.0
    rotation_range: float = math.pi / 100
    scale_range: Tuple[float, float] = (0.85, 1.15)
    fg_translation: TranslationDist = field(default_factory=Exponential)
    fg_count_range: Tuple[int, int] = (7, 15)

    def __post_init__(self):
        for name in ("bg_translation_range", "rotation_range"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError(name, "must be a finite number >= 0")
        for name in ("bg_zero_prob", "fg_zero_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(name, "must lie in [0, 1]")
        lo, hi = self.scale_range
        if not (0 < lo <= hi and math.isfinite(hi)):
            raise ConfigError("scale_range", "must satisfy 0 < lo <= hi")
        clo, chi = self.fg_count_range
        if not (isinstance(clo, int) and isinstance(chi, int) and 0 <= clo <= chi):
            raise ConfigError("fg_count_range", "must be integers with 0 <= lo <= hi")
        if not isinstance(self.fg_translation, tuple(DISTRIBUTIONS.values())):
            raise ConfigError("fg_translation", "must be a translation distribution")

    def to_dict(self) -> dict:
        return {
            "bg_translation_range": self.bg_translation_range,
            "bg_zero_prob": self.bg_zero_prob,
            "fg_zero_prob": self.fg_zero_prob,
            "rotation_range": self.rotation_range,
            "scale_range": list(self.scale_range),
            "fg_translation": self.fg_translation.to_dict(),
            "fg_count_range": list(self.fg_count_range),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MotionConfig":
        if not isinstance(d, dict):
            raise ConfigError("motion", "must be an object")
        known = set(cls.__dataclass_fields__)
        for k in d:
            if k not in known:
                raise ConfigError(f"motion.{k}", "unknown field")
        kwargs = {}
        for k, v in d.items():
            if k == "fg_translation":
                kwargs[k] = translation_dist_from_dict(v)
            elif k in ("scale_range", "fg_count_range"):
                if not (isinstance(v, (list, tuple)) and len(v) == 2):
                    raise ConfigError(k, "must be a [lo, hi] pair")
                if k == "fg_count_range":
                    if not all(isinstance(x, int) and not isinstance(x, bool) for x in v):
                        raise ConfigError(k, "must hold integers")
                    kwargs[k] = (v[0], v[1])
                else:
                    if not all(_is_number(x) for x in v):
                        raise ConfigError(k, "must hold numbers")
                    kwargs[k] = (float(v[0]), float(v[1]))
            else:
                if not _is_number(v):
                    raise ConfigError(k, "must be a number")
                kwargs[k] = float(v)
        return cls(**kwargs)


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


@dataclass(frozen=True)
class SampleSeed:
    master_seed: int
    sample_index: int

    def __post_init__(self):
        if not 0 <= self.master_seed <= MASK64:
            raise ConfigError("seed", "must be an unsigned 64-bit integer")
        if self.sample_index < 0:
            raise ConfigError("sample_index", "must be >= 0")


def derive_rng(seed: SampleSeed) -> np.random.Generator:
    """Independent Philox stream for one sample."""
    ss = np.random.SeedSequence([seed.master_seed, seed.sample_index])
    return np.random.Generator(np.random.Philox(ss))


def sample_translation_magnitude(rng: np.random.Generator, dist: TranslationDist,
                                 counters: Optional[Counter] = None) -> float:
    if isinstance(dist, Exponential):
        for _ in range(EXP_RETRY_CAP):
            m = rng.exponential(dist.T)
            if m <= dist.max:
                return float(m)
        if counters is not None:
            counters["exp_retry_exhausted"] += 1
        return float(dist.max)
    if isinstance(dist, UniformMagnitude):
        return float(rng.uniform(0.0, dist.max))
    if isinstance(dist, CubedGaussian):
        g = rng.normal(0.0, dist.sigma)
        v = min(max(math.copysign(abs(g) ** 3, g), -dist.clip), dist.clip)
        return abs(v)
    raise TypeError(f"unknown translation distribution {dist!r}")


def _rotation_scale(rng, cfg: MotionConfig):
    rotation = float(rng.uniform(-cfg.rotation_range, cfg.rotation_range))
    scale = float(rng.uniform(*cfg.scale_range))
    return rotation, scale


def sample_background_motion(rng: np.random.Generator, cfg: MotionConfig,
                             canvas: Tuple[int, int]) -> AffineParams:
    """Background motion; the pivot is the canvas centre."""
    r = cfg.bg_translation_range
    t = rng.uniform(-r, r, size=2)
    if rng.random() < cfg.bg_zero_prob:
        t = (0.0, 0.0)
    rotation, scale = _rotation_scale(rng, cfg)
    w, h = canvas
    return AffineParams(translation=(float(t[0]), float(t[1])), rotation=rotation,
                        scale=scale, pivot=((w - 1) / 2.0, (h - 1) / 2.0))


def sample_foreground_motion(rng: np.random.Generator, cfg: MotionConfig, segment_centroid,
                             counters: Optional[Counter] = None) -> AffineParams:
    """Foreground motion pivoting about the placed segment centroid."""
    m = sample_translation_magnitude(rng, cfg.fg_translation, counters)
    theta = rng.uniform(0.0, 2.0 * math.pi)
    if rng.random() < cfg.fg_zero_prob:
        m = 0.0
    rotation, scale = _rotation_scale(rng, cfg)
    return AffineParams(translation=(m * math.cos(theta), m * math.sin(theta)),
                        rotation=rotation, scale=scale,
                        pivot=(float(segment_centroid[0]), float(segment_centroid[1])))


def sample_foreground_count(rng: np.random.Generator, cfg: MotionConfig) -> int:
    lo, hi = cfg.fg_count_range
    return int(rng.integers(lo, hi, endpoint=True))


def sample_placement(rng: np.random.Generator, canvas: Tuple[int, int],
                     segment: Tuple[int, int], inset: float = 0.1) -> Tuple[float, float]:
    """Centroid position, uniform over the canvas shrunk by ``inset`` per side."""
    cw, ch = canvas
    sw, sh = segment
    if sw > cw or sh > ch:
        raise AssetError(f"segment {sw}x{sh} is larger than the {cw}x{ch} canvas")
    if not 0.0 <= inset < 0.5:
        raise ConfigError("placement_inset", "must lie in [0, 0.5)")
    x = rng.uniform(inset * cw, (1.0 - inset) * cw)
    y = rng.uniform(inset * ch, (1.0 - inset) * ch)
    return float(x), float(y)

"""Run configuration: motion sampling ranges plus generation options.

JSON layout (every key optional, absent keys take the defaults)::

    {
      "motion": {"bg_translation_range": 20.0, "bg_zero_prob": 0.3,
                 "fg_zero_prob": 0.0, "rotation_range": 0.0314159...,
                 "scale_range": [0.85, 1.15],
                 "fg_translation": {"kind": "exponential", "T": 20.0, "max": 150.0},
                 "fg_count_range": [7, 15]},
      "canvas": [712, 584],
      "crop": [512, 384],
      "alpha_threshold": 0.4,
      "blur_kernel": 1,
      "placement_inset": 0.1,
      "flow_paste_frame": "reference",
      "assets": null,
      "kitti": false,
      "oob_mask": false
    }
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

from .errors import ConfigError
from .sampling import MotionConfig

PASTE_FRAMES = ("reference", "target")


@dataclass(frozen=True)
class RunConfig:
    motion: MotionConfig = field(default_factory=MotionConfig)
    canvas: Tuple[int, int] = (712, 584)
    crop: Tuple[int, int] = (512, 384)
    alpha_threshold: float = 0.4
    blur_kernel: int = 1
    placement_inset: float = 0.1
    flow_paste_frame: str = "reference"
    assets: Optional[str] = None
    kitti: bool = False
    oob_mask: bool = False

    def __post_init__(self):
        for name in ("canvas", "crop"):
            v = getattr(self, name)
            if not (len(v) == 2 and all(isinstance(x, int) and x >= 1 for x in v)):
                raise ConfigError(name, "must be a [width, height] pair of positive integers")
        if self.crop[0] > self.canvas[0] or self.crop[1] > self.canvas[1]:
            raise ConfigError("crop", "must not exceed the canvas")
        if not 0.0 < self.alpha_threshold < 1.0:
            raise ConfigError("alpha_threshold", "must lie in (0, 1)")
        if not (isinstance(self.blur_kernel, int) and self.blur_kernel >= 1 and self.blur_kernel % 2 == 1):
            raise ConfigError("blur_kernel", "must be an odd integer >= 1")
        if not 0.0 <= self.placement_inset < 0.5:
            raise ConfigError("placement_inset", "must lie in [0, 0.5)")
        if self.flow_paste_frame not in PASTE_FRAMES:
            raise ConfigError("flow_paste_frame", f"must be one of {list(PASTE_FRAMES)}")

    def to_dict(self) -> dict:
        return {
            "motion": self.motion.to_dict(),
            "canvas": list(self.canvas),
            "crop": list(self.crop),
            "alpha_threshold": self.alpha_threshold,
            "blur_kernel": self.blur_kernel,
            "placement_inset": self.placement_inset,
            "flow_paste_frame": self.flow_paste_frame,
            "assets": self.assets,
            "kitti": self.kitti,
            "oob_mask": self.oob_mask,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        for k in d:
            if k not in known:
                raise ConfigError(k, "unknown field")
        kw = {}
        for k, v in d.items():
            if k == "motion":
                kw[k] = MotionConfig.from_dict(v)
            elif k in ("canvas", "crop"):
                if not (isinstance(v, list) and len(v) == 2
                        and all(isinstance(x, int) and not isinstance(x, bool) for x in v)):
                    raise ConfigError(k, "must be a [width, height] pair of integers")
                kw[k] = (v[0], v[1])
            elif k in ("alpha_threshold", "placement_inset"):
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    raise ConfigError(k, "must be a number")
                kw[k] = float(v)
            elif k == "blur_kernel":
                if isinstance(v, bool) or not isinstance(v, int):
                    raise ConfigError(k, "must be an integer")
                kw[k] = v
            elif k in ("kitti", "oob_mask"):
                if not isinstance(v, bool):
                    raise ConfigError(k, "must be a boolean")
                kw[k] = v
            elif k in ("flow_paste_frame",):
                if not isinstance(v, str):
                    raise ConfigError(k, "must be a string")
                kw[k] = v
            elif k == "assets":
                if v is not None and not isinstance(v, str):
                    raise ConfigError(k, "must be a path string or null")
                kw[k] = v
        return cls(**kw)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        """SHA-256 over the sample-affecting fields (asset location excluded)."""
        d = self.to_dict()
        d.pop("assets")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def replace(self, **changes) -> "RunConfig":
        return replace(self, **changes)

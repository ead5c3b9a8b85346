"""Affine motions, dense flow synthesis and bilinear inverse warping.

Conventions
-----------
Pixel coordinates are integer pixel centres: ``x`` is the column index and
``y`` the row index, origin at the top-left, y pointing down.  Images are
numpy arrays of shape ``(H, W)`` or ``(H, W, C)`` holding floats in [0, 1];
flow fields are ``(H, W, 2)`` float64 arrays of ``(u, v)`` displacements in
pixels.  A flow is defined on the reference frame: the pixel ``x`` of the
reference frame moves to ``x + flow(x)`` in the target frame.

The pivot of rotation/scaling is not fixed by the generation recipe.  This
package uses the image centre for backgrounds and the alpha-weighted
centroid for foreground segments (see :mod:`flowgen.sampling`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import numpy as np

from .errors import ParameterError, ShapeError

Vec2 = Tuple[float, float]


class BorderPolicy(str, Enum):
    """How samples that fall outside the source image are resolved.

    ``CLAMP`` replicates edge pixels, ``ZERO`` treats the outside as
    transparent black, ``INVALID`` fills the output with NaN wherever the
    sample position leaves ``[0, W-1] x [0, H-1]``.
    """

    CLAMP = "clamp"
    ZERO = "zero"
    INVALID = "invalid"


@dataclass(frozen=True)
class AffineParams:
    """Sampled motion coefficients of one layer."""

    translation: Vec2 = (0.0, 0.0)
    rotation: float = 0.0
    scale: float = 1.0
    pivot: Vec2 = (0.0, 0.0)

    def __post_init__(self):
        values = [*self.translation, self.rotation, self.scale, *self.pivot]
        if len(self.translation) != 2 or len(self.pivot) != 2:
            raise ParameterError("translation and pivot must be 2-vectors")
        if not all(math.isfinite(v) for v in values):
            raise ParameterError(f"non-finite affine parameter in {self}")
        if self.scale <= 0:
            raise ParameterError(f"scale must be > 0, got {self.scale}")

    @property
    def translation_magnitude(self) -> float:
        return math.hypot(*self.translation)

    def to_dict(self) -> dict:
        return {
            "translation": [float(v) for v in self.translation],
            "rotation": float(self.rotation),
            "scale": float(self.scale),
            "pivot": [float(v) for v in self.pivot],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AffineParams":
        return cls(
            translation=tuple(float(v) for v in d["translation"]),
            rotation=float(d["rotation"]),
            scale=float(d["scale"]),
            pivot=tuple(float(v) for v in d["pivot"]),
        )


@dataclass(frozen=True, eq=False)
class AffineTransform:
    """A 3x3 homogeneous affine matrix acting on ``[x, y, 1]`` columns."""

    m: np.ndarray

    def __post_init__(self):
        m = np.array(self.m, dtype=np.float64)
        if m.shape != (3, 3):
            raise ShapeError(f"affine matrix must be 3x3, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ParameterError("affine matrix has non-finite entries")
        if not np.array_equal(m[2], [0.0, 0.0, 1.0]):
            raise ParameterError(f"bottom row must be [0, 0, 1], got {m[2]}")
        if abs(np.linalg.det(m[:2, :2])) <= 1e-9:
            raise ParameterError("affine matrix is not invertible")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls) -> "AffineTransform":
        return cls(np.eye(3))

    def inverse(self) -> "AffineTransform":
        a = self.m[:2, :2]
        a_inv = np.linalg.inv(a)
        out = np.eye(3)
        out[:2, :2] = a_inv
        out[:2, 2] = -a_inv @ self.m[:2, 2]
        return AffineTransform(out)

    def apply(self, points) -> np.ndarray:
        """Map ``(..., 2)`` points through the transform."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.m[:2, :2].T + self.m[:2, 2]

    def __matmul__(self, other: "AffineTransform") -> "AffineTransform":
        return AffineTransform(self.m @ other.m)

    def __eq__(self, other):
        return isinstance(other, AffineTransform) and np.array_equal(self.m, other.m)

    def __hash__(self):
        return hash(self.m.tobytes())


def _translate(t) -> np.ndarray:
    m = np.eye(3)
    m[:2, 2] = t
    return m


def affine_from_params(p: AffineParams) -> AffineTransform:
    """Scale, then rotate about ``p.pivot``, then translate.

    The result is ``T(t) @ T(c) @ R(theta) @ S(s) @ T(-c)``.
    """
    c, s = math.cos(p.rotation), math.sin(p.rotation)
    rs = np.array([[p.scale * c, -p.scale * s, 0.0],
                   [p.scale * s, p.scale * c, 0.0],
                   [0.0, 0.0, 1.0]])
    pivot = np.asarray(p.pivot, dtype=np.float64)
    m = _translate(p.translation) @ _translate(pivot) @ rs @ _translate(-pivot)
    m[2] = (0.0, 0.0, 1.0)
    return AffineTransform(m)


def pixel_grid(x0: int, y0: int, width: int, height: int):
    """Integer pixel-centre coordinates of a window, as two float64 arrays."""
    xs = np.arange(x0, x0 + width, dtype=np.float64)
    ys = np.arange(y0, y0 + height, dtype=np.float64)
    return np.meshgrid(xs, ys)


def affine_flow_window(a: AffineTransform, x0: int, y0: int, width: int, height: int) -> np.ndarray:
    """``A x - x`` over the window whose top-left pixel is ``(x0, y0)``."""
    m = a.m
    gx, gy = pixel_grid(x0, y0, width, height)
    flow = np.empty((height, width, 2))
    flow[..., 0] = (m[0, 0] - 1.0) * gx + m[0, 1] * gy + m[0, 2]
    flow[..., 1] = m[1, 0] * gx + (m[1, 1] - 1.0) * gy + m[1, 2]
    return flow


def flow_from_affine(a: AffineTransform, width: int, height: int) -> np.ndarray:
    """Dense flow ``f(x) = A x - x`` evaluated at every pixel centre."""
    if width < 1 or height < 1:
        raise ShapeError(f"flow dimensions must be >= 1, got {width}x{height}")
    return affine_flow_window(a, 0, 0, width, height)


def bilinear_sample(image: np.ndarray, xs: np.ndarray, ys: np.ndarray,
                    border: BorderPolicy | str = BorderPolicy.CLAMP) -> np.ndarray:
    """Sample ``image`` at real-valued positions ``(xs, ys)``.

    Returns an array of shape ``xs.shape`` (single channel) or
    ``xs.shape + (C,)``.  Integer positions reproduce the texel exactly.
    """
    border = BorderPolicy(border)
    h, w = image.shape[:2]
    x0f = np.floor(xs)
    y0f = np.floor(ys)
    fx = xs - x0f
    fy = ys - y0f
    x0 = x0f.astype(np.int64)
    y0 = y0f.astype(np.int64)
    x1 = x0 + 1
    y1 = y0 + 1

    flat = image.reshape(h * w, -1)
    taps = ((x0, y0, (1.0 - fx) * (1.0 - fy)),
            (x1, y0, fx * (1.0 - fy)),
            (x0, y1, (1.0 - fx) * fy),
            (x1, y1, fx * fy))
    out = None
    for tx, ty, wgt in taps:
        cx = np.clip(tx, 0, w - 1)
        cy = np.clip(ty, 0, h - 1)
        if border is BorderPolicy.ZERO:
            inside = (tx == cx) & (ty == cy)
            wgt = np.where(inside, wgt, 0.0)
        term = flat[(cy * w + cx).ravel()] * wgt.reshape(-1, 1)
        out = term if out is None else out + term

    out = out.reshape(xs.shape + (flat.shape[1],))
    if border is BorderPolicy.INVALID:
        outside = (xs < 0) | (xs > w - 1) | (ys < 0) | (ys > h - 1)
        out[outside] = np.nan
    if image.ndim == 2:
        out = out[..., 0]
    return out


def _check_flow(flow: np.ndarray, shape) -> None:
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ShapeError(f"flow must have shape (H, W, 2), got {flow.shape}")
    if flow.shape[:2] != tuple(shape[:2]):
        raise ShapeError(f"flow {flow.shape[:2]} does not match image {tuple(shape[:2])}")


def inverse_warp_image(target: np.ndarray, flow: np.ndarray,
                       border: BorderPolicy | str = BorderPolicy.CLAMP) -> np.ndarray:
    """Build ``out(x) = target(x + flow(x))`` by bilinear sampling."""
    target = np.asarray(target, dtype=np.float64)
    _check_flow(flow, target.shape)
    h, w = target.shape[:2]
    gx, gy = pixel_grid(0, 0, w, h)
    return bilinear_sample(target, gx + flow[..., 0], gy + flow[..., 1], border)


def inverse_warp_mask(mask: np.ndarray, flow: np.ndarray, threshold: float = 0.4) -> np.ndarray:
    """Warp a single-channel mask with zero border and re-binarise it.

    Returns a boolean array, true where the warped value is ``>= threshold``.
    """
    if not 0.0 < threshold < 1.0:
        raise ParameterError(f"threshold must lie in (0, 1), got {threshold}")
    mask = np.asarray(mask, dtype=np.float64)
    if mask.ndim != 2:
        raise ShapeError(f"mask must be single channel, got shape {mask.shape}")
    return inverse_warp_image(mask, flow, BorderPolicy.ZERO) >= threshold


def reference_window(a: AffineTransform, bbox, canvas_w: int, canvas_h: int):
    """Reference-frame window that can sample anything inside ``bbox``.

    ``bbox = (x0, y0, w, h)`` is a target-frame pixel rectangle.  Every
    reference pixel outside the returned ``(x0, y0, x1, y1)`` window (end
    exclusive) maps to a position whose four bilinear taps all lie outside
    ``bbox``.  Returns ``None`` when the window misses the canvas.
    """
    bx, by, bw, bh = bbox
    corners = np.array([[bx - 1, by - 1], [bx + bw, by - 1],
                        [bx - 1, by + bh], [bx + bw, by + bh]], dtype=np.float64)
    ref = a.inverse().apply(corners)
    x0 = max(int(math.floor(ref[:, 0].min())) - 1, 0)
    y0 = max(int(math.floor(ref[:, 1].min())) - 1, 0)
    x1 = min(int(math.ceil(ref[:, 0].max())) + 2, canvas_w)
    y1 = min(int(math.ceil(ref[:, 1].max())) + 2, canvas_h)
    if x0 >= x1 or y0 >= y1:
        return None
    return x0, y0, x1, y1

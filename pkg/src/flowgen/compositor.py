"""Layered scene construction and rendering of frame pairs.

A scene is a background (layer 0) plus foreground layers stacked in
ascending index.  Each layer's content is given in the *target* frame
(frame B); the reference frame (frame A) is obtained by inverse warping each
layer with its own affine flow and over-compositing bottom to top.  The
ground-truth flow starts as the background flow and each foreground pastes
its own flow wherever its warped alpha reaches the paste threshold.

Foreground layers are only resampled inside the reference-frame window
their target-frame bounding box can reach, which keeps rendering cost
proportional to object area rather than canvas area.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import sampling
from .assets import AssetCatalog, Segment, blur_segment
from .config import RunConfig
from .errors import ShapeError
from .geometry import (AffineParams, AffineTransform, BorderPolicy, affine_flow_window,
                       affine_from_params, bilinear_sample, pixel_grid, reference_window)
from .sampling import SampleSeed

Window = Tuple[int, int, int, int]  # x0, y0, x1, y1 (end exclusive)


@dataclass(frozen=True)
class LayerPlan:
    asset: int
    offset: Tuple[int, int]
    params: AffineParams

    def to_dict(self):
        return {"asset": self.asset, "offset": list(self.offset), **self.params.to_dict()}


@dataclass(frozen=True)
class ScenePlan:
    """The sampled latent description of a scene, without pixel data."""

    background: LayerPlan
    foregrounds: Tuple[LayerPlan, ...]

    def to_dict(self):
        return {"background": self.background.to_dict(),
                "foregrounds": [fg.to_dict() for fg in self.foregrounds]}


@dataclass(eq=False)
class Layer:
    """One compositing element.

    ``image`` holds the target-frame content with its top-left pixel at
    ``offset`` on the canvas: RGB for the background (covering the whole
    canvas, alpha implicitly 1), straight-alpha RGBA for foregrounds.
    """

    index: int
    image: np.ndarray
    offset: Tuple[int, int]
    affine: AffineParams

    @cached_property
    def transform(self) -> AffineTransform:
        return affine_from_params(self.affine)

    @property
    def is_background(self) -> bool:
        return self.index == 0

    @property
    def bbox(self) -> Tuple[int, int, int, int]:
        return self.offset[0], self.offset[1], self.image.shape[1], self.image.shape[0]

    @cached_property
    def alpha(self) -> np.ndarray:
        if self.is_background:
            return np.ones(self.image.shape[:2])
        return self.image[..., 3]

    @cached_property
    def premultiplied(self) -> np.ndarray:
        if self.is_background:
            return self.image
        return self.image[..., :3] * self.image[..., 3:]

    def target_alpha(self, canvas: Tuple[int, int]) -> np.ndarray:
        """Target-frame alpha at full canvas resolution."""
        w, h = canvas
        out = np.zeros((h, w))
        x, y, lw, lh = self.bbox
        out[y:y + lh, x:x + lw] = self.alpha
        return out

    def flow(self, canvas: Tuple[int, int]) -> np.ndarray:
        return affine_flow_window(self.transform, 0, 0, *canvas)


@dataclass
class Scene:
    canvas: Tuple[int, int]
    layers: List[Layer]
    seed: Optional[SampleSeed] = None
    plan: Optional[ScenePlan] = None

    @property
    def foregrounds(self) -> List[Layer]:
        return self.layers[1:]


# -- scene construction -------------------------------------------------------

def plan_scene(rng: np.random.Generator, cfg: RunConfig, n_backgrounds: int,
               segment_sizes: Sequence[Tuple[int, int]],
               segment_centroids: Sequence[Tuple[float, float]],
               counters: Optional[Counter] = None) -> ScenePlan:
    """Draw every random quantity of a scene, in a fixed order."""
    m = cfg.motion
    bg_index = int(rng.integers(n_backgrounds))
    bg = LayerPlan(bg_index, (0, 0), sampling.sample_background_motion(rng, m, cfg.canvas))
    count = sampling.sample_foreground_count(rng, m)
    fgs = []
    for _ in range(count):
        seg = int(rng.integers(len(segment_sizes)))
        cx, cy = segment_centroids[seg]
        px, py = sampling.sample_placement(rng, cfg.canvas, segment_sizes[seg], cfg.placement_inset)
        offset = (int(math.floor(px - cx + 0.5)), int(math.floor(py - cy + 0.5)))
        pivot = (offset[0] + cx, offset[1] + cy)
        params = sampling.sample_foreground_motion(rng, m, pivot, counters)
        fgs.append(LayerPlan(seg, offset, params))
    return ScenePlan(bg, tuple(fgs))


def _clip_to_canvas(image: np.ndarray, offset, canvas):
    """Crop a placed RGBA image to the canvas; returns (image, offset) or None."""
    w, h = canvas
    x, y = offset
    ih, iw = image.shape[:2]
    x0, y0 = max(x, 0), max(y, 0)
    x1, y1 = min(x + iw, w), min(y + ih, h)
    if x0 >= x1 or y0 >= y1:
        return None
    return image[y0 - y:y1 - y, x0 - x:x1 - x], (x0, y0)


def build_scene(plan: ScenePlan, catalog: AssetCatalog, cfg: RunConfig,
                seed: Optional[SampleSeed] = None) -> Scene:
    bg = Layer(0, catalog.background(plan.background.asset), (0, 0), plan.background.params)
    layers = [bg]
    for lp in plan.foregrounds:
        seg: Segment = catalog.segments[lp.asset]
        if cfg.blur_kernel > 1:
            seg = blur_segment(seg, cfg.blur_kernel)
        clipped = _clip_to_canvas(seg.image, lp.offset, cfg.canvas)
        if clipped is None:
            continue
        img, off = clipped
        layers.append(Layer(len(layers), img, off, lp.params))
    return Scene(tuple(cfg.canvas), layers, seed, plan)


def compose_scene(rng: np.random.Generator, catalog: AssetCatalog, cfg: RunConfig,
                  seed: Optional[SampleSeed] = None, counters: Optional[Counter] = None) -> Scene:
    """Sample and materialise a scene from the catalog."""
    sizes = [s.size for s in catalog.segments]
    centroids = [s.centroid for s in catalog.segments]
    plan = plan_scene(rng, cfg, len(catalog.backgrounds), sizes, centroids, counters)
    return build_scene(plan, catalog, cfg, seed)


# -- rendering ----------------------------------------------------------------

def _intersect(a: Window, b: Window) -> Optional[Window]:
    x0, y0 = max(a[0], b[0]), max(a[1], b[1])
    x1, y1 = min(a[2], b[2]), min(a[3], b[3])
    if x0 >= x1 or y0 >= y1:
        return None
    return x0, y0, x1, y1


def _local(win: Window, origin: Window):
    """Slices of ``win`` inside an array whose top-left is at ``origin``."""
    return (slice(win[1] - origin[1], win[3] - origin[1]),
            slice(win[0] - origin[0], win[2] - origin[0]))


def _bbox_window(layer: Layer) -> Window:
    x, y, w, h = layer.bbox
    return x, y, x + w, y + h


@dataclass
class WarpedLayer:
    """Reference-frame quantities of one layer inside ``window``."""

    index: int
    window: Window
    alpha: np.ndarray     # continuous warped alpha
    premult: np.ndarray   # warped premultiplied colour
    flow: np.ndarray      # the layer's own affine flow
    src_x: np.ndarray     # sample positions in layer-local coordinates
    src_y: np.ndarray


def warp_layer(layer: Layer, window: Window, canvas) -> Optional[WarpedLayer]:
    """Inverse-warp one layer into the reference frame over ``window``.

    The background uses clamp-to-edge, foregrounds a transparent border.
    Returns ``None`` if the layer cannot reach the window.
    """
    a = layer.transform
    if layer.is_background:
        win = window
    else:
        ref = reference_window(a, layer.bbox, *canvas)
        win = _intersect(ref, window) if ref is not None else None
        if win is None:
            return None
    x0, y0, x1, y1 = win
    flow = affine_flow_window(a, x0, y0, x1 - x0, y1 - y0)
    gx, gy = pixel_grid(x0, y0, x1 - x0, y1 - y0)
    sx = gx + flow[..., 0] - layer.offset[0]
    sy = gy + flow[..., 1] - layer.offset[1]
    if layer.is_background:
        premult = bilinear_sample(layer.image, sx, sy, BorderPolicy.CLAMP)
        alpha = np.ones(sx.shape)
    else:
        rgba = np.concatenate([layer.premultiplied, layer.alpha[..., None]], axis=2)
        sampled = bilinear_sample(rgba, sx, sy, BorderPolicy.ZERO)
        premult, alpha = sampled[..., :3], sampled[..., 3]
    return WarpedLayer(layer.index, win, alpha, premult, flow, sx, sy)


@dataclass
class Rendered:
    """Rasters of one scene over an evaluation window of the canvas."""

    window: Window
    frame_a: np.ndarray
    frame_b: np.ndarray
    flow: np.ndarray
    labels: np.ndarray        # index of the layer whose flow was pasted
    occlusion: Optional[np.ndarray] = None
    out_of_bounds: Optional[np.ndarray] = None
    layer_occlusion: Optional[list] = None
    layer_nonvisible_ref: Optional[list] = None


def render_target_window(scene: Scene, window: Window) -> np.ndarray:
    x0, y0, x1, y1 = window
    out = np.array(scene.layers[0].image[y0:y1, x0:x1], dtype=np.float64)
    for layer in scene.foregrounds:
        bw = _bbox_window(layer)
        win = _intersect(bw, window)
        if win is None:
            continue
        dst = _local(win, window)
        src = _local(win, bw)
        a = layer.alpha[src][..., None]
        out[dst] = layer.premultiplied[src] + (1.0 - a) * out[dst]
    return out


def render_scene(scene: Scene, window: Optional[Window] = None, threshold: float = 0.4,
                 paste_frame: str = "reference", occlusion: bool = True,
                 keep_layers: bool = False) -> Rendered:
    """Render both frames, the composited flow and the occlusion mask.

    Every output pixel depends only on its own canvas position, so rendering
    a sub-window equals cropping a full-canvas render.
    """
    from .occlusion import scene_occlusion

    w, h = scene.canvas
    if window is None:
        window = (0, 0, w, h)
    x0, y0, x1, y1 = window
    frame_b = render_target_window(scene, window)

    warped = [warp_layer(layer, window, scene.canvas) for layer in scene.layers]
    bg = warped[0]
    frame_a = bg.premult.copy()
    flow = bg.flow.copy()
    labels = np.zeros((y1 - y0, x1 - x0), dtype=np.int16)
    for layer, wl in zip(scene.foregrounds, warped[1:]):
        if paste_frame == "target":
            win = _intersect(_bbox_window(layer), window)
            if win is not None:
                sub = layer.alpha[_local(win, _bbox_window(layer))] >= threshold
                f = affine_flow_window(layer.transform, win[0], win[1], win[2] - win[0], win[3] - win[1])
                dst = _local(win, window)
                flow[dst][sub] = f[sub]
                labels[dst][sub] = layer.index
        if wl is None:
            continue
        dst = _local(wl.window, window)
        frame_a[dst] = wl.premult + (1.0 - wl.alpha[..., None]) * frame_a[dst]
        if paste_frame == "reference":
            sub = wl.alpha >= threshold
            flow[dst][sub] = wl.flow[sub]
            labels[dst][sub] = layer.index

    out = Rendered(window, frame_a, frame_b, flow, labels)
    gx, gy = pixel_grid(x0, y0, x1 - x0, y1 - y0)
    tx, ty = gx + flow[..., 0], gy + flow[..., 1]
    out.out_of_bounds = (tx < x0) | (tx > x1 - 1) | (ty < y0) | (ty > y1 - 1)
    if occlusion:
        occ, per_layer, nonvis = scene_occlusion(scene, warped, window, threshold)
        out.occlusion = occ
        if keep_layers:
            out.layer_occlusion = per_layer
            out.layer_nonvisible_ref = nonvis
    return out


def render_target(scene: Scene) -> np.ndarray:
    """Frame B: layers painted bottom to top at their placed positions."""
    return render_target_window(scene, (0, 0, *scene.canvas))


def render_reference(scene: Scene) -> np.ndarray:
    """Frame A: every layer inverse-warped by its own flow, then composited."""
    return render_scene(scene, occlusion=False).frame_a


def composite_flow(scene: Scene, threshold: float = 0.4, paste_frame: str = "reference") -> np.ndarray:
    return render_scene(scene, threshold=threshold, paste_frame=paste_frame, occlusion=False).flow


def crop_window(canvas: Tuple[int, int], crop: Tuple[int, int]) -> Window:
    """Centred crop window; ``(100, 100, 612, 484)`` for the default sizes."""
    cw, ch = canvas
    w, h = crop
    if w > cw or h > ch:
        raise ShapeError(f"crop {w}x{h} exceeds input {cw}x{ch}")
    x0, y0 = (cw - w) // 2, (ch - h) // 2
    return x0, y0, x0 + w, y0 + h


def center_crop(raster: np.ndarray, crop: Tuple[int, int] = (512, 384)) -> np.ndarray:
    """Crop the central ``crop = (w, h)`` window; values are left untouched."""
    h, w = raster.shape[:2]
    x0, y0, x1, y1 = crop_window((w, h), crop)
    return raster[y0:y1, x0:x1].copy()


# -- samples --------------------------------------------------------------------

@dataclass
class Sample:
    frame_a: np.ndarray
    frame_b: np.ndarray
    flow: np.ndarray
    occlusion: np.ndarray
    out_of_bounds: np.ndarray
    labels: np.ndarray
    provenance: dict = field(default_factory=dict)

    @property
    def occlusion_extended(self) -> np.ndarray:
        return self.occlusion | self.out_of_bounds


def center_crop_sample(rendered: Rendered, crop: Tuple[int, int], provenance=None) -> Sample:
    """Crop full-canvas rasters to a :class:`Sample`."""
    def c(a):
        return center_crop(a, crop)
    full = rendered
    h, w = full.frame_a.shape[:2]
    x0, y0, x1, y1 = crop_window((w, h), crop)
    tx, ty = np.meshgrid(np.arange(x1 - x0), np.arange(y1 - y0))
    flow = c(full.flow)
    oob = (tx + flow[..., 0] < 0) | (tx + flow[..., 0] > x1 - x0 - 1) | \
          (ty + flow[..., 1] < 0) | (ty + flow[..., 1] > y1 - y0 - 1)
    return Sample(c(full.frame_a), c(full.frame_b), flow, c(full.occlusion), oob,
                  c(full.labels), dict(provenance or {}))


def generate_sample(seed: SampleSeed, catalog: AssetCatalog, cfg: RunConfig) -> Sample:
    """End-to-end: sample a scene, render it and crop to the output size.

    Rendering is restricted to the crop window, which gives the same result
    as rendering the whole canvas and cropping afterwards.
    """
    rng = sampling.derive_rng(seed)
    counters = Counter()
    scene = compose_scene(rng, catalog, cfg, seed, counters)
    window = crop_window(cfg.canvas, cfg.crop)
    r = render_scene(scene, window, cfg.alpha_threshold, cfg.flow_paste_frame)
    provenance = {
        "master_seed": seed.master_seed,
        "sample_index": seed.sample_index,
        "config_hash": cfg.config_hash(),
        "scene": scene.plan.to_dict(),
    }
    if counters:
        provenance["counters"] = dict(counters)
    return Sample(r.frame_a, r.frame_b, r.flow, r.occlusion, r.out_of_bounds,
                  r.labels, provenance)

"""Command-line interface.

Progress goes to stderr; machine-readable results are printed to stdout as
JSON.  Exit codes: 0 success, 1 validation failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import dataset, io as fio, viz
from .config import RunConfig
from .errors import ConfigError, FlowgenError
from .sampling import MASK64, CubedGaussian, Exponential, UniformMagnitude

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("flowgen")


def _u64(text):
    v = int(text, 0)
    if not 0 <= v <= MASK64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _count_range(text):
    try:
        lo, hi = (int(p) for p in text.split("..")) if ".." in text else (int(text),) * 2
    except ValueError:
        raise argparse.ArgumentTypeError("expected LO..HI") from None
    if not 0 <= lo <= hi:
        raise argparse.ArgumentTypeError("expected 0 <= LO <= HI")
    return lo, hi


def _emit(obj):
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def build_config(args) -> tuple[RunConfig, dict | None]:
    """Config from ``--config`` (run config or manifest) plus flag overrides."""
    manifest = None
    if args.config:
        raw = json.loads(Path(args.config).read_text()) if Path(args.config).is_file() else None
        if raw is None:
            raise ConfigError("--config", f"cannot read {args.config}")
        if isinstance(raw, dict) and "format_version" in raw:
            manifest = fio.read_manifest(args.config)
            cfg = RunConfig.from_dict(manifest["config"])
        else:
            cfg = RunConfig.from_dict(raw)
    else:
        cfg = RunConfig()
    motion = cfg.motion
    if getattr(args, "distribution", None):
        dist = {"exp": Exponential(), "uniform": UniformMagnitude(),
                "cubed-gaussian": CubedGaussian()}[args.distribution]
        motion = replace(motion, fg_translation=dist)
    if getattr(args, "fg_count", None):
        motion = replace(motion, fg_count_range=args.fg_count)
    changes = {"motion": motion}
    if getattr(args, "blur_kernel", None) is not None:
        changes["blur_kernel"] = args.blur_kernel
    if getattr(args, "kitti", False):
        changes["kitti"] = True
    if getattr(args, "oob_mask", False):
        changes["oob_mask"] = True
    return replace(cfg, **changes), manifest


def cmd_generate(args) -> int:
    cfg, manifest = build_config(args)
    seed = args.seed if args.seed is not None else (manifest["master_seed"] if manifest else 0)
    samples = args.samples or (manifest["sample_count"] if manifest else None)
    if samples is None:
        raise ConfigError("--samples", "required unless --config is a manifest")
    catalog = dataset.resolve_catalog(cfg)
    if manifest is not None and catalog.digests() != manifest["catalog"]:
        raise FlowgenError("asset catalog digests differ from the manifest")
    import time
    t0 = time.perf_counter()
    dataset.generate_dataset(args.out, cfg, catalog, samples, seed, args.workers, progress=True)
    elapsed = time.perf_counter() - t0
    _emit({"out": str(args.out), "samples": samples, "seed": seed, "workers": args.workers,
           "seconds": elapsed, "pairs_per_second": samples / elapsed,
           "config_hash": cfg.config_hash()})
    return EXIT_OK


def cmd_validate(args) -> int:
    report = dataset.validate_dataset(args.dataset)
    _emit(report)
    return EXIT_OK if report["ok"] else EXIT_FAIL


def cmd_stats(args) -> int:
    out = Path(args.out) if args.out else Path(args.dataset) / "stats"
    out.mkdir(parents=True, exist_ok=True)
    res = dataset.dataset_stats(args.dataset, args.bins, args.estimates)
    hist, fg_hist = res.pop("histogram"), res.pop("fg_histogram")
    (out / "flow_magnitude_hist.csv").write_text(hist.to_csv())
    (out / "fg_translation_hist.csv").write_text(fg_hist.to_csv())
    viz.plot_histogram(hist, out / "flow_magnitude_hist.png", "per-pixel flow magnitude")
    viz.plot_histogram(fg_hist, out / "fg_translation_hist.png", "foreground translation magnitude",
                       xlabel="translation magnitude [px]")
    if "flow_stats" in res:
        res["flow_stats"] = res["flow_stats"].to_dict()
    res["artifacts"] = sorted(str(p) for p in out.iterdir())
    _emit(res)
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg, _ = build_config(args)
    lo, hi = cfg.motion.fg_count_range
    res = dataset.bench(args.samples or 100, None, args.workers, cfg,
                        args.seed if args.seed is not None else 0)
    res["fg_count"] = [lo, hi]
    res["reference_seconds_per_100"] = {"2": 6.86, "7": 9.49, "15": 12.98}
    _emit(res)
    return EXIT_OK


def cmd_preview(args) -> int:
    d = Path(args.sample)
    out = Path(args.out) if args.out else d
    out.mkdir(parents=True, exist_ok=True)
    frame_a = fio.read_png(d / "frame_a.png")
    frame_b = fio.read_png(d / "frame_b.png")
    flow = fio.read_flo(d / "flow.flo")
    occ = fio.read_mask(d / "occ.png")
    flow_rgb = viz.flow_to_color(flow)
    overlay = viz.occlusion_overlay(frame_a, occ)
    fio.write_png(flow_rgb, out / "flow_color.png")
    fio.write_png(overlay, out / "occ_overlay.png")
    viz.plot_preview(frame_a, frame_b, flow_rgb, overlay, out / "preview.png")
    _emit({"flow_color": str(out / "flow_color.png"), "occ_overlay": str(out / "occ_overlay.png"),
           "preview": str(out / "preview.png")})
    return EXIT_OK


def _add_generation_flags(p, samples_default=None):
    p.add_argument("--config", metavar="PATH", help="JSON run config or dataset manifest")
    p.add_argument("--samples", type=_positive, default=samples_default, metavar="N")
    p.add_argument("--seed", type=_u64, metavar="U64")
    p.add_argument("--workers", type=_positive, default=1, metavar="N")
    p.add_argument("--distribution", choices=["exp", "uniform", "cubed-gaussian"])
    p.add_argument("--fg-count", type=_count_range, metavar="LO..HI")
    p.add_argument("--blur-kernel", type=int, metavar="K")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowgen", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a dataset")
    _add_generation_flags(g)
    g.add_argument("--out", required=True, metavar="DIR")
    g.add_argument("--kitti", action="store_true", help="also write KITTI 16-bit flow PNGs")
    g.add_argument("--oob-mask", action="store_true", help="also write occlusion | out-of-frame masks")
    g.set_defaults(func=cmd_generate)

    v = sub.add_parser("validate", help="re-check an existing dataset")
    v.add_argument("dataset", metavar="DIR")
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("stats", help="histograms and summary statistics")
    s.add_argument("dataset", metavar="DIR")
    s.add_argument("--out", metavar="DIR", help="artifact directory (default DIR/stats)")
    s.add_argument("--bins", type=_positive, default=160)
    s.add_argument("--estimates", metavar="DIR", help="directory of NNNNNN.flo predictions")
    s.set_defaults(func=cmd_stats)

    b = sub.add_parser("bench", help="time end-to-end generation")
    _add_generation_flags(b, samples_default=100)
    b.set_defaults(func=cmd_bench, fg_count=(7, 7))

    pv = sub.add_parser("preview", help="render flow and occlusion visualisations")
    pv.add_argument("sample", metavar="SAMPLE_DIR")
    pv.add_argument("--out", metavar="DIR")
    pv.set_defaults(func=cmd_preview)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (FlowgenError, OSError, ValueError) as e:
        sys.stderr.write(f"flowgen: error: {e}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point: ``scalesense simulate|estimate|evaluate|run-all``.

Exit codes: 0 success, 1 validation failure, 2 I/O failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import formats, pipeline
from .errors import ScaleSenseError

log = logging.getLogger("scalesense")

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2

SCHEMA_HELP = """\
config file (JSON):
  {"priors": "priors.json", "seed": 0, "cadence": 10, "sigma_min": 1e-4,
   "margin_px": 1.0, "sigma_gate": null, "burn_in_fraction": 0.35,
   "grid": {"d_min": 0.05, "d_max": 20.0, "n_bins": 4096, "spacing": "log"},
   "noise": {"feature_sigma": 0.02, "box_jitter_px": 1.0, "cov_scale": 1.0},
   "scene": {"d_star": 2.0, "n_frames": 300,
             "objects": [{"class_id": 0, "height_m": 0.30, "radius_m": 0.02}]}}
prior file (JSON):
  {"classes": [{"id": 0, "name": "bottle",
                "bins": [{"height_m": 0.30, "prob": 1.0}]}]}
environment: SCALESENSE_SEED overrides the config seed.
"""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n\n{SCHEMA_HELP}")
        sys.exit(EXIT_INVALID)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(
        prog="scalesense",
        description="Estimate the metric scale of a monocular map from object detections.",
        epilog=SCHEMA_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, config_required=True):
        sp.add_argument("--config", type=Path, required=config_required, help="run config (JSON)")
        sp.add_argument("--out", type=Path, required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")

    sp = sub.add_parser("simulate", help="write a synthetic frame feed and its ground truth")
    common(sp)

    sp = sub.add_parser("estimate", help="run the estimator over a frame feed")
    common(sp)
    sp.add_argument("--frames", type=Path, required=True, help="frame feed (JSONL)")
    sp.add_argument("--priors", type=Path, default=None, help="prior file; overrides the config")

    sp = sub.add_parser("evaluate", help="marker errors of a posterior trace against ground truth")
    common(sp, config_required=False)
    sp.add_argument("--trace", type=Path, required=True, help="posterior trace CSV")
    sp.add_argument("--truth", type=Path, required=True, help="ground-truth sidecar (JSON)")
    sp.add_argument("--burn-in-fraction", type=float, default=None)

    sp = sub.add_parser("run-all", help="simulate, estimate and evaluate in one go")
    common(sp)
    return p


def _load(args) -> formats.RunConfig:
    cfg = formats.load_config(args.config) if args.config is not None else formats.RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _simulate(args):
    cfg = _load(args)
    scene, frames = pipeline.write_simulation(cfg, args.out)
    print(f"wrote {len(frames)} frames to {args.out / pipeline.FRAMES_FILE} and truth to {args.out / pipeline.TRUTH_FILE}")


def _estimate(args):
    cfg = _load(args)
    if args.priors is not None:
        cfg.priors = args.priors
    cfg.check_paths()
    if not args.frames.is_file():
        raise FileNotFoundError(f"frame feed not found: {args.frames}")
    result = pipeline.write_estimate(cfg, args.frames, args.out)
    (args.out / "summary.json").write_text(json.dumps(result.summary(), indent=1) + "\n", encoding="utf-8")
    print(pipeline.format_report(result, None))


def _evaluate(args):
    cfg = _load(args)
    frac = cfg.burn_in_fraction if args.burn_in_fraction is None else args.burn_in_fraction
    _, report = pipeline.write_evaluation(args.trace, args.truth, args.out, frac)
    print(pipeline.format_report(None, report))


def _run_all(args):
    cfg = _load(args)
    cfg.check_paths()
    scene, _ = pipeline.write_simulation(cfg, args.out)
    result = pipeline.write_estimate(cfg, args.out / pipeline.FRAMES_FILE, args.out)
    (args.out / "summary.json").write_text(json.dumps(result.summary(), indent=1) + "\n", encoding="utf-8")
    _, report = pipeline.write_evaluation(
        args.out / pipeline.POSTERIOR_FILE, args.out / pipeline.TRUTH_FILE, args.out, cfg.burn_in_fraction
    )
    text = pipeline.format_report(result, report, scene.d_star)
    (args.out / "report.txt").write_text(text + "\n", encoding="utf-8")
    print(text)


COMMANDS = {"simulate": _simulate, "estimate": _estimate, "evaluate": _evaluate, "run-all": _run_all}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (ScaleSenseError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface for the stepping-control pipeline."""

from __future__ import annotations

import argparse
import sys

from .config import load_config
from .harness import Pipeline, StageError

STAGE_OF = {
    "collect": "collect",
    "fit-hysteresis": "fit",
    "optimize-strokes": "strokes",
    "identify-sensor": "sensor",
    "run-ilc": "ilc",
    "certify": "certify",
    "sweep": "sweep",
    "pipeline": "sweep",
}


def _common(parser):
    parser.add_argument("--config", default=None, help="YAML config overriding the defaults")
    parser.add_argument("--out", default="artifacts", help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="master seed override")
    parser.add_argument("--sample-rate", type=float, default=None,
                        help="simulation sample rate override [Hz]")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="piezostep",
        description="Feedforward control pipeline for a simulated piezo-stepper actuator.",
    )
    _common(parser)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "collect": "run the constant-model stepping experiment and store datasets",
        "fit-hysteresis": "fit kernel gain surfaces and compile lookup tables",
        "optimize-strokes": "size stroke spans against the anti-windup bounds",
        "identify-sensor": "multisine identification of the sensor chain",
        "run-ilc": "learn the angle-domain compensation in both directions",
        "certify": "compute the learning convergence certificates",
        "sweep": "compare strategies S1/S2/S3 over the frequency grid",
        "pipeline": "run every stage in order",
    }
    for name, h in helps.items():
        p = sub.add_parser(name, help=h)
        _common(p)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
        overrides.setdefault("plant", {})["seed"] = args.seed
    if args.sample_rate is not None:
        overrides.setdefault("plant", {})["sample_rate"] = args.sample_rate
    cfg = load_config(args.config, overrides)
    pipeline = Pipeline(cfg, args.out, quiet=args.quiet)
    try:
        result = pipeline.run(through=STAGE_OF[args.command])
    except StageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    if not args.quiet:
        run = ", ".join(result.stages_run) or "none"
        cached = ", ".join(result.stages_cached) or "none"
        print(f"stages run: {run}")
        print(f"stages cached: {cached}")
        if result.certificates is not None:
            c = result.certificates
            print(f"certificates: freq sup {c['freq_condition_sup']:.3f}, "
                  f"lemma value {c['sigma_max_iteration_restricted']:.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

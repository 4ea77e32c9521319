"""Command-line entry point (``profweight``).

Exit codes: 0 success, 2 config error, 3 data or missing-artifact error,
4 empty probe set, 5 divergence, 6 theory-check violation.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import experiment as ex
from . import jsonio, theory_checks
from .errors import (ConfigError, DataError, DivergenceError, EmptyProbeSetError,
                     MissingArtifactError, ProfWeightError)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_EMPTY_PROBES, EXIT_DIVERGENCE, EXIT_THEORY = 0, 2, 3, 4, 5, 6


def _config(args) -> ex.ExperimentConfig:
    cfg = ex.ExperimentConfig.load(args.config) if args.config else ex.ExperimentConfig.from_dict({})
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seeds"] = [args.seed]
    if getattr(args, "scheme", None):
        overrides["schemes"] = list(args.scheme)
    if overrides:
        cfg = ex.ExperimentConfig.from_dict({**cfg.raw, **overrides})
    return cfg


def _out(args, cfg) -> Path:
    return Path(args.out or cfg.raw["output_dir"])


def _per_seed(stage):
    def run(args):
        cfg = _config(args)
        out = _out(args, cfg)
        for seed in cfg.seeds:
            result = stage(cfg, seed, out)
            for p in result if isinstance(result, list) else [result]:
                print(p)
        return EXIT_OK
    return run


def cmd_print_config(args):
    cfg = _config(args)
    sys.stdout.write(cfg.dump())
    return EXIT_OK


def cmd_run(args):
    cfg = _config(args)
    out = _out(args, cfg)
    report = ex.run_experiment(cfg, out, echo=print if args.verbose else None)
    sys.stdout.write(ex.render_report(report))
    print(f"report written to {out / 'report.json'}")
    return EXIT_OK


def cmd_compute_weights(args):
    cfg = _config(args)
    out = _out(args, cfg)
    for seed in cfg.seeds:
        for p in ex.stage_compute_weights(cfg, seed, out, echo=print):
            print(p)
    return EXIT_OK


def cmd_report(args):
    out = Path(args.out or "runs")
    cfg = ex.ExperimentConfig.load(args.config) if args.config else None
    report = ex.write_report(out, cfg)
    sys.stdout.write(ex.render_report(report))
    return EXIT_OK


def cmd_theory_check(args):
    results = theory_checks.run_all(seed=args.seed or 0, quick=args.quick)
    sys.stdout.write(theory_checks.render(results))
    if args.json:
        jsonio.write(args.json, {"suites": results})
    return EXIT_OK if all(r["ok"] for r in results) else EXIT_THEORY


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="profweight",
                                     description="Probe-confidence sample weighting for simple models.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True, scheme=False):
        p.add_argument("--config", help="YAML experiment config (defaults when omitted)")
        p.add_argument("--out", help="output directory (default: config output_dir)")
        if seed:
            p.add_argument("--seed", type=int, help="run only this seed")
        if scheme:
            p.add_argument("--scheme", action="append", choices=ex.ALL_SCHEMES,
                           help="restrict to this scheme (repeatable)")
        return p

    common(sub.add_parser("print-config", help="print the effective config"), scheme=True) \
        .set_defaults(func=cmd_print_config)
    common(sub.add_parser("run", help="all stages for all seeds, then the report"), scheme=True) \
        .set_defaults(func=cmd_run)
    common(sub.add_parser("train-complex", help="train and freeze the complex model")) \
        .set_defaults(func=_per_seed(ex.stage_train_complex))
    common(sub.add_parser("train-probes", help="fit probes on D_N, score them on D_S")) \
        .set_defaults(func=_per_seed(ex.stage_train_probes))
    common(sub.add_parser("compute-weights", help="select probes and write weight CSVs"), scheme=True) \
        .set_defaults(func=cmd_compute_weights)
    common(sub.add_parser("train-simple", help="train every simple model under every scheme"),
           scheme=True).set_defaults(func=_per_seed(ex.stage_train_simple))
    common(sub.add_parser("evaluate", help="holdout evaluation of one run"), scheme=True) \
        .set_defaults(func=_per_seed(ex.stage_evaluate))
    common(sub.add_parser("report", help="aggregate seed_*/evaluation.json into a report"),
           seed=False).set_defaults(func=cmd_report)
    tc = sub.add_parser("theory-check", help="run the discrete-distribution verifiers")
    tc.add_argument("--quick", action="store_true", help="smaller grids and fewer pairs")
    tc.add_argument("--seed", type=int, default=0)
    tc.add_argument("--json", help="also write the results as JSON here")
    tc.set_defaults(func=cmd_theory_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EmptyProbeSetError as exc:
        print(f"empty probe set: {exc}", file=sys.stderr)
        return EXIT_EMPTY_PROBES
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (DataError, MissingArtifactError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ProfWeightError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

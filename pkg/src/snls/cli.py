"""Command line entry point ``snls``.

Exit codes: 0 pass, 1 acceptance failure, 2 configuration or certification abort.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, parse_config
from .experiments import (
    EXIT_ABORT,
    EXIT_FAIL,
    EXIT_PASS,
    ReportMismatch,
    check_hypotheses,
    compare_presets,
    estimate_k,
    run_experiment,
)


def _load(path: str, args) -> ExperimentConfig:
    cfg = parse_config(Path(path).read_text())
    return cfg.with_overrides(seed=getattr(args, "seed", None), paths=getattr(args, "paths", None),
                              out=getattr(args, "out", None),
                              workers=getattr(args, "workers", None))


def _emit(obj, out: str | None, name: str) -> None:
    text = json.dumps(obj, indent=2)
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / name).write_text(text)
    print(text)


def _cmd_run(args) -> int:
    cfg = _load(args.config, args)
    result = run_experiment(cfg)
    rep = result.report
    print(f"{cfg.preset}: {rep['verdict']} (exit {result.exit_code}) -> "
          f"{cfg.resolved['output']['dir']}")
    if "diagnostic" in rep:
        print(rep["diagnostic"], file=sys.stderr)
    return result.exit_code


def _cmd_check(args) -> int:
    cfg = _load(args.config, args)
    code, payload = check_hypotheses(cfg)
    _emit(payload, args.out, "hypotheses.json")
    return code


def _cmd_compare(args) -> int:
    a = json.loads(Path(args.no_blowup_report).read_text())
    b = json.loads(Path(args.blowup_report).read_text())
    try:
        summary = compare_presets(a, b)
    except ReportMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ABORT
    _emit(summary, args.out, "contrast.json")
    return EXIT_PASS if summary["verdict"] == "noise-regularization observed" else EXIT_FAIL


def _cmd_estimate_k(args) -> int:
    # here --seed drives the Moser sampler, the only random part of the estimate
    cfg = parse_config(Path(args.config).read_text()).with_overrides(moser_seed=args.seed,
                                                                      out=args.out)
    _emit(estimate_k(cfg), args.out, "moser.json")
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="snls", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def overrides(p, paths=True):
        p.add_argument("--seed", type=int, help="override ensemble.master_seed")
        if paths:
            p.add_argument("--paths", type=int, help="override ensemble.N_paths")
            p.add_argument("--workers", type=int, help="override ensemble.workers")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("run", help="run an experiment preset")
    p.add_argument("config")
    overrides(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("check-hypothesis", help="certify the noise drift conditions")
    p.add_argument("config")
    overrides(p, paths=False)
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("compare", help="contrast a noisy run with its deterministic baseline")
    p.add_argument("no_blowup_report")
    p.add_argument("blowup_report")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("estimate-k", help="empirical Moser constant for a config "
                       "(--seed sets the sampler seed)")
    p.add_argument("config")
    overrides(p, paths=False)
    p.set_defaults(func=_cmd_estimate_k)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())

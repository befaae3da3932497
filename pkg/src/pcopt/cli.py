"""Command-line front end.

Subcommands:
  run       one optimization run from a JSON config
  ensemble  repeated runs with derived seeds, aggregated
  compare   two paired ensembles under equal budgets
  bench     list the built-in objectives
"""

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import optimizer
from .errors import ConfigError, PcoptError
from .objectives import get_objective_spec, list_objectives


def _load_config(path, seed_override=None):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    cfg = optimizer.config_from_dict(raw)
    if seed_override is not None:
        cfg = replace(cfg, seed=seed_override)
    return cfg


def _cmd_run(args):
    cfg = _load_config(args.config, args.seed)
    trace = optimizer.optimize(cfg)
    trace_path, csv_path = optimizer.write_run_outputs(trace, args.out)
    print(f"wrote {trace_path} and {csv_path}")
    if trace.failed:
        print(f"run failed: {trace.failure}", file=sys.stderr)
        return 1
    last = trace.records[-1]
    print(
        f"objective={cfg.objective} iterations={len(trace.records)} "
        f"evaluations={last.cumulative_evaluations}"
    )
    print(
        f"final beta={last.beta:.6g} expected_G={last.expected_objective:.6g} "
        f"best_G={last.best_objective:.6g}"
    )
    print(f"wall_time_seconds={trace.wall_time_seconds:.3f}")
    return 0


def _cmd_ensemble(args):
    cfg = _load_config(args.config, args.seed)
    report = optimizer.run_ensemble(cfg, args.trials)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    agg_path = out / "aggregate.csv"
    agg_path.write_text(optimizer.aggregate_csv(report))
    print(f"wrote {agg_path}")
    mean = float(report.mean_expected_objective[-1])
    half = float(report.ci95_halfwidth[-1])
    print(
        f"objective={cfg.objective} trials={report.trials} "
        f"failed={report.failed_trials}"
    )
    print(f"final mean expected_G = {mean:.6g} +/- {half:.6g} (95% CI)")
    return 0


def _cmd_compare(args):
    cfg_a = _load_config(args.config_a, args.seed)
    cfg_b = _load_config(args.config_b, args.seed)
    report_a, report_b = optimizer.compare_ensembles(cfg_a, cfg_b, args.trials)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cmp_path = out / "compare.csv"
    cmp_path.write_text(optimizer.compare_csv(report_a, report_b))
    print(f"wrote {cmp_path}")
    for tag, rep in (("a", report_a), ("b", report_b)):
        mean = float(rep.mean_expected_objective[-1])
        half = float(rep.ci95_halfwidth[-1])
        print(
            f"arm {tag}: final mean expected_G = {mean:.6g} +/- {half:.6g} "
            f"(failed trials: {rep.failed_trials})"
        )
    delta = float(report_a.mean_expected_objective[-1] - report_b.mean_expected_objective[-1])
    print(f"delta (a - b) = {delta:.6g}")
    return 0


def _cmd_bench(args):
    print("name dimension optimum noise_stddev")
    for name in list_objectives():
        spec = get_objective_spec(name)
        opt = "unknown" if spec.known_optimum_value is None else repr(spec.known_optimum_value)
        print(f"{spec.name} {spec.dimension} {opt} {spec.noise_stddev!r}")
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="pcopt",
        description="Sampling-based black-box optimizer over fitted mixture models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one optimization from a JSON config")
    p_run.add_argument("--config", required=True, help="path to a JSON run config")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--out", default="out", help="output directory")
    p_run.set_defaults(func=_cmd_run)

    p_ens = sub.add_parser("ensemble", help="run repeated trials and aggregate")
    p_ens.add_argument("--config", required=True, help="path to a JSON run config")
    p_ens.add_argument("--trials", type=int, required=True, help="number of trials")
    p_ens.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_ens.add_argument("--out", default="out", help="output directory")
    p_ens.set_defaults(func=_cmd_ensemble)

    p_cmp = sub.add_parser("compare", help="paired ensembles for two configs")
    p_cmp.add_argument("--config-a", required=True, help="first JSON run config")
    p_cmp.add_argument("--config-b", required=True, help="second JSON run config")
    p_cmp.add_argument("--trials", type=int, required=True, help="trials per arm")
    p_cmp.add_argument("--seed", type=int, default=None, help="override both config seeds")
    p_cmp.add_argument("--out", default="out", help="output directory")
    p_cmp.set_defaults(func=_cmd_compare)

    p_bench = sub.add_parser("bench", help="list built-in objectives")
    p_bench.set_defaults(func=_cmd_bench)

    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PcoptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry():
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())

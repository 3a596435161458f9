"""Command-line experiment runner.

Subcommands: simulate (one trace of one cell), estimate (SMC probability
estimation for one cell), sweep (factor grid -> results CSV), effects
(main-effects table from a results CSV), fit (distribution fitting from a
measurement file). Exit codes: 0 success, 2 configuration error, 3
simulation abort.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import distributions as dist_mod
from .calibration import CalibrationError, PLACEMENTS
from .experiment import (BudgetError, ConfigError, SweepSpec, effects_csv_text,
                         emit_series, load_calibration, main_effects,
                         read_results_csv, run_sweep)
from .forwarder import (AccountingError, FactorConfig, run_cell,
                        satisfaction_rate)
from .kernel import LivelockError
from .smc import AllSatisfied, SatisfactionRatio, estimate, required_samples

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ABORT = 3


def _default_seed() -> int:
    env = os.environ.get("NDNSMC_SEED")
    return int(env) if env else 0


def _add_cell_args(p: argparse.ArgumentParser):
    p.add_argument("--threads", type=int, default=1,
                   help="forwarding threads (default 1)")
    p.add_argument("--name-length", type=int, default=3)
    p.add_argument("--payload", type=int, default=0)
    p.add_argument("--interval", type=int, default=700,
                   help="Interest send interval in ns")
    p.add_argument("--capacity", type=int, default=4096,
                   help="per-thread queue capacity in packets")
    p.add_argument("--placement", choices=PLACEMENTS, default="P1")
    p.add_argument("--prefixes", type=int, default=255)
    p.add_argument("--horizon", type=int, default=10_000_000)
    p.add_argument("--warmup", type=int, default=None)
    p.add_argument("--cooldown", type=int, default=None)
    p.add_argument("--calibration", default=None,
                   help="calibration JSON (default: shipped synthetic)")


def _cell_config(args) -> FactorConfig:
    return FactorConfig(
        n_forwarding_threads=args.threads,
        name_length=args.name_length,
        payload_len=args.payload,
        send_interval=args.interval,
        queue_capacity=args.capacity,
        numa_placement=args.placement,
        n_name_prefixes=args.prefixes,
        horizon=args.horizon,
        warmup=args.warmup,
        cooldown=args.cooldown,
    ).validate()


def _cmd_simulate(args) -> int:
    cfg = _cell_config(args)
    cal = load_calibration(args.calibration)
    counters, _ = run_cell(cfg, cal, args.seed)
    out = {
        "interests_sent": counters.interests_sent,
        "data_received": counters.data_received,
        "nacks_received": counters.nacks_received,
        "dropped": counters.dropped,
        "in_flight": counters.in_flight,
        "queue_drops": counters.queue_drops,
        "max_queue_occupancy": counters.max_queue_occupancy,
        "malformed": counters.malformed,
        "satisfaction_rate": satisfaction_rate(counters),
        "seed": args.seed,
    }
    json.dump(out, sys.stdout, indent=1)
    print()
    return EXIT_OK


def _cmd_estimate(args) -> int:
    cfg = _cell_config(args)
    cal = load_calibration(args.calibration)

    def runner(seed: int):
        counters, _ = run_cell(cfg, cal, seed)
        return counters

    est_bool = estimate(runner, AllSatisfied(), args.alpha, args.delta_conf,
                        args.seed, n_traces=args.traces)
    mean_est = estimate(runner, SatisfactionRatio(), args.alpha,
                        args.delta_conf, args.seed, n_traces=args.traces)
    out = {
        "p_hat_all_satisfied": est_bool.p_hat,
        "mean_satisfaction_ratio": mean_est.mean,
        "stderr": mean_est.stderr,
        "n_samples": est_bool.n,
        "alpha": args.alpha,
        "delta_conf": args.delta_conf,
        "master_seed": args.seed,
    }
    json.dump(out, sys.stdout, indent=1)
    print()
    return EXIT_OK


def _cmd_sweep(args) -> int:
    spec = SweepSpec.from_json(args.config)
    if args.out:
        spec.output = args.out
    if args.seed is not None:
        spec.master_seed = args.seed
    rows = run_sweep(spec, jobs=args.jobs, budget=args.budget)
    print(f"wrote {len(rows)} rows to {spec.output}")
    return EXIT_OK


def _cmd_effects(args) -> int:
    rows = read_results_csv(args.input)
    table = main_effects(rows, response=args.response)
    table.check_consistency()
    text = effects_csv_text(table)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    if args.series_x and args.series_curve:
        series = emit_series(rows, args.series_x, args.series_curve)
        path = args.series_out or "series.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(series)
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_series(args) -> int:
    rows = read_results_csv(args.input)
    text = emit_series(rows, args.x, args.curve)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_fit(args) -> int:
    samples = dist_mod.read_measurements(args.input)
    report = dist_mod.fit(samples, threshold=args.threshold, seed=args.seed)
    out = {
        "chosen": report.chosen.to_dict(),
        "ppcc_by_family": report.ppcc_by_family,
        "lambda": report.lam,
        "ybar": report.ybar,
        "sbar": report.sbar,
        "ks_distance": report.ks_distance,
        "n": report.n,
        "threshold": report.threshold,
    }
    text = json.dumps(out, indent=1) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ndnsmc",
        description="forwarder data-plane simulator and SMC experiment runner")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one trace and print counters")
    _add_cell_args(p)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("estimate", help="SMC probability estimation")
    _add_cell_args(p)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--delta-conf", type=float, default=0.1)
    p.add_argument("--traces", type=int, default=None,
                   help="override the bound-derived trace count")
    p.set_defaults(fn=_cmd_estimate)

    p = sub.add_parser("sweep", help="run a factor-grid sweep from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int,
                   default=int(os.environ["NDNSMC_SEED"])
                   if os.environ.get("NDNSMC_SEED") else None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--budget", type=int, default=None,
                   help="abort before running if the sweep needs more traces")
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("effects", help="main-effects table from results CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--response", default="mean_ratio",
                   choices=["mean_ratio", "p_hat", "drops_total"])
    p.add_argument("--out", default=None)
    p.add_argument("--series-x", default=None)
    p.add_argument("--series-curve", default=None)
    p.add_argument("--series-out", default=None)
    p.set_defaults(fn=_cmd_effects)

    p = sub.add_parser("series", help="plot-ready long CSV from results CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--x", required=True)
    p.add_argument("--curve", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_series)

    p = sub.add_parser("fit", help="fit a latency law to measurements")
    p.add_argument("--input", required=True,
                   help="text file, one latency (ns) per line")
    p.add_argument("--threshold", type=float, default=0.99)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_fit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, CalibrationError, BudgetError, ValueError,
            FileNotFoundError, json.JSONDecodeError,
            dist_mod.FitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LivelockError, AccountingError) as exc:
        print(f"simulation abort: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())

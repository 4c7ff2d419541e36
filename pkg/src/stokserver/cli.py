"""Command-line front end.

Subcommands: solve, round, oracle, correlated, uber, experiment, synth.
Exit codes: 0 success, 2 validation/input error, 3 resource budget exceeded.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import List, Optional

import numpy as np

from .errors import ResourceBudgetError, StokServerError, ValidationError
from .metric import Configuration
from .lp import dump_lp_text, lp_dual_bound, solve
from .planner import (
    build_nonadaptive_lp,
    expected_plan_cost,
    extract_fractional_plan,
    simulate_plan,
)
from .rounding import RoundingOffset, derandomize_offset, round_plan_line
from .hst import frt_embed, round_plan_general
from .oracles import optimal_online_dp, policy_expected_cost, simulate_policy
from .correlated import (
    best_online_bruteforce_correlated,
    build_correlated_lp,
    build_trie,
    execute_correlated,
)
from .uber import (
    DemandDistributionSequence,
    expected_uber_cost,
    uber_execute,
    uber_opt_bruteforce,
    uber_reduce,
)
from .harness import ExperimentSpec, run_experiment, synth_instance
from . import io as sio


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--metric", help="metric JSON file")
    p.add_argument("--dists", help="distributions CSV file")
    p.add_argument("--k", type=int, default=1, help="number of servers")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--out", help="output directory")
    p.add_argument("--sigma", type=float, default=6.0, help="tree embedding base")
    p.add_argument("--mode", choices=["cover", "serve-return"], default="cover")
    p.add_argument("--exact-expectation", choices=["on", "off"], default="on")


def _load_instance(args):
    if not args.metric or not args.dists:
        raise ValidationError("--metric and --dists are required")
    return sio.read_metric(args.metric), sio.read_distributions(args.dists)


def _cmd_solve(args) -> int:
    m, d = _load_instance(args)
    lp, shape = build_nonadaptive_lp(m, d, args.k)
    sol = solve(lp)
    if sol.status != "optimal":
        raise ValidationError(f"LP is {sol.status}")
    plan = extract_fractional_plan(shape, sol)
    cert = lp_dual_bound(lp, sol)
    print(f"lp_value {sol.objective_value!r}")
    print(f"certificate max_violation={cert.max_violation:.3g} "
          f"duality_gap={cert.duality_gap:.3g} passed={cert.passed}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        sio.write_plan(os.path.join(args.out, "plan.csv"), plan, m.n)
        if args.dump_lp:
            with open(os.path.join(args.out, "lp.txt"), "w") as fh:
                fh.write(dump_lp_text(lp))
    return 0


def _cmd_round(args) -> int:
    m, d = _load_instance(args)
    lp, shape = build_nonadaptive_lp(m, d, args.k)
    sol = solve(lp)
    if sol.status != "optimal":
        raise ValidationError(f"LP is {sol.status}")
    plan = extract_fractional_plan(shape, sol)
    if m.is_linear:
        if args.offset is not None:
            offset = RoundingOffset(args.offset)
        else:
            offset = derandomize_offset(m, plan, d)
        rounded = round_plan_line(plan, m, offset)
        print(f"offset {offset.r!r}")
    else:
        rounded = round_plan_general(m, plan, args.sigma, args.seed)
    if args.exact_expectation == "on":
        cost = expected_plan_cost(m, rounded, d)
        print(f"lp_value {sol.objective_value!r}")
        print(f"rounded_expected_cost {cost!r}")
    else:
        stats = simulate_plan(m, rounded, d, args.trials, args.seed)
        print(f"lp_value {sol.objective_value!r}")
        print(f"rounded_expected_cost {stats.mean!r} stderr {stats.stderr!r}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        sio.write_plan(os.path.join(args.out, "rounded_plan.csv"), rounded, m.n)
        if args.dump_hst and not m.is_linear:
            with open(os.path.join(args.out, "hst.txt"), "w") as fh:
                fh.write(frt_embed(m, args.sigma, args.seed).dump())
    return 0


def _cmd_oracle(args) -> int:
    m, d = _load_instance(args)
    value, policy = optimal_online_dp(m, d, args.k, mode=args.mode)
    print(f"dp_value {value!r} mode {args.mode}")
    if args.exact_expectation == "on":
        print(f"policy_expected_cost {policy_expected_cost(m, policy, d)!r}")
    else:
        stats = simulate_policy(m, policy, d, args.trials, args.seed)
        print(f"policy_mean {stats.mean!r} stderr {stats.stderr!r}")
    return 0


def _parse_initial(text: str) -> Configuration:
    try:
        return Configuration(int(p) for p in text.split(","))
    except ValueError:
        raise ValidationError(f"bad initial configuration {text!r}")


def _cmd_correlated(args) -> int:
    if not args.metric or not args.scenarios:
        raise ValidationError("--metric and --scenarios are required")
    if not args.initial:
        raise ValidationError("--initial is required (comma-separated points)")
    m = sio.read_metric(args.metric)
    ss = sio.read_scenarios(args.scenarios)
    initial = _parse_initial(args.initial)
    trie = build_trie(ss, args.k, initial)
    lp, shape = build_correlated_lp(trie, m)
    sol = solve(lp)
    if sol.status != "optimal":
        raise ValidationError(f"correlated LP is {sol.status}")
    print(f"lp_value {sol.objective_value!r} trie_nodes {len(trie.nodes)}")
    if args.bruteforce:
        bf = best_online_bruteforce_correlated(trie, m)
        print(f"bruteforce_value {bf!r}")
    if args.realize is not None:
        rho = [int(p) for p in args.realize.split(",")]
        cost = execute_correlated(
            trie, m, sol, shape, rho,
            offset=RoundingOffset(args.offset) if args.offset is not None else None,
            sigma=args.sigma, seed=args.seed,
        )
        print(f"realized_cost {cost!r}")
    return 0


def _cmd_uber(args) -> int:
    if not args.metric or not args.demands:
        raise ValidationError("--metric and --demands are required")
    m = sio.read_metric(args.metric)
    demands = sio.read_demands(args.demands)
    if isinstance(demands, DemandDistributionSequence):
        from .planner import solve_nonadaptive

        marg = demands.source_marginals()
        plan, lp_value = solve_nonadaptive(m, marg, args.k)
        if m.is_linear:
            rounded = round_plan_line(plan, m, derandomize_offset(m, plan, marg))
        else:
            rounded = round_plan_general(m, plan, args.sigma, args.seed)
        print(f"lp_value {lp_value!r}")
        print(f"expected_uber_cost {expected_uber_cost(m, rounded, demands)!r}")
        return 0
    from .oracles import offline_opt

    wrapped = offline_opt(m, uber_reduce(demands), args.k)
    cost = uber_execute(m, wrapped, demands)
    print(f"wrapped_cost {wrapped!r}")
    print(f"uber_cost {cost!r}")
    opt = uber_opt_bruteforce(m, demands, args.k)
    print(f"uber_opt {opt!r}")
    return 0


def _cmd_experiment(args) -> int:
    if not args.out:
        raise ValidationError("--out is required")
    ks = [int(p) for p in args.ks.split(",")]
    metric = dists = None
    if args.metric and args.dists:
        metric, dists = _load_instance(args)
    spec = ExperimentSpec(
        ks=ks, out_dir=args.out, seed=args.seed,
        pipeline=args.pipeline, n=args.n, t=args.t, kind=args.kind,
        concentration=args.concentration, metric=metric, dists=dists,
        trials=args.trials, exact_expectation=args.exact_expectation == "on",
        sigma=args.sigma, mode=args.mode, workers=args.workers,
    )
    rows = run_experiment(spec)
    for row in rows:
        ratio = "NA" if row.ratio is None else f"{row.ratio:.4f}"
        oracle = "NA" if row.dp_value is None else f"{row.dp_value:.4f}"
        print(f"k={row.k} lp={row.lp_value:.4f} "
              f"rounded={row.rounded_expected_cost:.4f} oracle={oracle} ratio={ratio}")
    return 0


def _cmd_synth(args) -> int:
    if not args.out:
        raise ValidationError("--out is required")
    m, d = synth_instance(args.n, args.t, args.k, args.kind, args.seed, args.concentration)
    os.makedirs(args.out, exist_ok=True)
    sio.write_metric(os.path.join(args.out, "metric.json"), m)
    sio.write_distributions(os.path.join(args.out, "distributions.csv"), d)
    print(f"wrote metric.json and distributions.csv to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stokserver",
        description="Stochastic k-server: LP planning, rounding, exact oracles.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve the non-adaptive LP relaxation")
    _add_common(p)
    p.add_argument("--dump-lp", action="store_true", help="write lp.txt to --out")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("round", help="solve and round to an integral plan")
    _add_common(p)
    p.add_argument("--offset", type=float, help="fixed rounding offset in [0,1)")
    p.add_argument("--dump-hst", action="store_true", help="write hst.txt to --out")
    p.set_defaults(func=_cmd_round)

    p = sub.add_parser("oracle", help="exact optimal online policy by DP")
    _add_common(p)
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("correlated", help="scenario-trie LP for correlated requests")
    _add_common(p)
    p.add_argument("--scenarios", help="scenarios CSV file")
    p.add_argument("--initial", help="initial configuration, e.g. 0,3")
    p.add_argument("--bruteforce", action="store_true")
    p.add_argument("--realize", help="realized request sequence, e.g. 1,0,2")
    p.add_argument("--offset", type=float)
    p.set_defaults(func=_cmd_correlated)

    p = sub.add_parser("uber", help="source/destination demands via the reduction")
    _add_common(p)
    p.add_argument("--demands", help="demands CSV file")
    p.set_defaults(func=_cmd_uber)

    p = sub.add_parser("experiment", help="LP-vs-oracle comparison over a k range")
    _add_common(p)
    p.add_argument("--ks", default="2,3,4", help="comma-separated k values")
    p.add_argument("--pipeline", default="lp+line-round",
                   choices=["lp+line-round", "lp+hst-round", "dp-oracle"])
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--t", type=int, default=5)
    p.add_argument("--kind", default="line", choices=["line", "general"])
    p.add_argument("--concentration", type=float, default=1.0)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("synth", help="write a synthetic instance to --out")
    _add_common(p)
    p.add_argument("--n", type=int, default=40)
    p.add_argument("--t", type=int, default=30)
    p.add_argument("--kind", default="line", choices=["line", "general"])
    p.add_argument("--concentration", type=float, default=1.0)
    p.set_defaults(func=_cmd_synth)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ResourceBudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (StokServerError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

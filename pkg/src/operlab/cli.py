"""Command-line front end: run scenarios, sweep process counts, and check
the lock-step equivalence oracle.

Exit codes: 0 success, 1 at least one check violation or oracle mismatch,
2 usage or scenario error.
"""

from __future__ import annotations

import argparse
import os
import sys

from .harness import (ScenarioError, load_scenario, oracle_sim,
                      run_and_check, scenario_adversary, scenario_config,
                      sweep)
from .simnet import CSV_HEADER, csv_row, trace_lines


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="operlab",
        description="Deterministic simulator for view-based partially "
                    "synchronous Byzantine agreement.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario and check it")
    p_run.add_argument("scenario")
    p_run.add_argument("--seed", type=int, default=None,
                       help="run a single seed instead of the scenario's range")
    p_run.add_argument("--trace", metavar="DIR", default=None,
                       help="write per-run trace files into DIR")
    p_run.add_argument("--accounting", choices=("payload", "full"),
                       default=None)
    p_run.add_argument("--csv", metavar="FILE", default=None,
                       help="write the metrics CSV to FILE instead of stdout")

    p_sweep = sub.add_parser("sweep", help="per-n bit-complexity table")
    p_sweep.add_argument("scenario")
    p_sweep.add_argument("--n", required=True,
                         help="comma-separated process counts, e.g. 4,7,10,13")
    p_sweep.add_argument("--seeds", type=int, required=True)

    p_oracle = sub.add_parser(
        "oracle-sim", help="lock-step vs simulated equivalence check")
    p_oracle.add_argument("scenario")
    p_oracle.add_argument("--seed", type=int, default=None)
    return parser


def _accounting(arg):
    if arg is None:
        return None
    return {"payload": "payload-only", "full": "full"}[arg]


def cmd_run(args) -> int:
    scn = load_scenario(args.scenario)
    seeds = [args.seed] if args.seed is not None else \
        [scn.get("seed", 0) + k for k in range(scn.get("seeds", 1))]
    adversary = scenario_adversary(scn)
    lines = [CSV_HEADER]
    violations = []
    for seed in seeds:
        config = scenario_config(scn, seed=seed,
                                 accounting=_accounting(args.accounting))
        report = run_and_check(config, adversary,
                               collect_rows=args.trace is not None)
        lines.append(csv_row(report.trace))
        for v in report.violations:
            violations.append(f"seed {seed}: {v}")
        if args.trace is not None:
            os.makedirs(args.trace, exist_ok=True)
            path = os.path.join(args.trace, f"trace_seed{seed}.txt")
            with open(path, "w") as f:
                for line in trace_lines(report.trace):
                    f.write(line + "\n")
    text = "\n".join(lines) + "\n"
    if args.csv:
        with open(args.csv, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    for v in violations:
        print(f"VIOLATION: {v}", file=sys.stderr)
    return 1 if violations else 0


def cmd_sweep(args) -> int:
    scn = load_scenario(args.scenario)
    try:
        n_list = [int(x) for x in args.n.split(",") if x.strip()]
    except ValueError:
        raise ScenarioError(f"bad --n list {args.n!r}")
    rows = sweep(scn, n_list, args.seeds)
    print("n,t,pbit_max,ratio")
    worst = 0.0
    for (n, t, pbit_max, ratio) in rows:
        worst = max(worst, float(ratio))
        print(f"{n},{t},{pbit_max},{float(ratio):.3f}")
    print(f"C = {worst:.3f}")
    return 0


def cmd_oracle(args) -> int:
    scn = load_scenario(args.scenario)
    ok, detail = oracle_sim(scn, seed=args.seed)
    print(f"{'PASS' if ok else 'FAIL'}: {detail}")
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        if args.command == "oracle-sim":
            return cmd_oracle(args)
    except ScenarioError as e:
        print(f"operlab: scenario error: {e}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())

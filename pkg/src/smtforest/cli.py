"""Command-line entry point.

Subcommands: ``simulate``, ``analyze-direct``, ``analyze-lc`` and ``demo``.
Every output starts with the resolved configuration (including the seed) as
``#`` comment lines; ``--plot`` additionally renders a PNG next to the data.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Sequence

import numpy as np


def _fraction(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1]: {v}")
    return v


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be positive: {v}")
    return v


def _nonneg(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative: {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smtforest", description="Sparse-Merkle forest certificate validation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def output_flags(p):
        p.add_argument("--seed", type=int, default=1, help="master RNG seed (default 1)")
        p.add_argument("--out", type=Path, help="write data here instead of stdout")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--plot", action="store_true", help="also render a PNG figure next to the data")

    sim = sub.add_parser("simulate", help="epidemic repair simulation")
    sim.add_argument("--nodes", type=_positive, default=10_000)
    sim.add_argument("--weeks", type=_positive, default=4)
    sim.add_argument("--missing", type=_fraction, default=0.10, help="share of nodes missing each CA update")
    sim.add_argument("--cachers", type=_fraction, default=0.10)
    sim.add_argument("--clvl", type=_positive, default=7)
    sim.add_argument("--encounters", type=_nonneg, default=5, help="meetings each node starts per hour")
    sim.add_argument("--revocation-rate", type=_fraction, default=0.00028)
    sim.add_argument("--issue-rate", type=_fraction, default=0.001)
    sim.add_argument("--giveup", type=_positive, default=30)
    output_flags(sim)

    direct = sub.add_parser("analyze-direct", help="direct repair statistics over missed updates")
    direct.add_argument("--leaves", type=_positive, default=10_000)
    direct.add_argument("--trials", type=_positive, default=1000)
    direct.add_argument("--m", type=_nonneg, nargs="+", default=[1, 2, 4, 8, 16, 32])
    direct.add_argument("--giveup", type=_positive, default=100)
    output_flags(direct)

    lc = sub.add_parser("analyze-lc", help="level-cache repair failure probability")
    lc.add_argument("--clvl", type=_positive, nargs="+", default=[7])
    lc.add_argument("--target", type=_fraction, default=0.10)
    lc.add_argument("--m", type=_nonneg, nargs="+", default=[1, 2, 4, 8, 16, 32, 64])
    lc.add_argument("--trials", type=_nonneg, default=0, help="Monte-Carlo trials per point (0 = closed form only)")
    output_flags(lc)

    demo = sub.add_parser("demo", help="walk through one CA/node protocol run")
    demo.add_argument("--seed", type=int, default=1)
    demo.add_argument("--stub-crypto", action="store_true", help="keyed-hash signer instead of ECDSA")
    return parser


def _header(command: str, config: dict) -> str:
    return f"# smtforest {command}\n# seed: {config.get('seed')}\n# config: {json.dumps(config, sort_keys=True)}\n"


def _table(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def _emit(args, config: dict, rows: list[dict], extra: Optional[dict] = None) -> None:
    if args.format == "json":
        text = json.dumps({"command": args.command, "config": config, "rows": rows, **(extra or {})}, indent=2) + "\n"
    else:
        text = _header(args.command, config) + _table(rows)
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text)
        print(_header(args.command, config), end="")
        print(f"# wrote {args.out}")
    else:
        print(text, end="")


def _figure_path(args, stem: str) -> Path:
    if args.out:
        return args.out.with_suffix(".png")
    return Path(f"{stem}.png")


def cmd_simulate(args, parser) -> int:
    from .sim.epidemic import SimParams, run_epidemic_sim

    try:
        params = SimParams(
            node_count=args.nodes,
            weeks=args.weeks,
            missing_share=args.missing,
            cacher_share=args.cachers,
            clvl=args.clvl,
            encounters_per_node_per_hour=args.encounters,
            daily_revocation_rate=args.revocation_rate,
            weekly_issue_rate=args.issue_rate,
            give_up_threshold=args.giveup,
            rng_seed=args.seed,
        )
    except ValueError as exc:
        parser.error(str(exc))
    config = {**asdict(params), "seed": args.seed}
    metrics = run_epidemic_sim(params)
    row = {**asdict(params), **metrics.summary()}
    _emit(args, config, [row], {"daily": metrics.daily})
    if args.plot:
        from .plots import plot_sim_daily

        path = plot_sim_daily(metrics.daily, _figure_path(args, f"simulate_seed{args.seed}"),
                              title=f"{params.node_count} nodes, {params.missing_share:.0%} missing")
        print(f"# figure {path}")
    return 0


def cmd_analyze_direct(args, parser) -> int:
    from .hash_tree import LookUpTable
    from .sim.analysis import run_direct_repair_analysis

    rng = np.random.default_rng(args.seed)
    config = {"leaves": args.leaves, "trials": args.trials, "m": args.m, "giveup": args.giveup, "seed": args.seed}
    if args.leaves < 2:
        parser.error("--leaves must be at least 2")
    lut = LookUpTable.from_leaves(int.from_bytes(rng.bytes(32), "big") for _ in range(args.leaves))
    rows = [run_direct_repair_analysis(lut, m, args.trials, args.giveup, rng=rng).as_row() for m in args.m]
    _emit(args, config, rows)
    if args.plot:
        from .plots import plot_direct_repair

        print(f"# figure {plot_direct_repair(rows, _figure_path(args, 'analyze_direct'))}")
    return 0


def cmd_analyze_lc(args, parser) -> int:
    from .sim.analysis import lc_fail_monte_carlo, lc_fail_probability, lc_storage_bytes, max_missed_updates

    if any(c > 16 for c in args.clvl):
        parser.error("--clvl must be at most 16")
    rng = np.random.default_rng(args.seed)
    config = {"clvl": args.clvl, "target": args.target, "m": args.m, "trials": args.trials, "seed": args.seed}
    rows = []
    for clvl in args.clvl:
        for m in args.m:
            row = {"clvl": clvl, "m": m, "closed_form": lc_fail_probability(clvl, m), "storage_bytes": lc_storage_bytes(clvl)}
            if args.trials:
                row["monte_carlo"], row["stderr"] = lc_fail_monte_carlo(clvl, m, args.trials, rng=rng)
            rows.append(row)
    limits = {str(c): max_missed_updates(c, args.target) for c in args.clvl}
    _emit(args, config, rows, {"max_m": limits})
    for c in args.clvl:
        print(f"# clvl={c}: max m = {limits[str(c)]} for failure <= {args.target:g}")
    if args.plot:
        from .plots import plot_lc_failure

        print(f"# figure {plot_lc_failure(rows, _figure_path(args, 'analyze_lc'))}")
    return 0


def cmd_demo(args, parser) -> int:
    from .demo import run_demo

    for line in run_demo(seed=args.seed, ecdsa=not args.stub_crypto):
        print(line)
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "analyze-direct": cmd_analyze_direct,
    "analyze-lc": cmd_analyze_lc,
    "demo": cmd_demo,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return COMMANDS[args.command](args, parser)


if __name__ == "__main__":
    sys.exit(main())

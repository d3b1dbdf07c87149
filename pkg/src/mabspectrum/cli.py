"""Command-line entry point.

    mabspectrum run --config cfg.json --out results/
    mabspectrum sweep --config cfg.json
    mabspectrum sim1 --runs 10000 --horizon 10000 --seed 1
    mabspectrum sim2 --runs 100 --horizon 1000 --seed 7
    mabspectrum two-agent [--config cfg.json]

Data goes to files (and to stdout only with ``--stdout``); progress and
summaries go to stderr. Exit codes: 0 success, 1 invalid input, 2 I/O failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import harness
from .config import ConfigError, load_config, shipped_config
from .report import emit_csv, write_csv

log = logging.getLogger("mabspectrum")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, needs_config: bool) -> None:
    p.add_argument("--config", required=needs_config, metavar="PATH", help="JSON experiment config")
    p.add_argument("--seed", type=int, help="override master_seed")
    p.add_argument("--runs", type=int, help="override n_runs")
    p.add_argument("--horizon", type=int, help="override horizon")
    p.add_argument("--out", default="results", metavar="DIR", help="output directory (default: results)")
    p.add_argument("--stdout", action="store_true", help="also write the single resulting curve to stdout")
    p.add_argument("--workers", type=int, default=1, help="worker processes for Monte Carlo blocks")
    p.add_argument("-q", "--quiet", action="store_true", help="only print the summary")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mabspectrum", description="Multi-armed bandit spectrum-access simulator")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _common(sub.add_parser("run", help="Monte Carlo over the config's policies"), True)
    _common(sub.add_parser("sweep", help="UCB alpha sweep over the config's grid"), True)
    _common(sub.add_parser("sim1", help="simulation 1: four heterogeneous arms, alpha sweep"), False)
    _common(sub.add_parser("sim2", help="simulation 2: four Bernoulli arms, tuned UCB vs Thompson"), False)
    _common(sub.add_parser("two-agent", help="two agents sharing channels with collisions"), False)
    return parser


def _overrides(args) -> dict:
    out = {}
    if args.seed is not None:
        out["master_seed"] = args.seed
    if args.runs is not None:
        out["n_runs"] = args.runs
    if args.horizon is not None:
        out["horizon"] = args.horizon
    return out


def _resolve(args, default_name: str | None = None) -> harness.ExperimentConfig:
    path = args.config or (shipped_config(default_name) if default_name else None)
    config = load_config(path)
    try:
        return replace(config, **_overrides(args))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _sweep_table(result: harness.SweepResult) -> dict:
    return {
        "sweep": [
            {
                "alpha": a,
                "final_avg_reward": r,
                "final_avg_reward_se": rse,
                "final_avg_regret": g,
                "final_avg_regret_se": gse,
            }
            for a, r, rse, g, gse in result.rows
        ],
        "best_alpha": result.best_alpha,
    }


def _sim_sizes(args, defaults: dict) -> dict:
    sizes = dict(defaults)
    if args.runs is not None:
        sizes["n_runs"] = args.runs
    if args.horizon is not None:
        sizes["horizon"] = args.horizon
    return sizes


def _execute(args):
    """Returns (curves, config, extra manifest fields, summary lines)."""
    if args.command == "run":
        config = _resolve(args)
        curves = harness.monte_carlo(config, args.workers)
        return curves, config, {}, []
    if args.command == "sweep":
        config = _resolve(args)
        result = harness.alpha_sweep(config, args.workers)
        config = replace(config, policies=tuple(c.policy for c in result.curves))
        return result.curves, config, _sweep_table(result), [f"best alpha: {result.best_alpha:g}"]
    if args.command in ("sim1", "sim2"):
        seed = 1 if args.seed is None else args.seed
        if args.command == "sim1":
            result = harness.replicate_sim1(seed, workers=args.workers, **_sim_sizes(args, harness.SIM1_DEFAULTS))
            bench = result.benchmark
            lines = [
                f"best alpha: {result.sweep.best_alpha:g}",
                f"alpha=0 benchmark final avg reward: {bench.final_reward:.6f} (se {bench.final_reward_se:.2g})",
            ]
        else:
            result = harness.replicate_sim2(seed, workers=args.workers, **_sim_sizes(args, harness.SIM2_DEFAULTS))
            lines = [f"best alpha: {result.sweep.best_alpha:g}"]
        return result.curves, result.config, _sweep_table(result.sweep), lines
    config = _resolve(args, default_name="two_agent")
    curves = harness.two_agent_monte_carlo(config, args.workers)
    lines = [f"{c.label}: collision rate {c.collision_rate:.6f}" for c in curves]
    return curves, config, {}, lines


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(message)s",
    )
    started = time.time()
    try:
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        # fail on an unusable output directory before simulating anything
        Path(args.out).mkdir(parents=True, exist_ok=True)
        curves, config, extra, lines = _execute(args)
        if args.stdout and len(curves) != 1:
            raise ConfigError(f"--stdout needs exactly one curve, this run produced {len(curves)}")
        emit_csv(curves, args.out, config, extra, started)
        if args.stdout:
            write_csv(curves[0], sys.stdout)
    except (ConfigError, ValueError) as exc:
        print(f"mabspectrum: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"mabspectrum: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    for c in curves:
        print(
            f"{c.label}: final avg reward {c.final_reward:.6f} (se {c.final_reward_se:.2g}), "
            f"final avg regret {c.final_regret:.6f}",
            file=sys.stderr,
        )
    for line in lines:
        print(line, file=sys.stderr)
    print(f"wrote {len(curves)} curve(s) and manifest.json to {args.out}", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""CSV and manifest output for aggregate curves."""

from __future__ import annotations

import json
import platform
import time
from pathlib import Path
from typing import IO, Sequence

import numpy as np

from . import __version__
from .harness import AggregateCurve, ExperimentConfig

__all__ = ["CSV_HEADER", "output_rounds", "write_csv", "emit_csv"]

CSV_HEADER = "t,avg_reward,avg_reward_se,avg_regret,avg_regret_se"
DENSE_ROUNDS = 100
LOG_POINTS = 200


def output_rounds(horizon: int) -> np.ndarray:
    """Rounds written to CSV: every round up to 100, then ~200 log-spaced rounds, always ending at T."""
    dense = np.arange(1, min(horizon, DENSE_ROUNDS) + 1)
    if horizon <= DENSE_ROUNDS:
        return dense
    sparse = np.unique(np.round(np.geomspace(DENSE_ROUNDS, horizon, LOG_POINTS)).astype(np.int64))
    return np.unique(np.concatenate([dense, sparse, [horizon]]))


def _fmt(x: float) -> str:
    return format(float(x), ".9g")


def write_csv(curve: AggregateCurve, fh: IO[str]) -> None:
    fh.write(CSV_HEADER + "\n")
    for t in output_rounds(curve.horizon):
        i = t - 1
        fh.write(
            ",".join(
                [
                    str(int(t)),
                    _fmt(curve.avg_reward[i]),
                    _fmt(curve.avg_reward_se[i]),
                    _fmt(curve.avg_regret[i]),
                    _fmt(curve.avg_regret_se[i]),
                ]
            )
            + "\n"
        )


def curve_summary(curve: AggregateCurve) -> dict:
    out = {
        "label": curve.label,
        "policy": curve.policy.to_dict(),
        "n_runs": curve.n_runs,
        "horizon": curve.horizon,
        "final_avg_reward": curve.final_reward,
        "final_avg_reward_se": curve.final_reward_se,
        "final_avg_regret": curve.final_regret,
        "final_avg_regret_se": curve.final_regret_se,
        "pull_share": [float(x) for x in curve.pull_share],
        "modal_arm_runs": [int(x) for x in curve.modal_arm_runs],
    }
    if curve.realized_regret is not None:
        out["mean_realized_regret"] = curve.realized_regret
        out["mean_realized_regret_se"] = curve.realized_regret_se
    if curve.collision_rate is not None:
        out["collision_rate"] = curve.collision_rate
    return out


def emit_csv(
    curves: Sequence[AggregateCurve],
    out_dir,
    config: ExperimentConfig | None = None,
    extra: dict | None = None,
    started: float | None = None,
) -> list[Path]:
    """Write ``<label>.csv`` per curve plus ``manifest.json``; returns the paths written.

    CSV rows are ascending in t with 9 significant digits and LF line endings.
    The manifest holds the resolved config, the seed, per-curve final values
    and wall-clock metadata, so only the CSVs are byte-reproducible.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for curve in curves:
        path = out_dir / f"{curve.label}.csv"
        try:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                write_csv(curve, fh)
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
        written.append(path)
    manifest = {
        "artifact": "mabspectrum",
        "version": __version__,
        "master_seed": config.master_seed if config is not None else None,
        "config": config.to_dict() if config is not None else None,
        "curves": [curve_summary(c) for c in curves],
        "files": [p.name for p in written],
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "elapsed_seconds": None if started is None else round(time.time() - started, 3),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            json.dump(manifest, fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    written.append(path)
    return written

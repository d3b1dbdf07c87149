"""JSON experiment configs.

Schema::

    {
      "instance": {"arms": [{"kind": "bernoulli", "p": 0.5}, ...]},
      "policies": [{"kind": "ucb", "alpha": 0.14}, {"kind": "ts"}, ...],
      "horizon": 10000,
      "n_runs": 10000,
      "master_seed": 1,
      "mode": "pulled-only",                      # or "full-table"
      "sweep": {"start": 0.14, "stop": 0.98, "step": 0.14, "extra": [0, 0.0464]},
      "collision_reward": 0.0                     # two-agent runs only
    }

Distribution kinds: ``bernoulli`` (p), ``beta`` (a, b), ``exponential`` (rate),
``finite`` (values, probs). Policy kinds: ``ucb`` (alpha), ``greedy``, ``ts``,
``fixed`` (arm); any policy may carry a ``label`` used as its output file name.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from .harness import ExperimentConfig

__all__ = ["ConfigError", "load_config", "parse_config", "dump_config", "shipped_config"]


class ConfigError(ValueError):
    """A config document that cannot be parsed or fails validation."""


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    try:
        return ExperimentConfig.from_dict(doc)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path) -> ExperimentConfig:
    """Read and validate a config file. ``OSError`` propagates for unreadable paths."""
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), str(path))


def dump_config(config: ExperimentConfig) -> str:
    return json.dumps(config.to_dict(), indent=2) + "\n"


def shipped_config(name: str) -> Path:
    """Path of a config bundled with the package: ``sim1``, ``sim2`` or ``two_agent``."""
    path = resources.files("mabspectrum") / "configs" / f"{name}.json"
    if not path.is_file():
        raise ConfigError(f"no shipped config named {name!r}")
    return Path(str(path))

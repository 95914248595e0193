"""Run configuration: a single JSON document holding the grid, agent,
reward, epsilon-schedule and experiment settings, plus the output directory.
Command-line flags override file values; the fully resolved document is
echoed into every run's manifest so a run can be reproduced bit-exactly from
the manifest alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict, replace
from pathlib import Path
from typing import Optional

from .dqn import AgentConfig, EpsilonSchedule
from .experiments import ExperimentSpec
from .world import GridConfig, RewardCoefs

CONFIG_SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    experiment: ExperimentSpec
    output_dir: str = "runs/experiment"


def default_config() -> RunConfig:
    """The stock setup: 5x5 grid, B=1800, 600-step episodes, scaled rates,
    psi=5, epsilon 0.5 decaying by 3e-6 per step to 0.2."""
    return RunConfig(experiment=ExperimentSpec(
        kind="threshold_sweep",
        psi_values=(5,),
        epsilon=EpsilonSchedule(start=0.5, decrement_per_step=3e-6, floor=0.2),
    ))


def to_json_dict(config: RunConfig) -> dict:
    exp = config.experiment
    doc = {
        "schema_version": CONFIG_SCHEMA_VERSION,
        "output_dir": config.output_dir,
        "experiment": {
            "kind": exp.kind,
            "grid": asdict(exp.grid),
            "agent": {**asdict(exp.agent),
                      "hidden_sizes": list(exp.agent.hidden_sizes)},
            "reward": asdict(exp.reward),
            "epsilon": asdict(exp.epsilon),
            "seeds": list(exp.seeds),
            "psi_values": list(exp.psi_values),
            "task_count": exp.task_count,
            "task_count_range": list(exp.task_count_range),
            "length_mode": exp.length_mode,
            "fixed_length": exp.fixed_length,
            "length_low": exp.length_low,
            "length_high": exp.length_high,
            "location_mode": exp.location_mode,
            "fixed_locations": list(exp.fixed_locations),
            "episodes": exp.episodes,
            "floor_episodes": exp.floor_episodes,
            "window": exp.window,
        },
    }
    return doc


def from_json_dict(doc: dict) -> RunConfig:
    if "config" in doc:  # manifest wrapper
        doc = doc["config"]
    if doc.get("schema_version", CONFIG_SCHEMA_VERSION) != CONFIG_SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema {doc.get('schema_version')}")
    exp = doc.get("experiment", {})
    try:
        spec = ExperimentSpec(
            kind=exp.get("kind", "threshold_sweep"),
            grid=GridConfig(**exp.get("grid", {})),
            agent=AgentConfig(**{**exp.get("agent", {}),
                                 "hidden_sizes": tuple(exp.get("agent", {}).get(
                                     "hidden_sizes", (128, 128)))}),
            reward=RewardCoefs(**exp.get("reward", {})),
            epsilon=EpsilonSchedule(**exp.get("epsilon", {})),
            seeds=tuple(exp.get("seeds", (1, 2, 3))),
            psi_values=tuple(exp.get("psi_values", (1, 2, 5, 10))),
            task_count=exp.get("task_count", 4),
            task_count_range=tuple(exp.get("task_count_range", range(2, 11))),
            length_mode=exp.get("length_mode", "fixed"),
            fixed_length=exp.get("fixed_length", 5),
            length_low=exp.get("length_low", 1),
            length_high=exp.get("length_high", 5),
            location_mode=exp.get("location_mode", "fixed"),
            fixed_locations=tuple(exp.get("fixed_locations",
                                          (11, 14, 16, 23))),
            episodes=exp.get("episodes", 0),
            floor_episodes=exp.get("floor_episodes", 100),
            window=exp.get("window", 100),
        )
    except TypeError as err:
        raise ConfigError(f"bad config field: {err}") from err
    return RunConfig(experiment=spec,
                     output_dir=doc.get("output_dir", "runs/experiment"))


def load_config(path: Path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    return from_json_dict(doc)


def apply_overrides(config: RunConfig, overrides: list[str]) -> RunConfig:
    """Apply ``dotted.path=value`` overrides on top of a config; values are
    parsed as JSON when possible, else taken as strings."""
    doc = to_json_dict(config)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not KEY=VALUE")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = doc
        parts = key.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigError(f"unknown config section {part!r} in {key!r}")
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config key {key!r}")
        node[parts[-1]] = value
    return from_json_dict(doc)


def write_manifest(config: RunConfig, out_dir: Path) -> Path:
    from . import __version__
    path = Path(out_dir) / "manifest.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "schema_version": CONFIG_SCHEMA_VERSION,
        "package_version": __version__,
        "config": to_json_dict(config),
    }
    path.write_text(json.dumps(payload, indent=2))
    return path

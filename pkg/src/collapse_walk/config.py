"""Experiment configuration: JSON files checked against the bundled schema."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from .errors import ConfigError, ValidationError
from .scenarios import scenario_from_config


@lru_cache(maxsize=1)
def schema() -> dict:
    text = resources.files("collapse_walk").joinpath("schema/config.schema.json").read_text("utf-8")
    return json.loads(text)


@dataclass(frozen=True)
class Tolerances:
    sigma: float = 4.0
    chi2_alpha: float = 0.01
    relative: float = 0.25


@dataclass
class ExperimentConfig:
    scenario: dict
    trials: int = 1
    master_seed: int | None = None
    sequencer_policy: str = "uniform-extension"
    output_dir: str | None = None
    traces: bool = False
    tolerances: Tolerances = field(default_factory=Tolerances)
    parallelism: int | None = None
    max_steps: int | None = None
    scale: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        validate(data)
        out = data.get("output", {})
        cfg = cls(
            scenario=dict(data["scenario"]),
            trials=int(data.get("trials", 1)),
            master_seed=data.get("master_seed"),
            sequencer_policy=data.get("sequencer", {}).get("policy", "uniform-extension"),
            output_dir=out.get("dir"),
            traces=bool(out.get("traces", False)),
            tolerances=Tolerances(**data.get("tolerances", {})),
            parallelism=data.get("parallelism"),
            max_steps=data.get("max_steps"),
            scale=dict(data.get("scale", {})),
            raw=copy.deepcopy(data),
        )
        try:
            scenario_from_config(cfg.scenario)
        except (ValidationError, ValueError) as exc:
            raise ConfigError(f"invalid scenario: {exc}") from exc
        return cfg

    def with_overrides(self, seed: int | None = None, trials: int | None = None) -> "ExperimentConfig":
        raw = copy.deepcopy(self.raw)
        if seed is not None:
            raw["master_seed"] = seed
        if trials is not None:
            raw["trials"] = trials
        return ExperimentConfig.from_dict(raw)


def validate(data: Any) -> None:
    try:
        jsonschema.validate(data, schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from exc


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text("utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(data)

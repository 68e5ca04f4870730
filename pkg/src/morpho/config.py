"""Experiment configuration: a YAML file mapping to validated settings.

The file is plain nested key/value YAML; every field has a default, so an
empty file is a valid config. Validation happens before any simulation
starts and reports the offending key path. A config round-trips through
``to_dict``/``from_dict`` and the YAML form losslessly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

import yaml

from .optimizers import COMBINATORS, METHODS
from .sim import (
    PROFILES,
    START_DISTANCE,
    EnvironmentSet,
    SimProfile,
    default_environment_set,
)

__all__ = ["ConfigError", "ExperimentConfig", "TrainSettings", "CooptSettings",
           "HillclimbSettings", "load_config", "config_sha256"]


class ConfigError(ValueError):
    """Invalid configuration; carries the key path of the offending value."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


@dataclass(frozen=True)
class TrainSettings:
    methods: tuple[str, ...] = METHODS
    budget: int = 3000
    seeds_per_design: int = 3
    sample: int | None = None   # stratified sample size; None = all designs
    strata: int = 10

    def validate(self) -> None:
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError("train.methods", f"unknown method {m!r}")
        if self.budget < 1:
            raise ConfigError("train.budget", "must be >= 1")
        if self.seeds_per_design < 1:
            raise ConfigError("train.seeds_per_design", "must be >= 1")
        if self.sample is not None and self.sample < 1:
            raise ConfigError("train.sample", "must be >= 1 or omitted")
        if self.strata < 1:
            raise ConfigError("train.strata", "must be >= 1")


@dataclass(frozen=True)
class CooptSettings:
    budget: int = 5000
    seeds: int = 15
    population: int = 52

    def validate(self) -> None:
        if self.seeds < 1:
            raise ConfigError("coopt.seeds", "must be >= 1")
        if self.population < 2 or self.population % 2:
            raise ConfigError("coopt.population", "must be an even number >= 2")
        if self.budget < self.population:
            raise ConfigError("coopt.budget", "must cover at least one population")


@dataclass(frozen=True)
class HillclimbSettings:
    """Hill-climber study settings. Evaluations use end-of-trial distances,
    so the horizon is short by default to keep end distances informative."""

    combinators: tuple[str, ...] = ("sum", "min")
    pop: int = 50
    generations: int = 300
    mutation_scale: float = 0.05
    runs: int = 10
    dt: float = 0.1
    steps: int = 500

    def validate(self) -> None:
        for c in self.combinators:
            if c not in COMBINATORS:
                raise ConfigError("hillclimb.combinators", f"unknown combinator {c!r}")
        if self.pop < 1:
            raise ConfigError("hillclimb.pop", "must be >= 1")
        if self.generations < 1:
            raise ConfigError("hillclimb.generations", "must be >= 1")
        if self.mutation_scale < 0:
            raise ConfigError("hillclimb.mutation_scale", "must be >= 0")
        if self.runs < 1:
            raise ConfigError("hillclimb.runs", "must be >= 1")
        if self.dt <= 0 or self.steps < 1:
            raise ConfigError("hillclimb.dt", "need dt > 0 and steps >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    profile: str = "desk"            # profile name, or "custom" with dt/steps
    dt: float | None = None
    steps: int | None = None
    bins: int = 5
    grid_n: int = 41
    distance: float = START_DISTANCE
    environments: int = 4
    headings: tuple[float, ...] | None = None
    master_seed: int = 0
    store_success_matrices: bool = False
    train: TrainSettings = field(default_factory=TrainSettings)
    coopt: CooptSettings = field(default_factory=CooptSettings)
    hillclimb: HillclimbSettings = field(default_factory=HillclimbSettings)

    def sim_profile(self) -> SimProfile:
        if self.profile == "custom":
            return SimProfile(dt=self.dt, steps=self.steps)
        return PROFILES[self.profile]

    def environment_set(self) -> EnvironmentSet:
        headings = list(self.headings) if self.headings is not None else None
        return default_environment_set(self.distance, self.environments, headings)

    def hillclimb_profile(self) -> SimProfile:
        return SimProfile(dt=self.hillclimb.dt, steps=self.hillclimb.steps)

    def validate(self) -> None:
        if self.profile not in (*PROFILES, "custom"):
            raise ConfigError("profile",
                              f"expected one of {sorted(PROFILES)} or 'custom'")
        if self.profile == "custom":
            if self.dt is None or self.steps is None:
                raise ConfigError("profile", "custom profile needs dt and steps")
            try:
                SimProfile(dt=self.dt, steps=self.steps)
            except ValueError as exc:
                raise ConfigError("dt/steps", str(exc)) from exc
        if self.bins < 1:
            raise ConfigError("bins", "must be >= 1")
        if self.grid_n < 3 or self.grid_n % 2 == 0:
            raise ConfigError("grid_n", "must be odd and >= 3")
        if not 1 <= self.environments <= 4:
            raise ConfigError("environments", "must be in 1..4")
        if self.headings is not None and len(self.headings) != self.environments:
            raise ConfigError("headings",
                              f"expected {self.environments} values")
        if self.distance <= 0:
            raise ConfigError("distance", "must be positive")
        try:
            self.environment_set().validate_against(self.sim_profile())
        except ValueError as exc:
            raise ConfigError("distance", str(exc)) from exc
        self.train.validate()
        self.coopt.validate()
        self.hillclimb.validate()

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("headings",):
            if d[key] is not None:
                d[key] = list(d[key])
        d["train"]["methods"] = list(d["train"]["methods"])
        d["hillclimb"]["combinators"] = list(d["hillclimb"]["combinators"])
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        def build(dc_cls, payload, path):
            if payload is None:
                payload = {}
            if not isinstance(payload, dict):
                raise ConfigError(path, f"expected a mapping, got {type(payload).__name__}")
            known = {f.name for f in fields(dc_cls)}
            unknown = set(payload) - known
            if unknown:
                raise ConfigError(path, f"unknown keys: {sorted(unknown)}")
            kwargs = {}
            for key, value in payload.items():
                if isinstance(value, list):
                    value = tuple(value)
                kwargs[key] = value
            try:
                return dc_cls(**kwargs)
            except TypeError as exc:
                raise ConfigError(path, str(exc)) from exc

        data = dict(data or {})
        nested = {
            "train": build(TrainSettings, data.pop("train", None), "train"),
            "coopt": build(CooptSettings, data.pop("coopt", None), "coopt"),
            "hillclimb": build(HillclimbSettings, data.pop("hillclimb", None), "hillclimb"),
        }
        cfg = build(ExperimentConfig, data, "")
        return ExperimentConfig(
            **{f.name: getattr(cfg, f.name) for f in fields(cls)
               if f.name not in nested} | nested
        )

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)


def load_config(path: str | None) -> ExperimentConfig:
    """Parse and validate a YAML config file; None gives the defaults."""
    if path is None:
        cfg = ExperimentConfig()
        cfg.validate()
        return cfg
    try:
        with open(path, encoding="utf-8") as handle:
            data = yaml.safe_load(handle)
    except FileNotFoundError:
        raise ConfigError("", f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}:{mark.column + 1}" if mark else path
        raise ConfigError("", f"invalid YAML at {where}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("", f"{path}: top level must be a mapping")
    cfg = ExperimentConfig.from_dict(data)
    cfg.validate()
    return cfg


def config_sha256(cfg: ExperimentConfig) -> str:
    """Content hash of the resolved configuration."""
    canon = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()

"""Run configuration: a nested YAML file with validated defaults.

Environment overrides are restricted to paths and seeds: LATTICEFS_OUT
replaces `paths.out`, LATTICEFS_SEED replaces the seed list with a single
seed.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from ._io import config_hash
from .synthgen import SynthConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    synth: SynthConfig | None = None
    csv: str | None = None
    schema: str | None = None
    discretize: dict[str, int] = field(default_factory=dict)
    subgroup_features: list[str] = field(default_factory=lambda: ["grp"])
    missing_p: float | None = 0.2
    level_min: int = 1
    level_max: int | None = None
    sampling_method: str = "randwalk"
    budget: float = 1.0
    model: dict = field(default_factory=dict)
    knn_enabled: bool = True
    knn_k: int = 5
    mlp_enabled: bool = True
    mlp: dict = field(default_factory=dict)
    m: int = 3
    K: int = 10
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])
    out: str = "out"
    workers: int = 1
    bench: dict = field(default_factory=dict)

    def validate(self) -> None:
        if (self.synth is None) == (self.csv is None):
            raise ConfigError(
                "configure exactly one of dataset.synth or dataset.csv"
            )
        if self.csv is not None and self.schema is None:
            raise ConfigError("dataset.csv requires dataset.schema")
        if not 0 < self.budget <= 1:
            raise ConfigError("sampling.budget must be in (0, 1]")
        if self.missing_p is not None and not 0 <= self.missing_p < 1:
            raise ConfigError("missing.p must be in [0, 1)")
        if self.K < 1:
            raise ConfigError("query.K must be at least 1")
        if self.level_min < 1:
            raise ConfigError("lattice.level_min must be at least 1")
        if self.level_max is not None and self.level_max < self.level_min:
            raise ConfigError("lattice.level_max below level_min")
        if self.m < self.level_min or (
            self.level_max is not None and self.m > self.level_max
        ):
            raise ConfigError("query.m must lie within the level bounds")
        if self.sampling_method not in ("randwalk", "arbitrary"):
            raise ConfigError("sampling.method must be randwalk or arbitrary")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.synth is not None:
            try:
                self.synth.validate()
            except ValueError as err:
                raise ConfigError(f"dataset.synth: {err}") from None

    def level_bounds(self, n: int) -> tuple[int, int]:
        hi = self.level_max if self.level_max is not None else n
        if not 1 <= self.level_min <= hi <= n:
            raise ConfigError(
                f"level bounds ({self.level_min}, {hi}) invalid for {n} features"
            )
        return self.level_min, hi

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    def hash(self) -> str:
        return config_hash(self.to_dict())

    @property
    def out_path(self) -> Path:
        return Path(self.out)


def _get(section: dict, key: str, default=None):
    return section.get(key, default) if section else default


def config_from_dict(raw: dict) -> RunConfig:
    dataset = raw.get("dataset", {}) or {}
    synth = None
    if dataset.get("synth") is not None:
        synth_raw = dict(dataset["synth"])
        unknown = set(synth_raw) - set(SynthConfig.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown dataset.synth keys: {sorted(unknown)}")
        synth = SynthConfig(**synth_raw)

    missing = raw.get("missing", {}) or {}
    lattice = raw.get("lattice", {}) or {}
    sampling = raw.get("sampling", {}) or {}
    baselines = raw.get("baselines", {}) or {}
    knn = baselines.get("knn", {}) or {}
    mlp = baselines.get("mlp", {}) or {}
    query = raw.get("query", {}) or {}
    paths = raw.get("paths", {}) or {}

    cfg = RunConfig(
        synth=synth,
        csv=dataset.get("csv"),
        schema=dataset.get("schema"),
        discretize=dict(dataset.get("discretize") or {}),
        subgroup_features=list(
            _get(raw.get("subgroups"), "features", ["grp"])
        ),
        missing_p=missing.get("p", 0.2),
        level_min=lattice.get("level_min", 1),
        level_max=lattice.get("level_max"),
        sampling_method=sampling.get("method", "randwalk"),
        budget=sampling.get("budget", 1.0),
        model=dict(raw.get("model") or {}),
        knn_enabled=knn.get("enabled", True),
        knn_k=knn.get("k", 5),
        mlp_enabled=mlp.get("enabled", True),
        mlp={k: v for k, v in mlp.items() if k != "enabled"},
        m=query.get("m", 3),
        K=query.get("K", 10),
        seeds=[int(s) for s in raw.get("seeds", [0, 1, 2])],
        out=paths.get("out", "out"),
        workers=int(raw.get("workers", 1)),
        bench=dict(raw.get("bench") or {}),
    )

    if os.environ.get("LATTICEFS_OUT"):
        cfg.out = os.environ["LATTICEFS_OUT"]
    if os.environ.get("LATTICEFS_SEED"):
        cfg.seeds = [int(os.environ["LATTICEFS_SEED"])]

    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path} is not a mapping")
    try:
        return config_from_dict(raw)
    except TypeError as err:
        raise ConfigError(str(err)) from None

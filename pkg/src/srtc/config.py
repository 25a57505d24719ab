"""Run configuration: a single YAML document with nested sections.

The parsed configuration normalizes into a canonical dict whose SHA-256
digest names the run, so equivalent configs land in identically named
run directories and checkpoints can record their provenance.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from srtc.data import (DEFAULT_MIN_RSS_DB, CsvSchema, EnvironmentConfig)
from srtc.distill import ALL_CONSTRAINTS, DistillConfig
from srtc.experts import ExpertConfig
from srtc.losses import LossWeights


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


@dataclass
class ModelSection:
    hidden: int = 128
    d_repr: int = 64
    d_noise: int = 64

    def validate(self):
        for name in ("hidden", "d_repr", "d_noise"):
            if getattr(self, name) < 1:
                raise ConfigError(f"model.{name} must be >= 1")


@dataclass
class DataSpec:
    """One dataset: either a synthetic environment or a CSV file."""

    name: str
    synthetic: EnvironmentConfig | None = None
    samples: int = 512
    csv_path: str | None = None
    schema: CsvSchema | None = None

    def validate(self):
        if (self.synthetic is None) == (self.csv_path is None):
            raise ConfigError(
                f"dataset {self.name!r} needs exactly one of "
                f"'synthetic' or 'csv'")
        if self.synthetic is not None:
            self.synthetic.validate()
            if self.samples < 1:
                raise ConfigError(
                    f"dataset {self.name!r}: samples must be >= 1")
        if self.csv_path is not None and not Path(self.csv_path).is_file():
            raise ConfigError(
                f"dataset {self.name!r}: file not found: {self.csv_path}")


@dataclass
class DataSection:
    sources: list[DataSpec] = field(default_factory=list)
    target: DataSpec | None = None
    train_fraction: float = 0.8
    target_subsample: float | None = None
    min_rss_db: float = DEFAULT_MIN_RSS_DB

    def validate(self):
        if self.target is None:
            raise ConfigError("data.target is required")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("data.train_fraction must be in (0, 1)")
        if self.target_subsample is not None and not (
                0.0 < self.target_subsample < 1.0):
            raise ConfigError("data.target_subsample must be in (0, 1)")
        names = [s.name for s in self.sources] + [self.target.name]
        if len(set(names)) != len(names):
            raise ConfigError(f"dataset names must be unique: {names}")
        for spec in self.sources:
            spec.validate()
        self.target.validate()


@dataclass
class EvalSection:
    thresholds_m: tuple[float, ...] = (10.0,)
    cdf_grid_m: float = 0.5

    def validate(self):
        if self.cdf_grid_m <= 0:
            raise ConfigError("eval.cdf_grid_m must be positive")


@dataclass
class RunConfig:
    seed: int = 0
    model: ModelSection = field(default_factory=ModelSection)
    data: DataSection = field(default_factory=DataSection)
    expert: ExpertConfig = field(default_factory=ExpertConfig)
    distilling: DistillConfig = field(default_factory=DistillConfig)
    eval: EvalSection = field(default_factory=EvalSection)

    def validate(self):
        self.model.validate()
        self.data.validate()
        self.expert.validate()
        self.distilling.validate()
        self.eval.validate()

    def as_canonical_dict(self) -> dict:
        lw = self.distilling.weights
        return {
            "seed": self.seed,
            "model": {"hidden": self.model.hidden,
                      "d_repr": self.model.d_repr,
                      "d_noise": self.model.d_noise},
            "data": {
                "sources": [_spec_dict(s) for s in self.data.sources],
                "target": _spec_dict(self.data.target),
                "train_fraction": self.data.train_fraction,
                "target_subsample": self.data.target_subsample,
                "min_rss_db": self.data.min_rss_db,
            },
            "expert_training": {
                "epochs": self.expert.epochs,
                "lr": self.expert.lr,
                "c_step": self.expert.c_step,
                "alpha_margin": self.expert.alpha_margin,
                "alpha_gp": self.expert.alpha_gp,
                "betas": list(self.expert.betas),
                "batch_size": self.expert.batch_size,
                "adversarial": self.expert.adversarial,
            },
            "distilling": {
                "epochs": self.distilling.epochs,
                "lr": self.distilling.lr,
                "lambdas": [lw.w_mae, lw.w_sim, lw.w_mi, lw.w_fi],
                "alpha_margin": self.distilling.alpha_margin,
                "batch_size": self.distilling.batch_size,
                "power_iters": self.distilling.power_iters,
                "constraints": sorted(self.distilling.constraints),
            },
            "eval": {"thresholds_m": list(self.eval.thresholds_m),
                     "cdf_grid_m": self.eval.cdf_grid_m},
        }

    def digest(self) -> str:
        canon = json.dumps(self.as_canonical_dict(), sort_keys=True,
                           separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _spec_dict(spec: DataSpec) -> dict:
    out: dict = {"name": spec.name}
    if spec.synthetic is not None:
        env = spec.synthetic
        out["synthetic"] = {
            "n_anchors": env.n_anchors,
            "width_m": env.width_m,
            "height_m": env.height_m,
            "path_loss_exponent": env.path_loss_exponent,
            "ref_power_db": env.ref_power_db,
            "ref_distance_m": env.ref_distance_m,
            "noise_std_db": env.noise_std_db,
            "dropout_prob": env.dropout_prob,
            "detection_floor_db": env.detection_floor_db,
        }
        out["samples"] = spec.samples
    else:
        out["csv"] = {"path": spec.csv_path, "schema": _schema_dict(spec.schema)}
    return out


def _schema_dict(schema: CsvSchema | None) -> dict:
    schema = schema or CsvSchema(rss_prefix="WAP")
    return {
        "rss_columns": schema.rss_columns,
        "rss_prefix": schema.rss_prefix,
        "x_column": schema.x_column,
        "y_column": schema.y_column,
        "x_offset": schema.x_offset,
        "y_offset": schema.y_offset,
        "x_scale": schema.x_scale,
        "y_scale": schema.y_scale,
    }


def _take(section: dict, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")


def _parse_spec(raw: dict, where: str) -> DataSpec:
    _take(raw, {"name", "synthetic", "samples", "csv"}, where)
    if "name" not in raw:
        raise ConfigError(f"{where}: dataset needs a name")
    spec = DataSpec(name=str(raw["name"]))
    if "synthetic" in raw:
        syn = dict(raw["synthetic"])
        _take(syn, {"n_anchors", "width_m", "height_m",
                    "path_loss_exponent", "ref_power_db", "ref_distance_m",
                    "noise_std_db", "dropout_prob", "detection_floor_db"},
              f"{where}.synthetic")
        if "n_anchors" not in syn:
            raise ConfigError(f"{where}.synthetic: n_anchors is required")
        spec.synthetic = EnvironmentConfig(**syn)
        spec.samples = int(raw.get("samples", spec.samples))
    if "csv" in raw:
        csv_raw = dict(raw["csv"])
        _take(csv_raw, {"path", "schema"}, f"{where}.csv")
        spec.csv_path = str(csv_raw.get("path", ""))
        schema_raw = dict(csv_raw.get("schema") or {"rss_prefix": "WAP"})
        _take(schema_raw, {"rss_columns", "rss_prefix", "x_column",
                           "y_column", "x_offset", "y_offset", "x_scale",
                           "y_scale"}, f"{where}.csv.schema")
        spec.schema = CsvSchema(**schema_raw)
    return spec


def parse_run_config(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    _take(raw, {"seed", "model", "data", "expert_training", "distilling",
                "eval"}, "config")
    cfg = RunConfig(seed=int(raw.get("seed", 0)))

    model_raw = dict(raw.get("model", {}))
    _take(model_raw, {"hidden", "d_repr", "d_noise"}, "model")
    cfg.model = ModelSection(**{k: int(v) for k, v in model_raw.items()})

    data_raw = dict(raw.get("data", {}))
    _take(data_raw, {"sources", "target", "train_fraction",
                     "target_subsample", "min_rss_db"}, "data")
    cfg.data = DataSection(
        sources=[_parse_spec(dict(s), f"data.sources[{i}]")
                 for i, s in enumerate(data_raw.get("sources", []))],
        target=(_parse_spec(dict(data_raw["target"]), "data.target")
                if "target" in data_raw else None),
        train_fraction=float(data_raw.get("train_fraction", 0.8)),
        target_subsample=(float(data_raw["target_subsample"])
                          if data_raw.get("target_subsample") is not None
                          else None),
        min_rss_db=float(data_raw.get("min_rss_db", DEFAULT_MIN_RSS_DB)),
    )

    expert_raw = dict(raw.get("expert_training", {}))
    _take(expert_raw, {"epochs", "lr", "c_step", "alpha_margin", "alpha_gp",
                       "betas", "batch_size", "adversarial"},
          "expert_training")
    if "betas" in expert_raw:
        expert_raw["betas"] = tuple(float(b) for b in expert_raw["betas"])
    cfg.expert = ExpertConfig(hidden=cfg.model.hidden,
                              d_repr=cfg.model.d_repr,
                              d_noise=cfg.model.d_noise, **expert_raw)

    distill_raw = dict(raw.get("distilling", {}))
    _take(distill_raw, {"epochs", "lr", "lambdas", "alpha_margin",
                        "batch_size", "power_iters", "constraints"},
          "distilling")
    if "lambdas" in distill_raw:
        lam = [float(v) for v in distill_raw.pop("lambdas")]
        if len(lam) != 4:
            raise ConfigError("distilling.lambdas must have 4 entries")
        distill_raw["weights"] = LossWeights(*lam)
    if "constraints" in distill_raw:
        distill_raw["constraints"] = frozenset(
            str(c) for c in distill_raw["constraints"])
    else:
        distill_raw["constraints"] = ALL_CONSTRAINTS
    cfg.distilling = DistillConfig(hidden=cfg.model.hidden,
                                   d_repr=cfg.model.d_repr, **distill_raw)

    eval_raw = dict(raw.get("eval", {}))
    _take(eval_raw, {"thresholds_m", "cdf_grid_m"}, "eval")
    cfg.eval = EvalSection(
        thresholds_m=tuple(float(t)
                           for t in eval_raw.get("thresholds_m", (10.0,))),
        cdf_grid_m=float(eval_raw.get("cdf_grid_m", 0.5)),
    )

    try:
        cfg.validate()
    except ValueError as err:
        raise ConfigError(str(err)) from None
    return cfg


def load_run_config(path, seed_override: int | None = None) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if seed_override is not None:
        raw = dict(raw or {})
        raw["seed"] = int(seed_override)
    return parse_run_config(raw or {})


def dump_run_config(cfg: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(cfg.as_canonical_dict(), fh, sort_keys=True)

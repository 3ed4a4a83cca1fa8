"""Run configuration: one YAML file, CLI overrides on top."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .carbon import PowerModel
from .datasets import TRUE_PERIOD, DomainSpec, load_csv
from .errors import InvalidArgumentError
from .sweep import (DEFAULT_THRESHOLD, PRESET_NAMES, CsvProblem, ModelPreset, ToyProblem,
                    custom_preset, make_preset)
from .training import TrainConfig

SHIPPED_CONFIGS = ("toy_standard", "toy_upsampled")
MODES = ("measured", "fast")

_TOP_KEYS = {"seed", "mode", "threshold", "output_dir", "presets", "data", "domain", "train", "power"}
_DATA_KEYS = {"source", "path", "true_period", "resample_repeats", "eval_region"}
_TRAIN_KEYS = {"iterations", "learning_rate", "starts", "repeats", "adam_betas", "adam_eps"}


@dataclass(frozen=True)
class DataConfig:
    source: str = "toy"
    path: str | None = None
    true_period: float | None = None
    resample_repeats: bool = True
    eval_region: str = "full"

    @property
    def period(self) -> float:
        if self.true_period is not None:
            return float(self.true_period)
        if self.source == "toy":
            return TRUE_PERIOD
        raise InvalidArgumentError("data.true_period is required for csv data")


@dataclass(frozen=True)
class RunConfig:
    domain: DomainSpec = field(default_factory=DomainSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    power: PowerModel | None = None
    presets: tuple = PRESET_NAMES
    output_dir: str = "runs/out"
    seed: int = 0
    threshold: float = DEFAULT_THRESHOLD
    mode: str = "measured"
    data: DataConfig = field(default_factory=DataConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidArgumentError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not (isinstance(self.threshold, (int, float)) and math.isfinite(self.threshold)
                and self.threshold > 0):
            raise InvalidArgumentError(f"threshold must be positive, got {self.threshold!r}")
        if self.data.source not in ("toy", "csv"):
            raise InvalidArgumentError(f"data.source must be 'toy' or 'csv', got {self.data.source!r}")
        if self.data.source == "csv" and not self.data.path:
            raise InvalidArgumentError("data.path is required when data.source is 'csv'")
        if self.data.eval_region not in ("full", "uncovered"):
            raise InvalidArgumentError(f"bad data.eval_region {self.data.eval_region!r}")
        if not self.presets:
            raise InvalidArgumentError("at least one preset is required")
        # seed lives at the top level; keep the training config in step with it
        if self.train.seed != self.seed:
            object.__setattr__(self, "train", replace(self.train, seed=int(self.seed)))
        self.resolve_presets()

    def resolve_presets(self) -> list[ModelPreset]:
        out = []
        for p in self.presets:
            if isinstance(p, str):
                out.append(make_preset(p, self.data.period))
            elif isinstance(p, dict):
                out.append(custom_preset(p))
            else:
                raise InvalidArgumentError(f"cannot interpret preset {p!r}")
        return out

    def problem(self):
        if self.data.source == "csv":
            return CsvProblem(load_csv(self.data.path), self.data.eval_region)
        return ToyProblem(self.domain, self.seed, self.data.resample_repeats, self.data.eval_region)

    def to_dict(self) -> dict[str, Any]:
        d = self.domain
        t = self.train
        return {
            "seed": self.seed,
            "mode": self.mode,
            "threshold": self.threshold,
            "output_dir": self.output_dir,
            "presets": list(self.presets),
            "data": {"source": self.data.source, "path": self.data.path,
                     "true_period": self.data.true_period,
                     "resample_repeats": self.data.resample_repeats,
                     "eval_region": self.data.eval_region},
            "domain": {"x1_range": list(d.x1_range), "x2_range": list(d.x2_range),
                       "points_per_decile": d.points_per_decile, "noise_sd": d.noise_sd,
                       "grid_resolution": list(d.grid_resolution)},
            "train": {"iterations": t.iterations, "learning_rate": t.learning_rate,
                      "starts": t.starts, "repeats": t.repeats,
                      "adam_betas": list(t.adam_betas), "adam_eps": t.adam_eps},
            "power": self.power.to_dict() if self.power else None,
        }

    def config_hash(self) -> str:
        """Digest of every field that can change results; the output directory is excluded."""
        semantic = self.to_dict()
        semantic.pop("output_dir")
        blob = json.dumps(semantic, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _check_keys(section: str, got: dict, allowed: set) -> None:
    unknown = set(got) - allowed
    if unknown:
        raise InvalidArgumentError(f"unknown keys in {section}: {sorted(unknown)}")


def from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise InvalidArgumentError("config must be a mapping")
    _check_keys("config", raw, _TOP_KEYS)
    data = dict(raw.get("data") or {})
    _check_keys("data", data, _DATA_KEYS)
    train = dict(raw.get("train") or {})
    _check_keys("train", train, _TRAIN_KEYS)
    try:
        domain = DomainSpec(**{k: tuple(v) if isinstance(v, list) else v
                               for k, v in (raw.get("domain") or {}).items()})
        if "adam_betas" in train:
            train["adam_betas"] = tuple(train["adam_betas"])
        seed = int(raw.get("seed", 0))
        power = PowerModel(**raw["power"]) if raw.get("power") else None
        return RunConfig(
            domain=domain,
            train=TrainConfig(seed=seed, **train),
            power=power,
            presets=tuple(raw.get("presets") or PRESET_NAMES),
            output_dir=str(raw.get("output_dir", "runs/out")),
            seed=seed,
            threshold=float(raw.get("threshold", DEFAULT_THRESHOLD)),
            mode=str(raw.get("mode", "measured")),
            data=DataConfig(**data),
        )
    except TypeError as exc:
        raise InvalidArgumentError(f"bad config: {exc}") from None


def load_config(path_or_name: str | Path) -> RunConfig:
    """Load a YAML config from a path, or one of the shipped configs by name."""
    name = str(path_or_name)
    if name in SHIPPED_CONFIGS:
        text = resources.files("greygp").joinpath(f"configs/{name}.yaml").read_text(encoding="utf-8")
        source, base_dir = name, None
    else:
        path = Path(name)
        if not path.exists():
            raise FileNotFoundError(
                f"config not found: {path} (shipped configs: {', '.join(SHIPPED_CONFIGS)})")
        text = path.read_text(encoding="utf-8")
        source, base_dir = str(path), path.parent
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise InvalidArgumentError(f"{source}: invalid YAML: {exc}") from None
    cfg = from_dict(raw or {})
    if cfg.data.source == "csv" and base_dir is not None and not Path(cfg.data.path).is_absolute():
        # resolve data paths relative to the config file
        cfg = replace(cfg, data=replace(cfg.data, path=str(base_dir / cfg.data.path)))
    return cfg


def with_overrides(cfg: RunConfig, *, seed=None, mode=None, threshold=None, output_dir=None) -> RunConfig:
    changes: dict[str, Any] = {}
    if seed is not None:
        changes["seed"] = int(seed)
        changes["train"] = replace(cfg.train, seed=int(seed))
    if mode is not None:
        changes["mode"] = mode
    if threshold is not None:
        changes["threshold"] = float(threshold)
    if output_dir is not None:
        changes["output_dir"] = str(output_dir)
    return replace(cfg, **changes) if changes else cfg

"""Experiment and sweep configuration files (JSON or YAML).

Unknown keys are rejected; omitted keys take the defaults of the noisy Burgers
run (``lam=1.5``, ``beta=1.0``, ``learning_rate=1e-4``, 30000 steps).
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .data import split_n_u
from .gan import TrainConfig

__all__ = [
    "ConfigError",
    "TrainSection",
    "ModelSection",
    "DataSection",
    "EvalSection",
    "ExperimentConfig",
    "SweepConfig",
    "STUDIES",
    "APPENDIX_B_BASE",
    "parse_config",
    "parse_sweep_config",
    "load_mapping",
    "dump_config",
]

SWEEP_AXES = ("seed", "n_u", "n_r", "width", "depth", "k_g", "k_d")


class ConfigError(ValueError):
    pass


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class TrainSection(_Section):
    lam: float = 1.5
    beta: float = Field(1.0, ge=0)
    learning_rate: float = Field(1e-4, gt=0)
    adam_beta1: float = Field(0.9, ge=0, lt=1)
    adam_beta2: float = Field(0.999, ge=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)
    steps: int = Field(30000, ge=0)
    k_g: int = Field(5, ge=1)
    k_d: int = Field(1, ge=1)
    data_batch: Optional[int] = Field(None, ge=1)
    colloc_batch: int = Field(128, ge=1)
    resample_collocation: bool = False
    pde_fresh_z: bool = True
    mode: Literal["adversarial", "pinn"] = "adversarial"
    log_sigma_min: float = 0.0
    log_sigma_max: float = 10.0
    log_every: int = Field(100, ge=1)

    @model_validator(mode="after")
    def _sigma_range(self):
        if self.log_sigma_min > self.log_sigma_max:
            raise ValueError("log_sigma_min must not exceed log_sigma_max")
        return self


class ModelSection(_Section):
    gen_layers: int = Field(4, ge=1)
    gen_width: int = Field(50, ge=1)
    enc_layers: int = Field(4, ge=1)
    enc_width: int = Field(50, ge=1)
    disc_layers: int = Field(4, ge=1)
    disc_width: int = Field(50, ge=1)


class DataSection(_Section):
    """Observation counts.  ``n_u`` splits evenly over the initial condition and both boundaries."""

    n_initial: int = Field(100, ge=0)
    n_boundary_per_side: int = Field(50, ge=0)
    n_collocation: int = Field(10000, ge=0)
    noisy: bool = True

    @model_validator(mode="before")
    @classmethod
    def _shorthands(cls, data):
        if not isinstance(data, dict):
            return data
        data = dict(data)
        if "n_r" in data:
            if "n_collocation" in data:
                raise ValueError("give either n_r or n_collocation, not both")
            data["n_collocation"] = data.pop("n_r")
        if "n_u" in data:
            if "n_initial" in data or "n_boundary_per_side" in data:
                raise ValueError("give either n_u or n_initial/n_boundary_per_side, not both")
            n_u = data.pop("n_u")
            if not isinstance(n_u, int) or n_u < 0:
                raise ValueError("n_u must be a non-negative integer")
            data["n_initial"], data["n_boundary_per_side"] = split_n_u(n_u)
        return data

    @property
    def n_u(self) -> int:
        return self.n_initial + 2 * self.n_boundary_per_side


class EvalSection(_Section):
    grid_nx: int = Field(256, ge=2)
    grid_nt: int = Field(100, ge=2)
    n_samples: int = Field(2000, ge=1)
    n_test: int = Field(25600, ge=1)
    test_seed: int = 1234
    test_samples: int = Field(256, ge=1)
    profile_times: tuple[float, ...] = (0.5, 0.75)


class ExperimentConfig(_Section):
    seed: int = 0
    out_dir: Optional[str] = None
    train: TrainSection = TrainSection()
    model: ModelSection = ModelSection()
    data: DataSection = DataSection()
    eval: EvalSection = EvalSection()

    def train_config(self, seed: int | None = None) -> TrainConfig:
        return TrainConfig(
            **self.train.model_dump(),
            **self.model.model_dump(),
            seed=self.seed if seed is None else seed,
        )

    def with_overrides(self, **sections) -> "ExperimentConfig":
        """Copy with per-section field overrides, e.g. ``with_overrides(train={"k_g": 2})``."""
        raw = self.model_dump()
        for name, values in sections.items():
            if isinstance(values, dict):
                raw[name].update(values)
            else:
                raw[name] = values
        return ExperimentConfig.model_validate(raw)


APPENDIX_B_BASE = {
    "data": {"noisy": False, "n_initial": 50, "n_boundary_per_side": 50, "n_collocation": 10000},
    "model": {"disc_layers": 3},
}

STUDIES: dict[str, dict] = {
    "seeds15": {"axes": {"seed": list(range(15))}},
    "nu_nr": {"axes": {"n_u": [60, 90, 150], "n_r": [10, 100, 250, 500, 1000, 5000, 10000]}},
    "arch": {"axes": {"depth": [2, 3, 4], "width": [20, 50, 100]}},
    "kgkd": {"axes": {"k_g": [1, 2, 5], "k_d": [1, 2, 5]}},
}


class SweepConfig(_Section):
    study: Optional[Literal["seeds15", "nu_nr", "arch", "kgkd"]] = None
    axes: dict[str, list[int]] = Field(default_factory=dict)
    trials_per_cell: int = Field(1, ge=1)
    master_seed: int = 0
    base: ExperimentConfig = ExperimentConfig()

    @model_validator(mode="before")
    @classmethod
    def _fill(cls, data):
        if not isinstance(data, dict):
            return data
        data = dict(data)
        study = data.get("study")
        if study is not None and data.get("axes"):
            raise ValueError("give either a built-in study or custom axes, not both")
        if study in STUDIES:
            data["axes"] = STUDIES[study]["axes"]
        base = data.get("base") or {}
        if isinstance(base, dict):
            merged = {k: dict(v) for k, v in APPENDIX_B_BASE.items()}
            for key, value in base.items():
                if isinstance(value, dict) and key in merged:
                    if key == "data" and ({"n_u", "n_r"} & set(value)):
                        merged[key] = {k: v for k, v in merged[key].items() if not _shadowed(k, value)}
                    merged[key].update(value)
                else:
                    merged[key] = value
            data["base"] = merged
        return data

    @model_validator(mode="after")
    def _check_axes(self):
        if not self.axes:
            raise ValueError("sweep needs a study or at least one axis")
        for name, values in self.axes.items():
            if name not in SWEEP_AXES:
                raise ValueError(f"unknown sweep axis {name!r}; expected one of {SWEEP_AXES}")
            if not values:
                raise ValueError(f"axis {name!r} is empty")
        return self


def _shadowed(key: str, override: dict) -> bool:
    if "n_u" in override and key in ("n_initial", "n_boundary_per_side"):
        return True
    return "n_r" in override and key == "n_collocation"


def load_mapping(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: no such config file")
    text = path.read_text()
    if not text.strip():
        return {}
    try:
        if path.suffix in (".yaml", ".yml"):
            data = yaml.safe_load(text)
        else:
            data = json.loads(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: malformed config ({exc})") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def _format_error(path, exc: ValidationError) -> ConfigError:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        msg = err["msg"]
        if err["type"] == "extra_forbidden":
            msg = "unknown key"
        lines.append(f"{loc}: {msg}")
    return ConfigError(f"{path}: invalid config\n  " + "\n  ".join(lines))


def parse_config(path) -> ExperimentConfig:
    data = load_mapping(path)
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise _format_error(path, exc) from None


def parse_sweep_config(path) -> SweepConfig:
    data = load_mapping(path)
    try:
        return SweepConfig.model_validate(data)
    except ValidationError as exc:
        raise _format_error(path, exc) from None


def dump_config(cfg: BaseModel) -> str:
    """Fully-resolved config as JSON; parses back to an equal config."""
    return json.dumps(cfg.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"

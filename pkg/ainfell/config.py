"""Run configuration: JSON file with ``<ENV_VAR>`` placeholders, env overrides, CLI flags."""

import json
import logging
import os
import re
from pathlib import Path
from typing import Any, Literal, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from ainfell.errors import ConfigError

logger = logging.getLogger(__name__)

load_dotenv()

_PLACEHOLDER = re.compile(r"^<(.+)>$")


class TruncationPolicy(BaseModel):
    """Target absolute tail bound and hard cap on the summation radius."""

    model_config = {"frozen": True}

    eps: float = Field(default=1e-14, gt=0)
    max_terms: int = Field(default=400, gt=0)


class Tolerances(BaseModel):
    model_config = {"frozen": True}

    algebra: float = Field(default=1e-10, gt=0)
    morphism: float = Field(default=1e-9, gt=0)
    homotopy: float = Field(default=1e-8, gt=0)
    cyclic: float = Field(default=1e-10, gt=0)
    theta: float = Field(default=1e-9, gt=0)
    periodicity: float = Field(default=1e-8, gt=0)
    residue: float = Field(default=1e-4, gt=0)
    fit: float = Field(default=1e-8, gt=0)
    oracle: float = Field(default=1e-6, gt=0)


class RunConfig(BaseModel):
    model_config = {"frozen": True}

    tolerances: Tolerances = Tolerances()
    truncation: TruncationPolicy = TruncationPolicy()
    grid_n: int = 256
    modes_m: int = 64
    pole_margin: float = Field(default=1e-3, gt=0)
    transversality_margin: float = Field(default=1e-6, gt=0)
    seed: int = 0
    output: Optional[Path] = None
    precision: Literal["double", "extended"] = "double"
    gamma_convention: Literal["plus", "minus"] = "plus"
    workers: int = Field(default=1, ge=1)

    @field_validator("grid_n")
    @classmethod
    def _power_of_two(cls, value: int) -> int:
        if value < 4 or value & (value - 1):
            raise ValueError(f"grid_n must be a power of two >= 4, got {value}")
        return value

    @field_validator("modes_m")
    @classmethod
    def _positive_modes(cls, value: int) -> int:
        if value < 1:
            raise ValueError("modes_m must be positive")
        return value


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="AINFELL_", env_file=".env", extra="ignore")

    config: Optional[Path] = None


def substitute_placeholders(config: Any) -> Any:
    """Replace ``"<VAR>"`` strings by the value of the environment variable VAR."""
    if isinstance(config, dict):
        return {k: substitute_placeholders(v) for k, v in config.items()}
    elif isinstance(config, list):
        return [substitute_placeholders(item) for item in config]
    elif isinstance(config, str):
        match = _PLACEHOLDER.match(config)
        if match:
            env_var = match.group(1)
            value = os.getenv(env_var)
            if value is None:
                raise ConfigError(f"environment variable {env_var} is not set")
            return value
    return config


def _deep_merge(base: dict, override: dict) -> dict:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_run_config(path: Optional[Path] = None, overrides: Optional[dict] = None) -> RunConfig:
    """Build a RunConfig from defaults, then the config file, then explicit overrides.

    When ``path`` is None the file named by ``AINFELL_CONFIG`` is used, if any.
    Keys in ``overrides`` whose value is None are ignored.
    """
    if path is None:
        path = Settings().config
    data: dict = {}
    if path is not None:
        try:
            with open(path, "r") as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config file {path}: {e}") from e
        data = substitute_placeholders(data)
        logger.debug("loaded run config from %s", path)
    if overrides:
        data = _deep_merge(data, {k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid run configuration: {e}") from e

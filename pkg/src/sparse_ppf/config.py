"""Experiment configuration: a TOML file with a flat top level and nested sections.

Unknown keys anywhere are rejected so that typos fail loudly instead of
silently falling back to defaults. Example::

    mode = "study1"
    seed = 7
    ensemble = 50
    cv_grid = [0.3, 0.5, 0.7, 1.0]

    [scenario]
    K = 20000

    [filter.ppf1]
    beta = 0.999
    alpha = 9e-4

    [gof]
    burn_in = 0.05
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

import tomli

from .simulation import FILTER_KINDS

MODES = ("study1", "study2", "strf", "custom")


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


def _check_keys(section: str, data: dict, allowed) -> None:
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        where = f"[{section}]" if section else "top level"
        raise ConfigError(f"unknown key(s) {unknown} at {where}; allowed: {sorted(allowed)}")


def _typed(section: str, key: str, value, typ):
    if typ is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if typ is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"[{section}] {key} must be a boolean")
        return value
    if typ is int and (not isinstance(value, int) or isinstance(value, bool)):
        raise ConfigError(f"[{section}] {key} must be an integer")
    if typ is float and not isinstance(value, float):
        raise ConfigError(f"[{section}] {key} must be a number")
    if typ is str and not isinstance(value, str):
        raise ConfigError(f"[{section}] {key} must be a string")
    return value


SCENARIO_KEYS = {"M": int, "K": int, "W": int, "delta": float, "L": int, "norm": float, "mu": float,
                 "target_rate": float, "sigma_sq": float, "drop_seconds": float}
FILTER_KEYS = {"beta": float, "gamma": float, "alpha": float, "c": float, "R": int, "q": float, "rho": float,
               "penalize_mu": bool}
GOF_KEYS = {"burn_in": float, "max_lag": int, "jitter": bool}
STRF_KEYS = {"I": int, "J": int, "grid_rows": int, "grid_cols": int, "seconds": float, "W": int, "beta": float,
             "gamma": float, "c": float, "R": int, "mu": float, "n_ripples": int, "penalize_mu": bool,
             "atoms": list, "snapshot_times": list, "trace_points": list, "spectrogram": str, "spikes": str}
CUSTOM_KEYS = {"spikes": str, "stimulus": str, "M": int, "W": int}


def _section(name: str, data: Any, spec: dict) -> dict:
    if not isinstance(data, dict):
        raise ConfigError(f"[{name}] must be a table")
    _check_keys(name, data, spec)
    out = {}
    for k, v in data.items():
        typ = spec[k]
        out[k] = v if typ is list else _typed(name, k, v, typ)
        if typ is list and not isinstance(v, list):
            raise ConfigError(f"[{name}] {k} must be an array")
    return out


@dataclass
class ExperimentConfig:
    mode: str = "study1"
    seed: int = 0
    out: str = "results"
    filters: list = field(default_factory=lambda: list(FILTER_KINDS))
    ensemble: int = 200
    cv_grid: Optional[list] = None
    cv_pilots: int = 3
    stride_ci: int = 10
    record_every: int = 10
    gnuplot: bool = False
    workers: Optional[int] = None
    scenario: dict = field(default_factory=dict)
    filter_params: dict = field(default_factory=dict)
    gof: dict = field(default_factory=dict)
    strf: dict = field(default_factory=dict)
    custom: dict = field(default_factory=dict)

    def validate(self) -> "ExperimentConfig":
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.filters:
            raise ConfigError("at least one filter must be selected")
        bad = [f for f in self.filters if f not in FILTER_KINDS]
        if bad:
            raise ConfigError(f"unknown filter(s) {bad}; expected a subset of {FILTER_KINDS}")
        if len(set(self.filters)) != len(self.filters):
            raise ConfigError("filters listed more than once")
        if self.ensemble < 1:
            raise ConfigError("ensemble must be at least 1 realization")
        if self.cv_grid is not None:
            if not self.cv_grid:
                raise ConfigError("cv_grid must not be empty")
            if any((not isinstance(g, (int, float))) or isinstance(g, bool) or g < 0 for g in self.cv_grid):
                raise ConfigError("cv_grid entries must be non-negative numbers")
        if self.cv_pilots < 1 or self.stride_ci < 1 or self.record_every < 1:
            raise ConfigError("cv_pilots, stride_ci and record_every must be >= 1")
        if self.workers is not None and self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.mode == "custom" and not {"spikes", "stimulus", "M"} <= set(self.custom):
            raise ConfigError("custom mode needs [custom] spikes, stimulus and M")
        bad = set(self.filter_params) - set(FILTER_KINDS)
        if bad:
            raise ConfigError(f"unknown filter section(s) {sorted(bad)}")
        return self


TOP_KEYS = {"mode": str, "seed": int, "out": str, "filters": list, "ensemble": int, "cv_grid": list,
            "cv_pilots": int, "stride_ci": int, "record_every": int, "gnuplot": bool, "workers": int}
SECTIONS = {"scenario", "filter", "gof", "strf", "custom"}


def config_from_dict(data: dict) -> ExperimentConfig:
    _check_keys("", data, set(TOP_KEYS) | SECTIONS)
    kw: dict[str, Any] = {}
    for k, typ in TOP_KEYS.items():
        if k in data:
            v = data[k]
            if typ is list:
                if not isinstance(v, list):
                    raise ConfigError(f"{k} must be an array")
                kw[k] = list(v)
            else:
                kw[k] = _typed("", k, v, typ)
    if "scenario" in data:
        kw["scenario"] = _section("scenario", data["scenario"], SCENARIO_KEYS)
    if "gof" in data:
        kw["gof"] = _section("gof", data["gof"], GOF_KEYS)
    if "strf" in data:
        kw["strf"] = _section("strf", data["strf"], STRF_KEYS)
    if "custom" in data:
        kw["custom"] = _section("custom", data["custom"], CUSTOM_KEYS)
    params = data.get("filter", {})
    if not isinstance(params, dict) or any(not isinstance(v, dict) for v in params.values()):
        raise ConfigError("[filter] must contain one table per filter kind, e.g. [filter.ppf1]")
    bad = set(params) - set(FILTER_KINDS)
    if bad:
        raise ConfigError(f"unknown filter table(s) {sorted(bad)}; expected a subset of {FILTER_KINDS}")
    kw["filter_params"] = {k: _section(f"filter.{k}", v, FILTER_KEYS) for k, v in params.items()}
    return ExperimentConfig(**kw).validate()


def load_config(path) -> ExperimentConfig:
    """Parse and validate a TOML experiment file.

    The top-level ``filters`` array selects which filters run; their
    hyperparameters go in ``[filter.<kind>]`` tables.
    """
    with open(path, "rb") as fh:
        try:
            data = tomli.load(fh)
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data)

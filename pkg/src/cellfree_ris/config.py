"""TOML scenario files.

Schema (every table is optional; omitted keys take the defaults shown)::

    seed = 0

    [dims]
    L = 5
    K = 4
    R = 2
    M = 32
    Nt = 3
    Nr = 2

    [power]
    p_max_dbm = 0.0      # scalar, or one value per AP
    noise_dbm = -80.0    # scalar, or one value per user
    weights = 1.0        # scalar, or one value per user

    [geometry]
    ap_positions = [[0, -50, 3], [40, -50, 3], ...]   # default: (40 l, -50, 3)
    ris_positions = [[60, 10, 6], [100, 10, 6]]
    user_region = [[20, 0, 1.5], [120, 20, 1.5]]      # [low corner, high corner]

    [fading]
    pathloss_reference_db = 30.0
    exponent_ap_user = 3.5
    exponent_ap_ris = 2.2
    exponent_ris_user = 2.2
    rician_k_ris_links = 1.995   # linear
    small_scale = "rician"       # or "rayleigh"

    [algorithm]
    iterations = 20
    conv_tol = 1e-4
    bisection_tol = 1e-8
    p3_max_iters = 2000
    p3_tol = 1e-7       # absolute bound on the phase-subproblem gap

Powers are in dBm in the file and converted to watts once, here.
"""
from __future__ import annotations

import hashlib
import json
import sys
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .channel import (
    DEFAULT_USER_REGION,
    FadingParams,
    ScenarioConfig,
    SystemDims,
    dbm_to_watts,
    default_ap_positions,
    default_ris_positions,
)
from .errors import InvalidScenario
from .orchestrator import SolverSettings

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["ConfigError", "ScenarioFile", "RunConfig", "parse_config", "load_config", "config_digest"]

Point = List[float]
ScalarOrList = Union[float, List[float]]


class ConfigError(ValueError):
    """Invalid scenario file; the message starts with the offending field path."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DimsSection(_Strict):
    L: int = Field(5, ge=1)
    K: int = Field(4, ge=1)
    R: int = Field(2, ge=1)
    M: int = Field(32, ge=1)
    Nt: int = Field(3, ge=1)
    Nr: int = Field(2, ge=1)


class PowerSection(_Strict):
    p_max_dbm: ScalarOrList = 0.0
    noise_dbm: ScalarOrList = -80.0
    weights: ScalarOrList = 1.0


class GeometrySection(_Strict):
    ap_positions: Optional[List[Point]] = None
    ris_positions: Optional[List[Point]] = None
    user_region: Optional[List[Point]] = None


class FadingSection(_Strict):
    pathloss_reference_db: float = 30.0
    exponent_ap_user: float = Field(3.5, ge=2)
    exponent_ap_ris: float = Field(2.2, ge=2)
    exponent_ris_user: float = Field(2.2, ge=2)
    rician_k_ris_links: float = Field(10.0**0.3, ge=0)
    small_scale: Literal["rayleigh", "rician"] = "rician"


class AlgorithmSection(_Strict):
    iterations: int = Field(20, ge=1)
    conv_tol: float = Field(1e-4, ge=0)
    bisection_tol: float = Field(1e-8, gt=0)
    p3_max_iters: int = Field(2000, ge=1)
    p3_tol: float = Field(1e-7, ge=0)


def _check_length(value, n, path):
    if isinstance(value, list) and len(value) != n:
        raise ValueError(f"{path}: expected {n} values, got {len(value)}")


class ScenarioFile(_Strict):
    seed: int = Field(0, ge=0, lt=2**64)
    dims: DimsSection = DimsSection()
    power: PowerSection = PowerSection()
    geometry: GeometrySection = GeometrySection()
    fading: FadingSection = FadingSection()
    algorithm: AlgorithmSection = AlgorithmSection()

    @model_validator(mode="after")
    def _lengths(self):
        d = self.dims
        _check_length(self.power.p_max_dbm, d.L, "power.p_max_dbm")
        _check_length(self.power.noise_dbm, d.K, "power.noise_dbm")
        _check_length(self.power.weights, d.K, "power.weights")
        _check_length(self.geometry.ap_positions, d.L, "geometry.ap_positions")
        _check_length(self.geometry.ris_positions, d.R, "geometry.ris_positions")
        _check_length(self.geometry.user_region, 2, "geometry.user_region")
        for name in ("ap_positions", "ris_positions", "user_region"):
            for i, p in enumerate(getattr(self.geometry, name) or []):
                if len(p) != 3:
                    raise ValueError(f"geometry.{name}.{i}: expected 3 coordinates")
        weights = self.power.weights
        if any(w <= 0 for w in (weights if isinstance(weights, list) else [weights])):
            raise ValueError("power.weights: must be strictly positive")
        return self


class RunConfig(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    scenario: ScenarioConfig
    settings: SolverSettings
    iterations: int
    conv_tol: float
    digest: str


def config_digest(data: dict) -> str:
    return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()


def _format_error(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        path = ".".join(str(p) for p in e["loc"]) or "<root>"
        msg = e["msg"]
        if msg.startswith("Value error, "):
            msg = msg[len("Value error, "):]
        parts.append(msg if path == "<root>" and ":" in msg else f"{path}: {msg}")
    return "; ".join(parts)


def parse_config(data: dict, overrides: dict | None = None) -> RunConfig:
    """Validate a config mapping; ``overrides`` are dotted keys like ``"dims.M"``."""
    data = json.loads(json.dumps(data))
    for key, value in (overrides or {}).items():
        node = data
        *parents, leaf = key.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    try:
        f = ScenarioFile.model_validate(data)
    except ValidationError as err:
        raise ConfigError(_format_error(err)) from None

    d = f.dims
    dims = SystemDims(L=d.L, K=d.K, R=d.R, M=d.M, Nt=d.Nt, Nr=d.Nr)
    geo = f.geometry
    try:
        scenario = ScenarioConfig(
            dims=dims,
            ap_positions=geo.ap_positions or default_ap_positions(d.L),
            ris_positions=geo.ris_positions or default_ris_positions(d.R),
            user_region=geo.user_region or DEFAULT_USER_REGION,
            p_max=dbm_to_watts(f.power.p_max_dbm),
            noise_power=dbm_to_watts(f.power.noise_dbm),
            weights=f.power.weights,
            fading=FadingParams(**f.fading.model_dump()),
            seed=f.seed,
        )
    except InvalidScenario as err:
        raise ConfigError(str(err)) from None
    alg = f.algorithm
    return RunConfig(
        scenario=scenario,
        settings=SolverSettings(
            bisection_tol=alg.bisection_tol, p3_max_iters=alg.p3_max_iters, p3_tol=alg.p3_tol
        ),
        iterations=alg.iterations,
        conv_tol=alg.conv_tol,
        digest=config_digest(f.model_dump()),
    )


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Read a TOML scenario file (``None`` means all defaults)."""
    data = {}
    if path is not None:
        with open(path, "rb") as fh:
            try:
                data = tomllib.load(fh)
            except tomllib.TOMLDecodeError as err:
                raise ConfigError(f"<file>: {err}") from None
    return parse_config(data, overrides)

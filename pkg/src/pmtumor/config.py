"""Strict line-based experiment configuration.

Format: `key = value` lines under `[section]` headers, `#` starts a comment,
keys are lowercase snake-case, numbers decimal or scientific.  Unknown
sections or keys are rejected with their line number; typos in gamma or dt
would otherwise silently invalidate every theorem-constant assertion
downstream.  Only `[experiment] kind` and `gamma` are required; everything
else resolves from per-experiment defaults matching the stock runs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Tuple

from .core import (
    Constant,
    GrowthModel,
    LinearPressure,
    NutrientLinear,
    NutrientPiecewise,
    growth_sup,
)

__all__ = ["ConfigError", "SimConfig", "parse_config"]

KINDS = ("barenblatt", "vitro", "vivo", "twospecies", "focusing", "ap_sweep")
GROWTH_MODELS = ("linear_pressure", "constant", "nutrient_linear", "nutrient_piecewise")
INITIAL_KINDS = ("barenblatt", "pressure_patch", "indicator_patch", "shell")


class ConfigError(ValueError):
    """Configuration rejected; carries the offending line when known."""

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class SimConfig:
    """Fully resolved experiment parameterization."""

    kind: str
    gamma: float
    kappa: float
    x_max: float
    dx: float
    dt: float
    t_end: float
    growth_model: str
    alpha: float
    p_h: float
    g_const: float
    g_low: float
    g_high: float
    c_threshold: float
    environment: str
    c_b: float
    g0: float
    initial: str
    c_coeff: float
    t0: float
    r0: float
    r_inner: float
    r_outer: float
    density: float
    newton_tol: float
    newton_max_iter: int
    monotone_tol: float
    solver2d: str
    gammas: Tuple[float, ...]
    cadence: int
    snapshot_every: int
    out_dir: str

    def growth(self) -> GrowthModel:
        if self.growth_model == "linear_pressure":
            return LinearPressure(alpha=self.alpha, p_h=self.p_h)
        if self.growth_model == "constant":
            return Constant(self.g_const)
        if self.growth_model == "nutrient_linear":
            return NutrientLinear()
        return NutrientPiecewise(self.g_low, self.g_high, self.c_threshold)


# schema: section -> key -> converter
def _float(text: str) -> float:
    return float(text)


def _int(text: str) -> int:
    v = float(text)
    if v != int(v):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(v)


def _str(text: str) -> str:
    return text


def _float_list(text: str) -> Tuple[float, ...]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    return tuple(float(p) for p in parts)


_SCHEMA = {
    "experiment": {"kind": _str, "gamma": _float, "kappa": _float},
    "grid": {"x_max": _float, "dx": _float},
    "time": {"dt": _float, "t_end": _float},
    "growth": {
        "model": _str,
        "alpha": _float,
        "p_h": _float,
        "g_const": _float,
        "g_low": _float,
        "g_high": _float,
        "c_threshold": _float,
    },
    "nutrient": {"environment": _str, "c_b": _float, "g0": _float},
    "initial": {
        "kind": _str,
        "c_coeff": _float,
        "t0": _float,
        "r0": _float,
        "r_inner": _float,
        "r_outer": _float,
        "density": _float,
    },
    "solver": {
        "newton_tol": _float,
        "newton_max_iter": _int,
        "monotone_tol": _float,
        "solver2d": _str,
    },
    "sweep": {"gammas": _float_list},
    "output": {"cadence": _int, "snapshot_every": _int, "dir": _str},
}


def _defaults(kind: str, gamma: float) -> Dict[str, object]:
    base = {
        "kappa": 1.0,
        "x_max": 5.0,
        "growth_model": "linear_pressure",
        "alpha": 1.0,
        "p_h": 1.0,
        "g_const": 0.0,
        "g_low": -15.0,
        "g_high": 12.0,
        "c_threshold": 0.4,
        "environment": "vitro",
        "c_b": 1.0,
        "g0": 1.0,
        "c_coeff": 1.0 if gamma == 3.0 else 0.1,
        "t0": 0.01,
        "r0": 1.0,
        "r_inner": 0.6,
        "r_outer": 6.0,
        "density": 0.8,
        "newton_tol": 1e-12,
        "newton_max_iter": 60,
        "monotone_tol": 1e-12,
        "solver2d": "auto",
        "gammas": (10.0, 20.0, 40.0, 80.0),
        "out_dir": f"out_{kind}",
    }
    per_kind = {
        "barenblatt": dict(
            kappa=(gamma + 1.0) / gamma,
            dx=1.0 / 64,
            growth_model="constant",
            initial="barenblatt",
            t_end=0.1,
            cadence=16,
        ),
        "vitro": dict(
            dx=0.025, dt=1e-6, t_end=1.5, growth_model="nutrient_linear",
            initial="pressure_patch", cadence=50_000,
        ),
        "vivo": dict(
            dx=0.025, dt=1e-6, t_end=1.5, growth_model="nutrient_linear",
            environment="vivo", initial="pressure_patch", cadence=50_000,
        ),
        "twospecies": dict(
            x_max=6.0, dx=0.025, dt=1e-4, t_end=0.25,
            growth_model="nutrient_piecewise", initial="indicator_patch", cadence=250,
        ),
        "focusing": dict(
            x_max=8.0, dx=0.02, dt=1e-3, t_end=0.55, initial="shell",
            cadence=1, snapshot_every=100,
        ),
        "ap_sweep": dict(
            x_max=3.0, dx=0.05, dt=1e-3, t_end=0.062, initial="pressure_patch",
            cadence=1,
        ),
    }
    base.update(per_kind[kind])
    base.setdefault("initial", "pressure_patch")
    base.setdefault("cadence", 100)
    return base


def _parse_lines(text: str) -> Dict[Tuple[str, str], Tuple[str, int]]:
    entries: Dict[Tuple[str, str], Tuple[str, int]] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError("unterminated section header", lineno)
            section = line[1:-1].strip()
            if section not in _SCHEMA:
                raise ConfigError(f"unknown section [{section}]", lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"expected `key = value`, got {line!r}", lineno)
        if section is None:
            raise ConfigError("key outside any [section]", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _SCHEMA[section]:
            raise ConfigError(f"unknown key {key!r} in section [{section}]", lineno)
        if (section, key) in entries:
            raise ConfigError(f"duplicate key {key!r} in section [{section}]", lineno)
        entries[(section, key)] = (value, lineno)
    return entries


def parse_config(text: str) -> SimConfig:
    """Parse and fully validate a configuration; strict about unknown keys."""
    entries = _parse_lines(text)

    def take(section: str, key: str):
        if (section, key) not in entries:
            return None
        value, lineno = entries.pop((section, key))
        try:
            return _SCHEMA[section][key](value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {section}.{key}: {exc}", lineno) from None

    kind = take("experiment", "kind")
    if kind is None:
        raise ConfigError("missing required field experiment.kind")
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}; choose from {KINDS}")
    gamma = take("experiment", "gamma")
    if gamma is None:
        raise ConfigError("missing required field gamma (section [experiment])")
    if gamma <= 1.0:
        raise ConfigError(f"gamma must be > 1, got {gamma:g}")

    values = _defaults(kind, gamma)
    values["kind"] = kind
    values["gamma"] = gamma
    for (section, key) in list(entries):
        name = {
            ("experiment", "kappa"): "kappa",
            ("grid", "x_max"): "x_max",
            ("grid", "dx"): "dx",
            ("time", "dt"): "dt",
            ("time", "t_end"): "t_end",
            ("growth", "model"): "growth_model",
            ("growth", "alpha"): "alpha",
            ("growth", "p_h"): "p_h",
            ("growth", "g_const"): "g_const",
            ("growth", "g_low"): "g_low",
            ("growth", "g_high"): "g_high",
            ("growth", "c_threshold"): "c_threshold",
            ("nutrient", "environment"): "environment",
            ("nutrient", "c_b"): "c_b",
            ("nutrient", "g0"): "g0",
            ("initial", "kind"): "initial",
            ("initial", "c_coeff"): "c_coeff",
            ("initial", "t0"): "t0",
            ("initial", "r0"): "r0",
            ("initial", "r_inner"): "r_inner",
            ("initial", "r_outer"): "r_outer",
            ("initial", "density"): "density",
            ("solver", "newton_tol"): "newton_tol",
            ("solver", "newton_max_iter"): "newton_max_iter",
            ("solver", "monotone_tol"): "monotone_tol",
            ("solver", "solver2d"): "solver2d",
            ("sweep", "gammas"): "gammas",
            ("output", "cadence"): "cadence",
            ("output", "snapshot_every"): "snapshot_every",
            ("output", "dir"): "out_dir",
        }[(section, key)]
        values[name] = take(section, key)
    # resolution-coupled defaults resolve after user overrides
    values.setdefault("dt", 0.01 * values["dx"])
    values.setdefault("snapshot_every", values["cadence"])

    cfg = SimConfig(**values)
    _validate(cfg)
    return cfg


def _validate(cfg: SimConfig) -> None:
    if cfg.kappa <= 0:
        raise ConfigError(f"kappa must be > 0, got {cfg.kappa:g}")
    if cfg.x_max <= 0 or cfg.dx <= 0:
        raise ConfigError("grid extents and dx must be positive")
    m = round(cfg.x_max / cfg.dx)
    if m < 1 or abs(m * cfg.dx - cfg.x_max) > 1e-9 * max(1.0, cfg.x_max):
        raise ConfigError(
            f"extents inconsistent with dx: x_max = {cfg.x_max:g} is not a multiple of {cfg.dx:g}"
        )
    if cfg.dt <= 0:
        raise ConfigError(f"dt must be positive, got {cfg.dt:g}")
    if cfg.t_end < 0:
        raise ConfigError(f"t_end must be nonnegative, got {cfg.t_end:g}")
    if cfg.cadence < 1 or cfg.snapshot_every < 1:
        raise ConfigError("output cadence must be >= 1")
    if cfg.growth_model not in GROWTH_MODELS:
        raise ConfigError(f"unknown growth model {cfg.growth_model!r}")
    if cfg.environment not in ("vitro", "vivo"):
        raise ConfigError(f"unknown nutrient environment {cfg.environment!r}")
    if cfg.initial not in INITIAL_KINDS:
        raise ConfigError(f"unknown initial data kind {cfg.initial!r}")
    if cfg.solver2d not in ("auto", "newton", "gauss_seidel"):
        raise ConfigError(f"unknown 2D solver {cfg.solver2d!r}")
    if cfg.kind == "ap_sweep" and len(cfg.gammas) < 2:
        raise ConfigError("the gamma sweep needs at least two gamma values")
    if any(g <= 1.0 for g in cfg.gammas):
        raise ConfigError("swept gamma values must all be > 1")
    if cfg.newton_tol <= 0 or cfg.monotone_tol <= 0 or cfg.newton_max_iter < 1:
        raise ConfigError("solver tolerances must be positive")
    if cfg.kind == "focusing" and cfg.r_inner >= cfg.r_outer:
        raise ConfigError("shell needs r_inner < r_outer")

    gmax = growth_sup(cfg.growth(), c_b=cfg.c_b)
    if gmax > 0 and cfg.dt >= 1.0 / gmax:
        raise ConfigError(
            f"dt = {cfg.dt:g} violates the implicit-step solvability bound "
            f"dt < 1/G(0) = {1.0 / gmax:g}"
        )


def config_echo(cfg: SimConfig) -> List[str]:
    """Canonical `name = value` lines of the resolved configuration."""
    lines = []
    for name in sorted(cfg.__dataclass_fields__):
        value = getattr(cfg, name)
        if isinstance(value, float):
            text = f"{value:.17g}"
        elif isinstance(value, tuple):
            text = ", ".join(f"{v:.17g}" for v in value)
        else:
            text = str(value)
        lines.append(f"{name} = {text}")
    return lines


def with_overrides(
    cfg: SimConfig,
    out_dir: Optional[str] = None,
    cadence: Optional[int] = None,
) -> SimConfig:
    """CLI-level overrides applied after parsing."""
    changes = {}
    if out_dir is not None:
        changes["out_dir"] = out_dir
    if cadence is not None:
        if cadence < 1:
            raise ConfigError("output cadence must be >= 1")
        changes["cadence"] = cadence
        if cfg.snapshot_every == cfg.cadence:
            changes["snapshot_every"] = cadence
    return replace(cfg, **changes) if changes else cfg

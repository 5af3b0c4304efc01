"""
Run configuration: INI file sections mirroring :class:`RunConfig`, dotted
command-line overrides and the ``NSCH_OUTPUT_DIR`` environment override.

    [grid]          dim, n
    [params]        ModelParams fields
    [step]          StepConfig fields
    [perturbation]  PerturbationSpec fields
    [run]           t_end, sample_every, checks, output_dir, checkpoint_every,
                    initial, s_values, mass_leak
    [verify]        tolerances of the individual checks
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from ..errors import ConfigError
from ..initial_data import PerturbationSpec
from ..model import ModelParams
from ..spectral import Grid, make_grid
from ..timestepper import StepConfig

__all__ = ["RunConfig", "VerifyConfig", "load_config", "apply_overrides", "OUTPUT_ENV", "KNOWN_CHECKS"]

OUTPUT_ENV = "NSCH_OUTPUT_DIR"
KNOWN_CHECKS = ("energy_law", "conservation", "apriori", "decay", "neg_sobolev")
INITIAL_KINDS = ("small", "large", "equilibrium")


@dataclass(frozen=True)
class VerifyConfig:
    """Tolerances of the verdicts."""

    energy_k: float = 1.0
    energy_slack: float = 0.05
    conservation_tol: float = 1e-10
    decay_t0: float = 1.0
    neg_early_frac: float = 0.1
    neg_factor: float = 1.1
    phi_delta: float | None = None

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class RunConfig:
    dim: int = 2
    n: int = 64
    params: ModelParams = field(default_factory=ModelParams)
    step: StepConfig = field(default_factory=StepConfig)
    perturbation: PerturbationSpec = field(default_factory=PerturbationSpec)
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    t_end: float = 50.0
    sample_every: int = 10
    checks: tuple[str, ...] = ("energy_law", "conservation", "apriori", "decay@1", "neg_sobolev@1")
    output_dir: str = "runs/default"
    checkpoint_every: int = 0
    initial: str = "small"
    s_values: tuple[float, ...] = (0.5, 1.0)
    mass_leak: float = 0.0

    def __post_init__(self):
        if not self.t_end > 0:
            raise ConfigError("run.t_end must be positive")
        if self.sample_every < 1:
            raise ConfigError("run.sample_every must be >= 1")
        if self.checkpoint_every < 0:
            raise ConfigError("run.checkpoint_every must be >= 0")
        if self.initial not in INITIAL_KINDS:
            raise ConfigError(f"run.initial must be one of {INITIAL_KINDS}")
        for s in self.s_values:
            if not 0 < s < 1.5:
                raise ConfigError("run.s_values entries must lie in (0, 3/2)")
        for c in self.checks:
            name, _, arg = c.partition("@")
            if name not in KNOWN_CHECKS:
                raise ConfigError(f"unknown check {c!r}; known: {KNOWN_CHECKS}")
            if name in ("decay", "neg_sobolev"):
                try:
                    s = float(arg)
                except ValueError:
                    raise ConfigError(f"check {c!r} needs a numeric exponent, e.g. {name}@1") from None
                if not 0 <= s < 1.5 or (name == "neg_sobolev" and s == 0):
                    raise ConfigError(f"check {c!r}: exponent out of range")
        try:
            g = self.grid
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        try:
            self.perturbation.check_grid(g)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def grid(self) -> Grid:
        return make_grid(self.dim, self.n)

    def to_dict(self) -> dict:
        return {
            "grid": {"dim": self.dim, "n": self.n},
            "params": self.params.as_dict(),
            "step": self.step.as_dict(),
            "perturbation": self.perturbation.as_dict(),
            "verify": self.verify.as_dict(),
            "run": {
                "t_end": self.t_end,
                "sample_every": self.sample_every,
                "checks": list(self.checks),
                "output_dir": self.output_dir,
                "checkpoint_every": self.checkpoint_every,
                "initial": self.initial,
                "s_values": list(self.s_values),
                "mass_leak": self.mass_leak,
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        flat = {}
        for section, values in d.items():
            for key, val in values.items():
                flat[f"{section}.{key}"] = val
        return apply_overrides(cls(), flat)


# ---------------------------------------------------------------------------
# value coercion
# ---------------------------------------------------------------------------

_SECTIONS = {
    "params": ModelParams,
    "step": StepConfig,
    "perturbation": PerturbationSpec,
    "verify": VerifyConfig,
}
_RUN_KEYS = {
    "t_end": float,
    "sample_every": int,
    "checks": "list_str",
    "output_dir": str,
    "checkpoint_every": int,
    "initial": str,
    "s_values": "list_float",
    "mass_leak": float,
}
_GRID_KEYS = {"dim": int, "n": int}

# field types of the nested dataclasses (annotations are strings under
# postponed evaluation, so they are listed here explicitly)
_FIELD_KINDS = {
    ("step", "adaptive"): bool,
    ("step", "implicit_phase"): bool,
    ("step", "implicit_viscous"): bool,
    ("perturbation", "seed"): int,
    ("perturbation", "k_min"): int,
    ("perturbation", "k_max"): int,
    ("perturbation", "phase_sign"): "phase",
    ("perturbation", "neg_s_target"): "opt_float",
    ("verify", "phi_delta"): "opt_float",
}


def _to_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _coerce(kind, v):
    if kind is bool:
        return _to_bool(v)
    if kind is int:
        if isinstance(v, bool):
            raise ValueError("boolean given where an integer is expected")
        f = float(v)
        if f != int(f):
            raise ValueError(f"not an integer: {v!r}")
        return int(f)
    if kind is float:
        return float(v)
    if kind is str:
        return str(v)
    if kind == "opt_float":
        if v is None or str(v).strip().lower() in ("", "none", "null"):
            return None
        return float(v)
    if kind == "phase":
        s = str(v).strip().lower()
        if s == "stripe":
            return "stripe"
        return int(float(s))
    if kind == "list_str":
        if isinstance(v, (list, tuple)):
            return tuple(str(x).strip() for x in v)
        return tuple(x.strip() for x in str(v).replace(";", ",").split(",") if x.strip())
    if kind == "list_float":
        if isinstance(v, (list, tuple)):
            return tuple(float(x) for x in v)
        return tuple(float(x) for x in str(v).replace(";", ",").split(",") if x.strip())
    raise AssertionError(kind)


def apply_overrides(cfg: RunConfig, overrides: dict[str, Any]) -> RunConfig:
    """Return ``cfg`` with dotted ``section.key`` overrides applied and validated."""
    top: dict[str, Any] = {}
    nested: dict[str, dict[str, Any]] = {k: {} for k in _SECTIONS}
    for dotted, raw in overrides.items():
        section, _, key = dotted.partition(".")
        if not key:
            raise ConfigError(f"override {dotted!r} must be of the form section.key")
        try:
            if section == "grid":
                if key not in _GRID_KEYS:
                    raise ConfigError(f"unknown key grid.{key}")
                top[key] = _coerce(_GRID_KEYS[key], raw)
            elif section == "run":
                if key not in _RUN_KEYS:
                    raise ConfigError(f"unknown key run.{key}")
                top[key] = _coerce(_RUN_KEYS[key], raw)
            elif section in _SECTIONS:
                names = {f.name for f in fields(_SECTIONS[section])}
                if key not in names:
                    raise ConfigError(f"unknown key {section}.{key}")
                nested[section][key] = _coerce(_FIELD_KINDS.get((section, key), float), raw)
            else:
                raise ConfigError(f"unknown section {section!r}")
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad value for {dotted}: {raw!r} ({exc})") from None
    try:
        for section, vals in nested.items():
            if vals:
                top[section] = replace(getattr(cfg, section), **vals)
        return replace(cfg, **top)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | os.PathLike | None, overrides: dict[str, Any] | None = None,
                env: dict[str, str] | None = None) -> RunConfig:
    """Read an INI file, then apply the environment and command-line overrides.

    Precedence: command line > ``NSCH_OUTPUT_DIR`` > file > defaults.
    """
    flat: dict[str, Any] = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            parser.read(p)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {p}: {exc}") from None
        for section in parser.sections():
            for key, val in parser.items(section):
                flat[f"{section}.{key}"] = val
    env = os.environ if env is None else env
    if env.get(OUTPUT_ENV):
        flat["run.output_dir"] = env[OUTPUT_ENV]
    flat.update(overrides or {})
    return apply_overrides(RunConfig(), flat)

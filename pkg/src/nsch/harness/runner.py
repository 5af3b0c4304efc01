"""
Run orchestration: initial data, time loop, sampling, checkpoints, verdicts.

Artifacts in ``output_dir``:

    series.ndjson    header line, then one line per sample (plus resume,
                     blow-up and end markers); append-only
    verdicts.json    one entry per enabled check and the exit status
    checkpoint.bin   latest state (periodic and final)
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from ..diagnostics import (
    CumulativeDissipation,
    DecaySeries,
    EnergyReport,
    check_apriori_bound,
    check_conservation,
    check_decay,
    check_energy_law,
    check_neg_sobolev_bound,
    energy,
    norm_suite,
    roundoff_state,
)
from ..errors import BlowUpError, CheckpointError, ConfigError
from ..initial_data import make_initial, make_large_data
from ..model import ModelParams, State
from ..norms import NormSuite
from ..timestepper import adaptive_dt, step
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, apply_overrides

__all__ = [
    "SERIES_SCHEMA",
    "VERDICTS_SCHEMA",
    "RunResult",
    "run",
    "resume",
    "sweep",
    "check",
    "checkpoint_norms",
    "evaluate_verdicts",
    "exit_status",
    "read_series",
]

log = logging.getLogger(__name__)

SERIES_SCHEMA = "nsch-series/1"
VERDICTS_SCHEMA = "nsch-verdicts/1"
SWEEP_SCHEMA = "nsch-sweep/1"
SERIES_NAME = "series.ndjson"
VERDICTS_NAME = "verdicts.json"
CHECKPOINT_NAME = "checkpoint.bin"

EXIT_OK, EXIT_CHECK_FAILED, EXIT_BLOWUP, EXIT_USAGE, EXIT_INFRA = 0, 1, 2, 3, 4

# the claim each verdict tests, stated in words
ANCHORS = {
    "energy_law": "energy inequality: d/dt ∫(ρ|u|²/2 + G(ρ) + |∇φ|²/2 + ρ(φ²-1)²/4) + ν₀/2‖∇u‖² + ‖∇μ‖² <= 0",
    "conservation": "conservation of ∫ρ and ∫ρφ: ρ_t + div(ρu) = 0, (ρφ)_t + div(ρφu) = Δμ",
    "apriori": "uniform bound ‖(ρ-ρ̄, u)‖²_{H³} + ‖∇φ‖²_{H²} + ‖φ²-1‖² <= C·(same at t=0), ρ̄/2 <= ρ <= 2ρ̄",
    "decay": "algebraic decay ‖u‖² + ‖φ²-1‖ <= C₀(1+t)^(-s) and "
    "‖ρ-ρ̄‖²_{H³} + ‖∇u‖²_{H²} + ‖∇φ‖²_{H²} <= C₀(1+t)^(-(2+s))",
    "neg_sobolev": "uniform bound of ‖(ρ-ρ̄, u, ∇φ, φ²-1)‖_{Ḣ^(-s)}",
}


def _plain(x):
    """Strict-JSON view: numpy scalars unwrapped, non-finite floats as strings."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_plain(v) for v in x]
    if isinstance(x, np.generic):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


def _dumps(obj) -> str:
    return json.dumps(_plain(obj), allow_nan=False)


# ---------------------------------------------------------------------------
# initial data and the time loop
# ---------------------------------------------------------------------------


def build_initial(cfg: RunConfig) -> State:
    g = cfg.grid
    if cfg.initial == "equilibrium":
        sign = cfg.perturbation.phase_sign
        phi = 1.0 if sign == "stripe" else float(sign)
        return State.uniform(g, cfg.params.rho_bar, phi)
    if cfg.initial == "large":
        return make_large_data(cfg.perturbation, g, cfg.params)
    try:
        return make_initial(cfg.perturbation, g, cfg.params)
    except ValueError as exc:
        raise ConfigError(f"cannot build small initial data: {exc}") from None


@dataclass
class _Loop:
    """Mutable integration bookkeeping carried across checkpoints."""

    step: int
    energy_ref: float
    cum: CumulativeDissipation
    since_sample: int = 0
    max_dt: float = 0.0
    max_defect: float = -math.inf
    max_increment: float = -math.inf

    def reset_interval(self):
        self.max_dt = 0.0
        self.max_defect = -math.inf
        self.max_increment = -math.inf

    def meta(self) -> dict:
        return {
            "step": self.step,
            "energy_ref": self.energy_ref,
            "cum_law": self.cum.law,
            "cum_full": self.cum.full,
            "since_sample": self.since_sample,
            "max_dt": self.max_dt,
            "max_defect": _finite_or_none(self.max_defect),
            "max_increment": _finite_or_none(self.max_increment),
        }

    @classmethod
    def from_meta(cls, m: dict) -> "_Loop":
        loop = cls(
            step=int(m["step"]),
            energy_ref=float(m["energy_ref"]),
            cum=CumulativeDissipation(float(m["cum_law"]), float(m["cum_full"])),
            since_sample=int(m["since_sample"]),
        )
        loop.max_dt = float(m["max_dt"])
        loop.max_defect = -math.inf if m["max_defect"] is None else float(m["max_defect"])
        loop.max_increment = -math.inf if m["max_increment"] is None else float(m["max_increment"])
        return loop


def _finite_or_none(x):
    return x if math.isfinite(x) else None


def _sample_record(cfg: RunConfig, state: State, e: EnergyReport, loop: _Loop) -> dict:
    ns = norm_suite(state, cfg.params, cfg.s_values)
    neg_energy = {repr(float(s)): float(sum(v**2 for v in ns.neg[float(s)].values())) for s in cfg.s_values}
    return {
        "kind": "sample",
        "step": loop.step,
        "t": state.t,
        "energy": e.to_json(),
        "norms": ns.to_json(),
        "neg_energy": neg_energy,
        "cum_diss": {"law": loop.cum.law, "full": loop.cum.full},
        "interval": {
            "max_dt": loop.max_dt,
            "max_defect": _finite_or_none(loop.max_defect),
            "max_increment": _finite_or_none(loop.max_increment),
        },
    }


def _leak(state: State, rate: float) -> State:
    """Non-conservative perturbation used as a negative control."""
    return state.with_arrays(state.t, state.rho.values * (1.0 + rate), state.mom.values, state.c.values)


def _checkpoint_meta(cfg: RunConfig, loop: _Loop) -> dict:
    return {"config": cfg.to_dict(), "loop": loop.meta()}


def _integrate(cfg: RunConfig, state: State, loop: _Loop, out, ckpt_path: Path):
    """Advance until t >= t_end or blow-up.  Returns ``(state, blowup_record)``."""
    params, scfg = cfg.params, cfg.step
    e = energy(state, params)
    blowup = None
    while state.t < cfg.t_end:
        try:
            dt = adaptive_dt(state, params, scfg, e, loop.energy_ref)
            new = step(state, params, scfg, dt)
            if cfg.mass_leak:
                new = _leak(new, cfg.mass_leak)
            e_new = energy(new, params)
        except BlowUpError as exc:
            blowup = exc.record()
            ns = norm_suite(state, params, ())
            blowup["last_valid"] = {
                "t": state.t,
                "step": loop.step,
                "rho_min": ns.rho_min,
                "rho_max": ns.rho_max,
                "linf_phi": ns.linf_phi,
                "apriori_bracket": ns.apriori_bracket(),
            }
            log.warning("blow-up: %s", exc)
            break
        _, d_full = loop.cum.add(e, e_new)
        increment = e_new.total - e.total
        loop.max_dt = max(loop.max_dt, dt)
        loop.max_defect = max(loop.max_defect, increment + d_full)
        loop.max_increment = max(loop.max_increment, increment)
        state, e = new, e_new
        loop.step += 1
        loop.since_sample += 1
        if loop.since_sample >= cfg.sample_every or state.t >= cfg.t_end:
            out.write(_dumps(_sample_record(cfg, state, e, loop)) + "\n")
            out.flush()
            loop.since_sample = 0
            loop.reset_interval()
        if cfg.checkpoint_every and loop.step % cfg.checkpoint_every == 0:
            save_checkpoint(ckpt_path, state, _checkpoint_meta(cfg, loop))
    return state, blowup


@dataclass
class RunResult:
    exit_status: int
    verdicts: dict
    state: State
    output_dir: Path


def _finish(cfg: RunConfig, out_dir: Path, state: State, loop: _Loop, blowup, out) -> RunResult:
    marker = {"kind": "blowup", **blowup} if blowup else {"kind": "end", "t": state.t, "step": loop.step}
    out.write(_dumps(marker) + "\n")
    out.flush()
    save_checkpoint(out_dir / CHECKPOINT_NAME, state, _checkpoint_meta(cfg, loop))
    header, samples, blow = read_series(out_dir / SERIES_NAME)
    verdicts = evaluate_verdicts(cfg, samples, blow)
    (out_dir / VERDICTS_NAME).write_text(_dumps(verdicts) + "\n")
    return RunResult(verdicts["exit_status"], verdicts, state, out_dir)


def run(cfg: RunConfig) -> RunResult:
    """Integrate ``cfg`` from t = 0 and write all artifacts."""
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    state = build_initial(cfg)
    e0 = energy(state, cfg.params)
    loop = _Loop(step=0, energy_ref=e0.total, cum=CumulativeDissipation())
    with open(out_dir / SERIES_NAME, "w") as out:
        header = {"kind": "header", "schema": SERIES_SCHEMA, "config": cfg.to_dict()}
        out.write(_dumps(header) + "\n")
        out.write(_dumps(_sample_record(cfg, state, e0, loop)) + "\n")
        log.info("run: dim=%d n=%d t_end=%g -> %s", cfg.dim, cfg.n, cfg.t_end, out_dir)
        state, blowup = _integrate(cfg, state, loop, out, out_dir / CHECKPOINT_NAME)
        return _finish(cfg, out_dir, state, loop, blowup, out)


_FROZEN_SECTIONS = ("grid.", "params.")


def resume(checkpoint: str | Path, overrides: dict[str, Any] | None = None) -> RunResult:
    """Continue from ``checkpoint``; the series gets a resume marker appended.

    Grid and model parameters cannot change; step controls, ``t_end`` and the
    output directory can.
    """
    state, meta = load_checkpoint(checkpoint)
    try:
        base = RunConfig.from_dict(meta["config"])
        loop = _Loop.from_meta(meta["loop"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{checkpoint}: missing run metadata ({exc})") from None
    overrides = dict(overrides or {})
    cfg = apply_overrides(base, overrides)
    if (cfg.dim, cfg.n) != (base.dim, base.n) or cfg.params != base.params:
        bad = sorted(k for k in overrides if k.startswith(_FROZEN_SECTIONS))
        raise ConfigError(f"resume cannot change grid or model parameters (got overrides {bad})")
    if (state.grid.dim, state.grid.n) != (cfg.dim, cfg.n):
        raise CheckpointError("checkpoint grid does not match its recorded configuration")
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    series = out_dir / SERIES_NAME
    fresh = not series.exists()
    with open(series, "a") as out:
        if fresh:
            out.write(_dumps({"kind": "header", "schema": SERIES_SCHEMA, "config": cfg.to_dict()}) + "\n")
        marker = {
            "kind": "resume",
            "t": state.t,
            "step": loop.step,
            "checkpoint": str(checkpoint),
            "overrides": {k: str(v) for k, v in overrides.items()},
            "config": cfg.to_dict(),
        }
        out.write(_dumps(marker) + "\n")
        log.info("resume at t=%g step=%d -> t_end=%g", state.t, loop.step, cfg.t_end)
        state, blowup = _integrate(cfg, state, loop, out, out_dir / CHECKPOINT_NAME)
        return _finish(cfg, out_dir, state, loop, blowup, out)


# ---------------------------------------------------------------------------
# series reading and verdicts
# ---------------------------------------------------------------------------


def read_series(path: str | Path) -> tuple[dict, list[dict], dict | None]:
    """Parse a series file into ``(header, samples, blowup_record)``.

    Samples superseded by a later resume (those after the resume time) are
    dropped, so the returned samples have strictly increasing times.
    """
    header = None
    samples: list[dict] = []
    blowup = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({exc})") from None
            kind = obj.get("kind")
            if kind == "header":
                if obj.get("schema") != SERIES_SCHEMA:
                    raise ValueError(f"{path}: unsupported schema {obj.get('schema')!r}")
                header = header or obj
            elif kind == "sample":
                samples.append(obj)
            elif kind == "resume":
                samples = [s for s in samples if s["t"] <= obj["t"]]
                blowup = None
                header = dict(header or {}, config=obj.get("config", (header or {}).get("config")))
            elif kind == "blowup":
                blowup = {k: v for k, v in obj.items() if k != "kind"}
    if header is None:
        raise ValueError(f"{path}: missing header line")
    return header, samples, blowup


def _decay_floors(cfg: RunConfig, first: NormSuite) -> tuple[float, float]:
    phi_ref = first.means["rho_phi"] / first.means["rho"]
    ns = norm_suite(roundoff_state(cfg.grid, cfg.params, phi_ref), cfg.params, ())
    return ns.low_bracket(), ns.high_bracket()


def _anchor_value(rep) -> float:
    ser = rep.series
    return float(ser.values[np.searchsorted(ser.times, rep.anchor_t)])


def evaluate_verdicts(cfg: RunConfig, samples: list[dict], blowup: dict | None) -> dict:
    """Evaluate every enabled check on the sampled trajectory."""
    energies = [EnergyReport.from_json(s["energy"]) for s in samples]
    norms = [NormSuite.from_json(s["norms"]) for s in samples]
    times = np.array([s["t"] for s in samples])
    v = cfg.verify
    checks: dict[str, dict] = {}
    for name_arg in cfg.checks:
        name, _, arg = name_arg.partition("@")
        try:
            if len(samples) < 2:
                raise ValueError("fewer than two samples")
            if name == "energy_law":
                defects = [s["interval"]["max_defect"] for s in samples[1:]]
                rep = check_energy_law(
                    energies,
                    [s["interval"]["max_dt"] for s in samples[1:]],
                    cum_law=[s["cum_diss"]["law"] for s in samples],
                    cum_full=[s["cum_diss"]["full"] for s in samples],
                    k_const=v.energy_k,
                    slack=v.energy_slack,
                    step_defects=[-math.inf if d is None else d for d in defects],
                ).to_json()
                incs = [s["interval"]["max_increment"] for s in samples[1:]]
                rep["max_step_increment"] = max((x for x in incs if x is not None), default=None)
            elif name == "conservation":
                rep = check_conservation(norms, v.conservation_tol).to_json()
            elif name == "apriori":
                delta = v.phi_delta if v.phi_delta is not None else cfg.perturbation.delta
                rep = check_apriori_bound(norms, norms[0], rho_bar=cfg.params.rho_bar, delta=delta).to_json()
            elif name == "decay":
                s = float(arg)
                floor_low, floor_high = _decay_floors(cfg, norms[0])
                low = check_decay(
                    DecaySeries(times, np.array([n.low_bracket() for n in norms]), s), v.decay_t0, atol=floor_low
                )
                high = check_decay(
                    DecaySeries(times, np.array([n.high_bracket() for n in norms]), 2.0 + s),
                    v.decay_t0,
                    atol=floor_high,
                )
                # the ordering of fitted rates is only meaningful when both
                # brackets are resolved above round-off at the anchor
                resolved = _anchor_value(low) > low.atol and _anchor_value(high) > high.atol
                rep = {
                    "passed": low.passed and high.passed,
                    "low": low.to_json(),
                    "high": high.to_json(),
                    "rate_ordering": (high.fitted_rate >= low.fitted_rate) if resolved else None,
                }
            elif name == "neg_sobolev":
                s = float(arg)
                key = repr(s)
                if key not in samples[0]["neg_energy"]:
                    raise ValueError(f"s={s} not among the sampled run.s_values")
                vals = [smp["neg_energy"][key] for smp in samples]
                rep = check_neg_sobolev_bound(times, vals, s, early_frac=v.neg_early_frac, factor=v.neg_factor).to_json()
            else:  # pragma: no cover - rejected by RunConfig
                raise ValueError(f"unknown check {name}")
        except ValueError as exc:
            rep = {"passed": False, "error": str(exc)}
        rep["anchor"] = ANCHORS[name]
        checks[name_arg] = rep
    verdicts = {
        "schema": VERDICTS_SCHEMA,
        "blowup": blowup,
        "t_final": float(times[-1]) if len(times) else None,
        "samples": len(samples),
        "checks": checks,
    }
    verdicts["exit_status"] = exit_status(verdicts)
    verdicts["passed"] = verdicts["exit_status"] == EXIT_OK
    return verdicts


def exit_status(verdicts: dict) -> int:
    """0 iff no blow-up and every enabled check passed; 2 on blow-up; 1 otherwise."""
    if verdicts.get("blowup"):
        return EXIT_BLOWUP
    if all(c.get("passed") is True for c in verdicts.get("checks", {}).values()):
        return EXIT_OK
    return EXIT_CHECK_FAILED


def check(output_dir: str | Path) -> dict:
    """Re-evaluate and rewrite verdicts.json from an existing series."""
    out_dir = Path(output_dir)
    series = out_dir / SERIES_NAME if out_dir.is_dir() else out_dir
    header, samples, blowup = read_series(series)
    cfg = RunConfig.from_dict(header["config"])
    verdicts = evaluate_verdicts(cfg, samples, blowup)
    (series.parent / VERDICTS_NAME).write_text(_dumps(verdicts) + "\n")
    return verdicts


def checkpoint_norms(path: str | Path) -> NormSuite:
    state, meta = load_checkpoint(path)
    try:
        cfg = RunConfig.from_dict(meta["config"])
        params, s_values = cfg.params, cfg.s_values
    except (KeyError, TypeError, ValueError):
        params, s_values = ModelParams(), (0.5, 1.0)
    return norm_suite(state, params, s_values)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


def _member_summary(axis: str, value, result: RunResult) -> dict:
    ver = result.verdicts
    summary = {
        "kind": "member",
        "axis": axis,
        "value": value,
        "output_dir": str(result.output_dir),
        "exit_status": result.exit_status,
        "checks": {k: c.get("passed") for k, c in ver["checks"].items()},
        "blowup": ver["blowup"],
    }
    for k, c in ver["checks"].items():
        if k == "apriori" and "ratio" in c:
            summary["apriori_ratio"] = c["ratio"]
        if k.startswith("decay") and "low" in c:
            summary.setdefault("envelope_C", {})[k] = {"low": c["low"]["envelope_C"], "high": c["high"]["envelope_C"]}
    return summary


def _run_member(cfg: RunConfig, axis: str, value) -> dict:
    return _member_summary(axis, value, run(cfg))


def sweep(cfg: RunConfig, axis: str, values: Iterable, workers: int = 1) -> dict:
    """Run ``cfg`` once per value of the dotted field ``axis``.

    Members write to ``<output_dir>/<axis>=<value>``; one summary line per
    member is appended to ``<output_dir>/sweep.ndjson`` as it completes (in
    value order).  An infrastructure failure stops the sweep and re-raises
    after recording an error line; completed members stay on disk.
    """
    values = list(values)
    if not values:
        raise ConfigError("sweep needs at least one value")
    root = Path(cfg.output_dir)
    root.mkdir(parents=True, exist_ok=True)
    members = []
    for val in values:
        sub = apply_overrides(cfg, {axis: val, "run.output_dir": str(root / f"{axis}={val}")})
        members.append((val, sub))
    summaries = []
    with open(root / "sweep.ndjson", "w") as out:
        out.write(_dumps({"kind": "header", "schema": SWEEP_SCHEMA, "axis": axis, "values": values}) + "\n")
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(_run_member, sub, axis, val) for val, sub in members]
                for (val, _), fut in zip(members, futures):
                    try:
                        summary = fut.result()
                    except Exception as exc:
                        out.write(_dumps({"kind": "error", "axis": axis, "value": val, "error": repr(exc)}) + "\n")
                        for f in futures:
                            f.cancel()
                        raise
                    out.write(_dumps(summary) + "\n")
                    out.flush()
                    summaries.append(summary)
        else:
            for val, sub in members:
                try:
                    summary = _run_member(sub, axis, val)
                except Exception as exc:
                    out.write(_dumps({"kind": "error", "axis": axis, "value": val, "error": repr(exc)}) + "\n")
                    raise
                out.write(_dumps(summary) + "\n")
                out.flush()
                summaries.append(summary)
        ratios = [s["apriori_ratio"] for s in summaries if isinstance(s.get("apriori_ratio"), (int, float))]
        aggregate = {
            "kind": "aggregate",
            "axis": axis,
            "exit_statuses": [s["exit_status"] for s in summaries],
            "apriori_ratio_spread": (max(ratios) / min(ratios)) if ratios and min(ratios) > 0 else None,
            "all_passed": all(s["exit_status"] == EXIT_OK for s in summaries),
        }
        out.write(_dumps(aggregate) + "\n")
    return {"members": summaries, "aggregate": aggregate}

"""
Semi-implicit time integration of the conservative NSCH system.

The stiff parts are split off as constant-coefficient Fourier multipliers
and integrated implicitly; everything else, including the variable
coefficient remainders, is explicit:

    phase:     c_t ⊃ -(S₄Δ² - S₂Δ)(c - φ_ref ρ)
    momentum:  m_t ⊃ S_ν(Δm + ∇div m) + S_λ∇div m

The stabilization constants bound the true principal coefficients from
above at the start of every step (S₄ >= ε/ρ_min², S_ν >= max ν/ρ_min, ...).
With the implicit symbol dominating the true one, the stiff limit of the
scheme stays contractive; with the floor values (ε/ρ̄², ν₀/ρ̄) it does not
once ν(φ) > ν₀.  Coupling the phase multiplier to c - φ_ref ρ keeps the
uniform-phase manifold φ ≡ φ_ref invariant when only the density moves.

Time integration is the two-stage, second-order IMEX Runge-Kutta scheme of
Ascher, Ruuth and Spiteri (ARS(2,2,2)); its implicit part is L-stable, so
the fourth-order symbol is damped rather than reflected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np

from .errors import BlowUpError
from .model import ModelParams, State, evaluate_hat
from .spectral import Grid

__all__ = ["StepConfig", "step", "adaptive_dt", "stabilization_constants"]

_GAMMA = 1.0 - 1.0 / math.sqrt(2.0)
_DELTA = 1.0 - 1.0 / (2.0 * _GAMMA)
# margin on the real-axis stability interval [-2, 0] of the explicit stages
_EXPLICIT_MARGIN = 0.9
# energies below this fraction of the reference energy do not limit dt
_ENERGY_FLOOR = 1e-4


@dataclass(frozen=True)
class StepConfig:
    """Time-step controls.

    ``dt`` is the step used when ``adaptive`` is off (and the default for a
    bare :func:`step` call).  ``safety`` is the vacuum guard: a density at or
    below ``safety * rho_bar`` raises :class:`BlowUpError`.
    ``energy_frac`` caps the fraction of the current total energy that may be
    dissipated in one step (0 disables the cap).
    """

    dt: float = 1e-3
    cfl: float = 0.4
    dt_min: float = 1e-9
    dt_max: float = 1e-2
    adaptive: bool = True
    implicit_phase: bool = True
    implicit_viscous: bool = True
    stabilization: float = 1.1
    energy_frac: float = 0.01
    safety: float = 0.01

    def __post_init__(self):
        if not 0 < self.cfl < 1:
            raise ValueError("cfl must lie in (0, 1)")
        if not 0 < self.dt_min <= self.dt_max:
            raise ValueError("need 0 < dt_min <= dt_max")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.adaptive and not self.dt_min <= self.dt <= self.dt_max:
            raise ValueError("fixed dt must lie in [dt_min, dt_max]")
        if not self.stabilization > 0:
            raise ValueError("stabilization must be positive")
        if self.energy_frac < 0:
            raise ValueError("energy_frac must be non-negative")
        if not 0 < self.safety < 1:
            raise ValueError("safety must lie in (0, 1)")

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def scaled(self, factor: float) -> "StepConfig":
        """Same controls with every step-size knob multiplied by ``factor``."""
        return replace(
            self,
            dt=self.dt * factor,
            cfl=self.cfl * factor,
            dt_max=self.dt_max * factor,
            dt_min=min(self.dt_min, self.dt_max * factor),
            energy_frac=self.energy_frac * factor,
        )


@dataclass(frozen=True)
class _Stab:
    s4: float
    s2: float
    phi_ref: float
    nu_s: float
    lam_s: float


def _principal_coefficients(rho, phi, params: ModelParams):
    rho_min = float(np.min(rho))
    f2 = float(np.max(3.0 * phi**2 - 1.0))
    a4 = params.eps / rho_min**2
    a2 = max(f2, 0.0) / (params.eps * rho_min)
    a_nu = float(np.max(params.nu(phi))) / rho_min
    a_lam = float(np.max(params.lam(phi))) / rho_min
    return a4, a2, a_nu, a_lam


def stabilization_constants(state: State, params: ModelParams, cfg: StepConfig) -> _Stab:
    rho = state.rho.values
    phi = state.c.values / rho
    a4, a2, a_nu, a_lam = _principal_coefficients(rho, phi, params)
    k = cfg.stabilization
    phi_ref = state.c.mean() / state.rho.mean()
    return _Stab(
        s4=k * a4 if cfg.implicit_phase else 0.0,
        s2=k * a2 if cfg.implicit_phase else 0.0,
        phi_ref=phi_ref,
        nu_s=k * a_nu if cfg.implicit_viscous else 0.0,
        lam_s=k * a_lam if cfg.implicit_viscous else 0.0,
    )


class _Linear:
    """Implicit multiplier L and the solver for (I - a L) Y = R."""

    def __init__(self, grid: Grid, st: _Stab):
        self.grid = grid
        self.st = st
        k2 = grid.k2
        self.phase_symbol = -(st.s4 * k2**2 + st.s2 * k2)
        # Nyquist-free wavevector, consistent with the explicit divergence
        self.kt = [np.imag(ikj) for ikj in grid.ik]
        self.kt2 = sum(kj**2 for kj in self.kt)

    def _kdot(self, m):
        return sum(kj * mj for kj, mj in zip(self.kt, m))

    def apply(self, U):
        rho, mom, c = U
        st, k2 = self.st, self.grid.k2
        kd = self._kdot(mom)
        lm = [-st.nu_s * k2 * mi - (st.nu_s + st.lam_s) * kj * kd for mi, kj in zip(mom, self.kt)]
        lc = self.phase_symbol * (c - st.phi_ref * rho)
        return np.zeros_like(rho), lm, lc

    def solve(self, R, a: float):
        rho, mom, c = R
        st, k2 = self.st, self.grid.k2
        alpha = 1.0 + a * st.nu_s * k2
        g = a * (st.nu_s + st.lam_s)
        kd = self._kdot(mom)
        corr = g * kd / (alpha + g * self.kt2)
        ym = [(mi - kj * corr) / alpha for mi, kj in zip(mom, self.kt)]
        A = self.phase_symbol
        yc = (c - a * A * st.phi_ref * rho) / (1.0 - a * A)
        return rho, ym, yc


def _axpy(U, scale, V):
    """U + scale * V for (rho, [mom], c) triples."""
    return (
        U[0] + scale * V[0],
        [u + scale * v for u, v in zip(U[1], V[1])],
        U[2] + scale * V[2],
    )


def _sub(U, V):
    return _axpy(U, -1.0, V)


def step(state: State, params: ModelParams, cfg: StepConfig, dt: float | None = None) -> State:
    """Advance ``state`` by one ARS(2,2,2) step of size ``dt`` (default ``cfg.dt``)."""
    dt = cfg.dt if dt is None else float(dt)
    if not dt > 0:
        raise ValueError("dt must be positive")
    g = state.grid
    lin = _Linear(g, stabilization_constants(state, params, cfg))

    def explicit(U, t):
        F = evaluate_hat(g, params, U[0], U[1], U[2], t=t, floor=cfg.safety)
        return _sub(F, lin.apply(U))

    U0 = (state.rho.spectral, [m.spectral for m in state.mom], state.c.spectral)
    a = _GAMMA * dt
    E1 = explicit(U0, state.t)
    Y2 = lin.solve(_axpy(U0, a, E1), a)
    E2 = explicit(Y2, state.t + a)
    R = _axpy(_axpy(U0, dt * _DELTA, E1), dt * (1.0 - _DELTA), E2)
    R = _axpy(R, dt * (1.0 - _GAMMA), lin.apply(Y2))
    Y3 = lin.solve(R, a)

    t_new = state.t + dt
    # modes outside the 2/3 ball carry only transform round-off, which the
    # neutral multiplier there would otherwise accumulate step after step
    mask = g.dealias_mask
    rho = g.ifft(Y3[0] * mask)
    mom = [g.ifft(m * mask) for m in Y3[1]]
    c = g.ifft(Y3[2] * mask)
    finite = np.all(np.isfinite(rho)) and np.all(np.isfinite(c)) and all(np.all(np.isfinite(m)) for m in mom)
    if not finite:
        raise BlowUpError(t_new, "non_finite", {})
    rmin = float(np.min(rho))
    if rmin <= cfg.safety * params.rho_bar:
        raise BlowUpError(t_new, "vacuum", {"rho_min": rmin, "rho_max": float(np.max(rho))})
    return state.with_arrays(t_new, rho, mom, c)


def adaptive_dt(state: State, params: ModelParams, cfg: StepConfig, energy=None, energy_ref=None) -> float:
    """Step size from the advective CFL, explicit-remainder caps and the energy cap.

    ``energy`` is an optional :class:`~nsch.diagnostics.EnergyReport` of
    ``state``; without it the energy cap is skipped.  ``energy_ref`` (usually
    the initial total energy) sets a floor below which the remaining energy
    no longer constrains the step: once the state has relaxed to round-off
    level, its dissipation rate carries no accuracy requirement.
    """
    if not cfg.adaptive:
        return cfg.dt
    g = state.grid
    rho = state.rho.values
    speed = np.sqrt(sum(m.values**2 for m in state.mom)) / rho
    cs = params.sound_speed(float(np.max(rho)))
    dt = min(cfg.dt_max, cfg.cfl * g.h / (float(np.max(speed)) + cs))

    phi = state.c.values / rho
    a4, a2, a_nu, a_lam = _principal_coefficients(rho, phi, params)
    st = stabilization_constants(state, params, cfg)
    kmax = g.kmax_dealiased
    rate = max(a4 - st.s4, 0.0) * kmax**4 + max(a2 - st.s2, 0.0) * kmax**2
    rate += (max(2 * a_nu + a_lam - (2 * st.nu_s + st.lam_s), 0.0)) * kmax**2
    if rate > 0:
        dt = min(dt, 2.0 * _EXPLICIT_MARGIN / rate)

    if energy is not None and cfg.energy_frac > 0:
        diss = energy.diss_visc + energy.diss_mu
        scale = energy.total
        if energy_ref is not None:
            scale = max(scale, _ENERGY_FLOOR * energy_ref)
        if diss > 0 and scale > 0:
            dt = min(dt, cfg.energy_frac * scale / diss)
    return max(dt, cfg.dt_min)

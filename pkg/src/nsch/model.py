"""
Compressible Navier-Stokes/Cahn-Hilliard system in conservative variables.

Unknowns are the density ρ, momentum m = ρu and phase mass c = ρφ on the
periodic torus.  The spatial operator is

    ρ_t = -div m
    m_t = -div(m ⊗ u) - ∇p(ρ) - ε∇φΔφ + 2div(ν(φ)D(u)) + ∇(λ(φ) div u)
    c_t = -div(c u) + Δμ,        μ = -εΔφ/ρ + f'(φ)/ε,   f(φ) = φ⁴/4 - φ²/2

with p(ρ) = Aρ^γ, ν(φ) = ν₀ + ν₁φ², λ(φ) = λ₀.  Pointwise products are
formed in physical space from dealiased factors and every tendency is
projected back onto the 2/3 ball.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import NamedTuple

import numpy as np

from .errors import BlowUpError
from .spectral import Field, Grid, VectorField

__all__ = [
    "ModelParams",
    "State",
    "Tendencies",
    "chemical_potential",
    "capillary_force",
    "viscous_stress_div",
    "rhs",
    "thermo_G",
    "thermo_G_scalar",
    "thermo_G_bounds",
    "VACUUM_FRACTION",
]

# densities at or below VACUUM_FRACTION * rho_bar are treated as blow-up
VACUUM_FRACTION = 0.01


@dataclass(frozen=True)
class ModelParams:
    rho_bar: float = 1.0
    gamma: float = 1.4
    p_coeff: float = 1.0
    nu0: float = 0.1
    nu1: float = 0.05
    lam0: float = 0.0
    eps: float = 1.0

    def __post_init__(self):
        if not self.rho_bar > 0:
            raise ValueError("rho_bar must be positive")
        if not self.gamma > 1:
            raise ValueError("gamma must exceed 1")
        if not self.p_coeff > 0:
            raise ValueError("p_coeff must be positive")
        if not self.nu0 > 0:
            raise ValueError("nu0 must be positive")
        if self.nu1 < 0 or self.lam0 < 0:
            raise ValueError("nu1 and lam0 must be non-negative")
        if not self.eps > 0:
            raise ValueError("eps must be positive")

    # constitutive laws ------------------------------------------------------
    def pressure(self, rho):
        return self.p_coeff * rho**self.gamma

    def dpressure(self, rho):
        return self.p_coeff * self.gamma * rho ** (self.gamma - 1.0)

    def nu(self, phi):
        return self.nu0 + self.nu1 * phi**2

    def lam(self, phi):
        return self.lam0 + 0.0 * phi

    def sound_speed(self, rho) -> float:
        return math.sqrt(self.dpressure(rho))

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class State:
    """Snapshot (ρ, m = ρu, c = ρφ) at time ``t``."""

    t: float
    rho: Field
    mom: VectorField
    c: Field

    def __post_init__(self):
        g = self.rho.grid
        if self.c.grid != g or self.mom.grid != g:
            raise ValueError("all state fields must share one grid")
        if not float(np.min(self.rho.values)) > 0:
            raise ValueError("density must be positive everywhere")

    @property
    def grid(self) -> Grid:
        return self.rho.grid

    @property
    def u(self) -> VectorField:
        r = self.rho.values
        return VectorField([Field(self.grid, m.values / r) for m in self.mom])

    @property
    def phi(self) -> Field:
        return Field(self.grid, self.c.values / self.rho.values)

    @classmethod
    def from_primitive(cls, t, rho: Field, u: VectorField, phi: Field) -> "State":
        r = rho.values
        mom = VectorField([Field(rho.grid, r * ui.values) for ui in u])
        return cls(t, rho, mom, Field(rho.grid, r * phi.values))

    @classmethod
    def uniform(cls, grid: Grid, rho: float, phi: float, t: float = 0.0) -> "State":
        zero = VectorField([Field.constant(grid, 0.0) for _ in range(grid.dim)])
        return cls(t, Field.constant(grid, rho), zero, Field.constant(grid, rho * phi))

    def with_arrays(self, t, rho, mom, c) -> "State":
        g = self.grid
        return State(t, Field(g, rho), VectorField([Field(g, m) for m in mom]), Field(g, c))


class Tendencies(NamedTuple):
    rho: Field
    mom: VectorField
    c: Field


# ---------------------------------------------------------------------------
# raw-array kernels shared by the public operators and the time stepper
# ---------------------------------------------------------------------------


def _check_density(grid: Grid, rho: np.ndarray, params: ModelParams, t: float, floor: float):
    rmin = float(np.min(rho))
    if not np.all(np.isfinite(rho)):
        raise BlowUpError(t, "non_finite", {"rho_min": rmin})
    if rmin <= floor * params.rho_bar:
        raise BlowUpError(t, "vacuum", {"rho_min": rmin, "rho_max": float(np.max(rho))})


def _project(grid: Grid, arr: np.ndarray) -> np.ndarray:
    """Forward transform followed by the 2/3 mask."""
    return grid.fft(arr) * grid.dealias_mask


def _viscous_hat(grid: Grid, u_hat, phi, params: ModelParams) -> list[np.ndarray]:
    """Spectral 2div(ν(φ)D(u)) + ∇(λ(φ)div u) from dealiased û and physical φ."""
    d, ik, inv = grid.dim, grid.ik, grid.ifft
    du = [[inv(ik[j] * u_hat[i]) for j in range(d)] for i in range(d)]
    nu = params.nu(phi)
    div_u = sum(du[i][i] for i in range(d))
    lam_div = params.lam(phi) * div_u
    out = [np.zeros(grid.spectral_shape, dtype=complex) for _ in range(d)]
    for i in range(d):
        for j in range(i, d):
            sig = nu * (du[i][j] + du[j][i])
            if i == j:
                sig = sig + lam_div
            sig_hat = _project(grid, sig)
            out[i] += ik[j] * sig_hat
            if j != i:
                out[j] += ik[i] * sig_hat
    return out


def evaluate_hat(grid: Grid, params: ModelParams, rho_hat, mom_hat, c_hat, *, t=0.0,
                 floor: float = VACUUM_FRACTION):
    """Full spatial operator in spectral space.

    Returns ``(drho_hat, dmom_hat, dc_hat)``, each masked to the 2/3 ball.
    """
    d, ik, inv, k2, mask = grid.dim, grid.ik, grid.ifft, grid.k2, grid.dealias_mask
    eps = params.eps
    rho = inv(rho_hat)
    _check_density(grid, rho, params, t, floor)
    c = inv(c_hat)
    mom = [inv(mh) for mh in mom_hat]

    phi_hat = _project(grid, c / rho)
    u_hat = [_project(grid, m / rho) for m in mom]
    phi = inv(phi_hat)
    u = [inv(uh) for uh in u_hat]
    lap_phi = inv(-k2 * phi_hat)

    # phase equation
    mu = -eps * lap_phi / rho + (phi**3 - phi) / eps
    mu_hat = _project(grid, mu)
    dc_hat = -k2 * mu_hat
    for j in range(d):
        dc_hat -= ik[j] * _project(grid, c * u[j])

    # momentum equation
    p_hat = _project(grid, params.pressure(rho))
    visc = _viscous_hat(grid, u_hat, phi, params)
    dmom_hat = []
    for i in range(d):
        acc = -ik[i] * p_hat + visc[i]
        grad_phi_i = inv(ik[i] * phi_hat)
        acc -= eps * _project(grid, grad_phi_i * lap_phi)
        for j in range(d):
            acc -= ik[j] * _project(grid, mom[i] * u[j])
        dmom_hat.append(acc * mask)

    drho_hat = np.zeros(grid.spectral_shape, dtype=complex)
    for j in range(d):
        drho_hat -= ik[j] * mom_hat[j]
    return drho_hat * mask, dmom_hat, dc_hat * mask


# ---------------------------------------------------------------------------
# public operators
# ---------------------------------------------------------------------------


def chemical_potential(state: State, params: ModelParams) -> Field:
    """μ = -εΔφ/ρ + (φ³ - φ)/ε with φ = c/ρ, dealiased."""
    g = state.grid
    rho = state.rho.values
    if not float(np.min(rho)) > 0:
        raise BlowUpError(state.t, "vacuum", {"rho_min": float(np.min(rho))})
    phi_hat = _project(g, state.c.values / rho)
    phi = g.ifft(phi_hat)
    lap_phi = g.ifft(-g.k2 * phi_hat)
    mu = -params.eps * lap_phi / rho + (phi**3 - phi) / params.eps
    return Field(g, spectral=_project(g, mu))


def capillary_force(phi: Field) -> VectorField:
    """∇φ Δφ, the non-gradient part of div(∇φ⊗∇φ - |∇φ|²/2 I), dealiased."""
    g = phi.grid
    phi_hat = phi.spectral * g.dealias_mask
    lap = g.ifft(-g.k2 * phi_hat)
    return VectorField(
        [Field(g, spectral=_project(g, g.ifft(g.ik[i] * phi_hat) * lap)) for i in range(g.dim)]
    )


def viscous_stress_div(u: VectorField, phi: Field, params: ModelParams) -> VectorField:
    """2div(ν(φ)D(u)) + ∇(λ(φ) div u)."""
    g = u.grid
    u_hat = [c.spectral * g.dealias_mask for c in u]
    phi_d = g.ifft(phi.spectral * g.dealias_mask)
    out = _viscous_hat(g, u_hat, phi_d, params)
    return VectorField([Field(g, spectral=o * g.dealias_mask) for o in out])


def rhs(state: State, params: ModelParams) -> Tendencies:
    """Tendencies (dρ/dt, dm/dt, dc/dt) of the conservative system."""
    g = state.grid
    drho, dmom, dc = evaluate_hat(
        g, params, state.rho.spectral, [m.spectral for m in state.mom], state.c.spectral, t=state.t
    )
    return Tendencies(
        Field(g, spectral=drho), VectorField([Field(g, spectral=m) for m in dmom]), Field(g, spectral=dc)
    )


# ---------------------------------------------------------------------------
# thermodynamic potential G(ρ) = ρ ∫_{ρ̄}^{ρ} (p(z) - p(ρ̄)) / z² dz
# ---------------------------------------------------------------------------

_SERIES_RADIUS = 0.25
_SERIES_TERMS = 48


def _excess_power(y: np.ndarray, gamma: float) -> np.ndarray:
    """(1 + y)^γ - 1 - γy without cancellation for small |y|."""
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    small = np.abs(y) <= _SERIES_RADIUS
    if np.any(small):
        ys = y[small]
        # Σ_{n>=2} binom(γ, n) yⁿ, accumulated term by term
        term = gamma * (gamma - 1.0) / 2.0 * ys**2
        acc = term.copy()
        for n in range(3, _SERIES_TERMS):
            term = term * (gamma - n + 1.0) / n * ys
            acc += term
        out[small] = acc
    big = ~small
    if np.any(big):
        yb = y[big]
        out[big] = np.expm1(gamma * np.log1p(yb)) - gamma * yb
    return out


def _g_values(rho: np.ndarray, params: ModelParams) -> np.ndarray:
    rb, gm = params.rho_bar, params.gamma
    y = (rho - rb) / rb
    return params.p_coeff * rb**gm * _excess_power(y, gm) / (gm - 1.0)


def thermo_G(rho: Field, params: ModelParams) -> Field:
    """Pointwise G(ρ) for the γ-law pressure.

    Closed form:  G = A ρ̄^γ [(1+y)^γ - 1 - γy] / (γ-1),  y = (ρ - ρ̄)/ρ̄.
    """
    vals = rho.values
    if not float(np.min(vals)) > 0:
        raise ValueError("G(rho) needs a positive density")
    return Field(rho.grid, _g_values(vals, params))


def thermo_G_scalar(rho_val: float, params: ModelParams) -> float:
    if not rho_val > 0:
        raise ValueError("G(rho) needs a positive density")
    return float(_g_values(np.array([rho_val]), params)[0])


def thermo_G_prime(rho_val: float, params: ModelParams) -> float:
    """G'(ρ) = (G(ρ) + p(ρ) - p(ρ̄)) / ρ."""
    return (thermo_G_scalar(rho_val, params) + params.pressure(rho_val) - params.pressure(params.rho_bar)) / rho_val


def thermo_G_bounds(params: ModelParams, lo: float | None = None, hi: float | None = None):
    """Constants (c, C) with c(ρ-ρ̄)² <= G(ρ) <= C(ρ-ρ̄)² on [lo, hi].

    Uses G'' = p'(ρ)/ρ, so c and C are half the extreme values of p'(z)/z on
    the interval (the default interval is [ρ̄/2, 2ρ̄]).
    """
    lo = params.rho_bar / 2 if lo is None else lo
    hi = 2 * params.rho_bar if hi is None else hi
    if not 0 < lo < hi:
        raise ValueError("need 0 < lo < hi")
    # p'(z)/z = Aγ z^{γ-2} is monotone, so the endpoints are the extremes
    ends = [params.dpressure(z) / z for z in (lo, hi)]
    return min(ends) / 2.0, max(ends) / 2.0

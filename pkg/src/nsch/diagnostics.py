"""
Energy functional, dissipation, conservation, a-priori bounds and decay
envelopes evaluated along a trajectory.

All integrals are uniform grid quadratures or their Parseval equivalents
(|T^d| = 1, so integrals and means coincide).  Checks return plain
dataclass reports with a ``passed`` flag and a ``to_json`` view.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .model import ModelParams, State, _g_values, chemical_potential
from .norms import NormSuite, sobolev_hierarchy
from .spectral import Field, VectorField

__all__ = [
    "EnergyReport",
    "energy",
    "norm_suite",
    "neg_sobolev_energy",
    "CumulativeDissipation",
    "EnergyLawReport",
    "check_energy_law",
    "ConservationReport",
    "check_conservation",
    "AprioriReport",
    "check_apriori_bound",
    "DecaySeries",
    "DecayReport",
    "check_decay",
    "NegSobolevReport",
    "check_neg_sobolev_bound",
    "roundoff_state",
]


# ---------------------------------------------------------------------------
# energy
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnergyReport:
    """Energy components and dissipation rates at one instant.

    ``diss_visc`` and ``diss_mu`` form the full dissipation rate;
    ``diss_law`` is the weaker rate ν₀/2‖∇u‖² + ‖∇μ‖² that the cumulative
    energy inequality is stated with.
    """

    t: float
    kinetic: float
    thermo: float
    gradient: float
    doublewell: float
    total: float
    diss_visc: float
    diss_mu: float
    grad_u_sq: float
    diss_law: float

    @property
    def diss_total(self) -> float:
        return self.diss_visc + self.diss_mu

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "EnergyReport":
        return cls(**{k: float(d[k]) for k in cls.__dataclass_fields__})


def energy(state: State, params: ModelParams) -> EnergyReport:
    """Total energy and dissipation of ``state``.

    Energy density: ρ|u|²/2 + G(ρ) + ε|∇φ|²/2 + ρ(φ²-1)²/(4ε).
    Dissipation: ½∫ν(φ)|∇u + ∇uᵀ|² + ∫λ(φ)(div u)² and ‖∇μ‖².
    """
    g = state.grid
    d, ik, inv = g.dim, g.ik, g.ifft
    rho = state.rho.values
    if not float(np.min(rho)) > 0:
        raise ValueError("energy needs a positive density")
    mom = state.mom.values
    eps = params.eps

    kinetic = float(np.mean(np.sum(mom**2, axis=0) / (2.0 * rho)))
    thermo = float(np.mean(_g_values(rho, params)))
    phi = state.c.values / rho
    phi_hat = g.fft(phi)
    gradient = 0.5 * eps * sum(g.power_sum(ikj * phi_hat) for ikj in ik)
    doublewell = float(np.mean(rho * (phi**2 - 1.0) ** 2)) / (4.0 * eps)

    u_hat = [g.fft(m / rho) for m in mom]
    du = [[inv(ik[j] * u_hat[i]) for j in range(d)] for i in range(d)]
    nu = params.nu(phi)
    strain_sq = sum((du[i][j] + du[j][i]) ** 2 for i in range(d) for j in range(d))
    div_u = sum(du[i][i] for i in range(d))
    diss_visc = float(np.mean(0.5 * nu * strain_sq + params.lam(phi) * div_u**2))
    grad_u_sq = float(sum(np.mean(du[i][j] ** 2) for i in range(d) for j in range(d)))
    mu_hat = chemical_potential(state, params).spectral
    diss_mu = sum(g.power_sum(ikj * mu_hat) for ikj in ik)

    total = kinetic + thermo + gradient + doublewell
    return EnergyReport(
        t=state.t,
        kinetic=kinetic,
        thermo=thermo,
        gradient=gradient,
        doublewell=doublewell,
        total=total,
        diss_visc=diss_visc,
        diss_mu=diss_mu,
        grad_u_sq=grad_u_sq,
        diss_law=0.5 * params.nu0 * grad_u_sq + diss_mu,
    )


@dataclass
class CumulativeDissipation:
    """Running time integrals of the dissipation rates.

    Each step is integrated with the logarithmic mean of the end-point rates,
    which is exact for exponentially varying rates and falls back to the
    trapezoid rule when the two rates are close.
    """

    law: float = 0.0
    full: float = 0.0

    @staticmethod
    def increment(d0: float, d1: float, dt: float) -> float:
        if d0 <= 0.0 or d1 <= 0.0:
            return 0.5 * (d0 + d1) * dt
        ratio = d0 / d1
        if abs(ratio - 1.0) < 1e-6:
            return 0.5 * (d0 + d1) * dt
        return (d0 - d1) * dt / math.log(ratio)

    def add(self, before: EnergyReport, after: EnergyReport) -> tuple[float, float]:
        dt = after.t - before.t
        dp = self.increment(before.diss_law, after.diss_law, dt)
        df = self.increment(before.diss_total, after.diss_total, dt)
        self.law += dp
        self.full += df
        return dp, df


# ---------------------------------------------------------------------------
# norm snapshots
# ---------------------------------------------------------------------------


def _neg_power_sum(power: np.ndarray, k2: np.ndarray, s: float, extra: int = 0) -> float:
    nz = k2 > 0
    return float(np.sum(power[nz] * k2[nz] ** (extra - s)))


def _power(fields_: Sequence[Field]) -> np.ndarray:
    g = fields_[0].grid
    p = np.zeros(g.spectral_shape)
    for f in fields_:
        s = f.spectral
        p += s.real**2 + s.imag**2
    return p * g.parseval_weights


def _neg_terms(state: State, params: ModelParams, s: float) -> tuple[dict, dict]:
    if not 0 < s < 1.5:
        raise ValueError(f"s must lie in (0, 3/2), got {s}")
    g = state.grid
    phi = state.phi
    u = state.u
    k2 = g.k2
    rho_dev = state.rho - params.rho_bar
    phi2m1 = phi * phi - 1.0
    vals = {
        "rho_dev": _neg_power_sum(_power([rho_dev]), k2, s),
        "u": _neg_power_sum(_power(list(u)), k2, s),
        "grad_phi": _neg_power_sum(_power([phi]), k2, s, extra=1),
        "phi2m1": _neg_power_sum(_power([phi2m1]), k2, s),
    }
    means = {
        "rho_dev": rho_dev.mean(),
        "u": [c.mean() for c in u],
        "grad_phi": [0.0] * g.dim,
        "phi2m1": phi2m1.mean(),
    }
    return vals, means


def neg_sobolev_energy(state: State, s: float, params: ModelParams | None = None) -> float:
    """E_{-s} = Σ ‖Λ^{-s}(v - ⨏v)‖² over v = ρ - ρ̄, u, ∇φ, φ² - 1."""
    vals, _ = _neg_terms(state, params or ModelParams(), s)
    return float(sum(vals.values()))


def norm_suite(state: State, params: ModelParams, s_values: Sequence[float] = (0.5, 1.0)) -> NormSuite:
    """All norms tracked along a trajectory, evaluated at ``state``."""
    phi = state.phi
    u = state.u
    rho_dev = state.rho - params.rho_bar
    phi2m1 = phi * phi - 1.0
    hk = {
        "rho_dev": sobolev_hierarchy(rho_dev, 4),
        "u": sobolev_hierarchy(u, 4),
        "grad_u": sobolev_hierarchy(u, 4, shift=1),
        "grad_phi": sobolev_hierarchy(phi, 4, shift=1),
        "phi2m1": sobolev_hierarchy(phi2m1, 4),
    }
    neg = {}
    means = {}
    for s in s_values:
        vals, m = _neg_terms(state, params, float(s))
        neg[float(s)] = {k: math.sqrt(v) for k, v in vals.items()}
        means = m
    means = dict(means)
    means["rho"] = state.rho.mean()
    means["rho_phi"] = state.c.mean()
    means["mom"] = [c.mean() for c in state.mom]
    phi_vals = phi.values
    rho_vals = state.rho.values
    return NormSuite(
        t=state.t,
        l2={k: v[0] for k, v in hk.items()},
        hk=hk,
        neg=neg,
        linf_phi=float(np.max(np.abs(phi_vals))),
        phi2m1_l2=hk["phi2m1"][0],
        rho_min=float(np.min(rho_vals)),
        rho_max=float(np.max(rho_vals)),
        means=means,
    )


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------


def _clean(x):
    """JSON-safe float (NaN/inf become strings)."""
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


@dataclass
class EnergyLawReport:
    passed: bool
    k_const: float
    slack: float
    max_increment: float
    max_cumulative_ratio: float
    max_defect: float
    increment_violation: dict | None = None
    cumulative_violation: dict | None = None

    def to_json(self) -> dict:
        return {k: _clean(v) for k, v in asdict(self).items()}


def check_energy_law(
    traj: Sequence[EnergyReport],
    dt_used: Sequence[float] | float,
    *,
    cum_law: Sequence[float] | None = None,
    cum_full: Sequence[float] | None = None,
    k_const: float = 1.0,
    slack: float = 0.05,
    step_defects: Sequence[float] | None = None,
) -> EnergyLawReport:
    """Discrete energy inequality along a sampled trajectory.

    Increments must satisfy E(t_{n+1}) - E(t_n) <= K·E(0)·dt_n·(t_{n+1} - t_n),
    where ``dt_n`` is the (largest) step size used inside the interval.  The
    cumulative inequality E(t) + ∫₀ᵗ(ν₀/2‖∇u‖² + ‖∇μ‖²) <= (1 + slack)E(0)
    uses ``cum_law`` when given (integrals accumulated at every step) and a
    log-mean quadrature of the samples otherwise.

    ``max_defect`` is the largest positive E(t_{n+1}) - E(t_n) + ∫D over an
    interval with the full dissipation rate D; in exact arithmetic it vanishes,
    so it measures the consistency error of the time integration.  When the
    per-step maxima are known (``step_defects``, one entry per interval) they
    are used instead of the sampled intervals.
    """
    n = len(traj)
    if n < 2:
        raise ValueError("need at least two samples")
    dts = np.broadcast_to(np.asarray(dt_used, dtype=float), (n - 1,)) if np.ndim(dt_used) == 0 else np.asarray(dt_used, float)
    if dts.shape != (n - 1,):
        raise ValueError("dt_used must be a scalar or have one entry per interval")
    e = np.array([r.total for r in traj])
    t = np.array([r.t for r in traj])
    if np.any(np.diff(t) <= 0):
        raise ValueError("sample times must be strictly increasing")
    e0 = e[0]

    if cum_law is None or cum_full is None:
        acc = CumulativeDissipation()
        cp, cf = [0.0], [0.0]
        for a, b in zip(traj[:-1], traj[1:]):
            acc.add(a, b)
            cp.append(acc.law)
            cf.append(acc.full)
        cum_law = cp if cum_law is None else cum_law
        cum_full = cf if cum_full is None else cum_full
    cum_law = np.asarray(cum_law, float) - cum_law[0]
    cum_full = np.asarray(cum_full, float) - cum_full[0]

    inc = np.diff(e)
    allowed = k_const * e0 * dts * np.diff(t)
    bad = np.nonzero(inc > allowed)[0]
    inc_violation = None
    if bad.size:
        i = int(bad[0])
        inc_violation = {"t0": t[i], "t1": t[i + 1], "increment": inc[i], "allowed": allowed[i]}

    lhs = e + cum_law
    bound = (1.0 + slack) * e0
    cum_bad = np.nonzero(lhs > bound)[0]
    cum_violation = None
    if cum_bad.size:
        i = int(cum_bad[0])
        cum_violation = {"t": t[i], "value": lhs[i], "bound": bound}
    ratio = float(np.max(lhs) / e0) if e0 > 0 else (0.0 if np.max(np.abs(lhs)) == 0 else math.inf)

    defect = inc + np.diff(cum_full) if step_defects is None else np.asarray(step_defects, float)
    return EnergyLawReport(
        passed=inc_violation is None and cum_violation is None,
        k_const=k_const,
        slack=slack,
        max_increment=float(np.max(inc)),
        max_cumulative_ratio=ratio,
        max_defect=float(max(np.max(defect), 0.0)),
        increment_violation=inc_violation,
        cumulative_violation=cum_violation,
    )


@dataclass
class ConservationReport:
    passed: bool
    tol: float
    mass_drift: float
    phase_mass_drift: float
    worst_t: float | None = None

    def to_json(self) -> dict:
        return asdict(self)


def _drift(x: np.ndarray) -> tuple[float, int]:
    ref = abs(x[0]) if x[0] != 0 else max(np.max(np.abs(x)), 1.0)
    dev = np.abs(x - x[0]) / ref
    i = int(np.argmax(dev))
    return float(dev[i]), i


def check_conservation(traj: Sequence[NormSuite], tol: float = 1e-10) -> ConservationReport:
    """Maximum relative drift of ⨏ρ and ⨏ρφ along the trajectory."""
    if len(traj) < 2:
        raise ValueError("need at least two samples")
    mass = np.array([s.means["rho"] for s in traj])
    phase = np.array([s.means["rho_phi"] for s in traj])
    dm, im = _drift(mass)
    dp, ip = _drift(phase)
    worst = im if dm >= dp else ip
    return ConservationReport(
        passed=dm <= tol and dp <= tol,
        tol=tol,
        mass_drift=dm,
        phase_mass_drift=dp,
        worst_t=traj[worst].t if max(dm, dp) > 0 else None,
    )


@dataclass
class AprioriReport:
    passed: bool
    ratio: float
    initial_bracket: float
    sup_bracket: float
    rho_min: float
    rho_max: float
    linf_phi: float
    phi_bound: float | None
    violations: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {k: _clean(v) for k, v in asdict(self).items()}


def check_apriori_bound(
    traj: Sequence[NormSuite],
    initial: NormSuite,
    *,
    rho_bar: float = 1.0,
    delta: float | None = None,
) -> AprioriReport:
    """Uniform-in-time bound of the H³ bracket relative to its initial value.

    The bracket ratio is reported and only required to be finite; the density
    must stay in [ρ̄/2, 2ρ̄] and, when ``delta`` is given, sup|φ| <= 1 + 10δ.
    """
    sup = max(s.apriori_bracket() for s in traj)
    init = initial.apriori_bracket()
    if init > 0:
        ratio = sup / init
    else:
        ratio = 0.0 if sup == 0 else math.inf
    rho_min = min(s.rho_min for s in traj)
    rho_max = max(s.rho_max for s in traj)
    linf = max(s.linf_phi for s in traj)
    phi_bound = None if delta is None else 1.0 + 10.0 * delta
    violations = []
    if not math.isfinite(ratio):
        violations.append({"kind": "bracket", "ratio": _clean(ratio)})
    for s in traj:
        if s.rho_min < rho_bar / 2:
            violations.append({"kind": "rho_min", "t": s.t, "value": s.rho_min, "bound": rho_bar / 2})
            break
    for s in traj:
        if s.rho_max > 2 * rho_bar:
            violations.append({"kind": "rho_max", "t": s.t, "value": s.rho_max, "bound": 2 * rho_bar})
            break
    if phi_bound is not None:
        for s in traj:
            if s.linf_phi > phi_bound:
                violations.append({"kind": "linf_phi", "t": s.t, "value": s.linf_phi, "bound": phi_bound})
                break
    return AprioriReport(
        passed=not violations,
        ratio=ratio,
        initial_bracket=init,
        sup_bracket=sup,
        rho_min=rho_min,
        rho_max=rho_max,
        linf_phi=linf,
        phi_bound=phi_bound,
        violations=violations,
    )


@dataclass(frozen=True)
class DecaySeries:
    """A norm sampled in time together with its target envelope C(1+t)^{-r}."""

    times: np.ndarray
    values: np.ndarray
    envelope_rate: float
    envelope_C: float = math.nan
    satisfied: bool | None = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("times and values must be 1-D arrays of equal length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("values must be finite and non-negative")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)


@dataclass
class DecayReport:
    series: DecaySeries
    passed: bool
    t0: float
    anchor_t: float
    fitted_rate: float
    tail_rate: float
    violation: dict | None = None
    atol: float = 0.0

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "rate": self.series.envelope_rate,
            "envelope_C": _clean(self.series.envelope_C),
            "t0": self.t0,
            "anchor_t": self.anchor_t,
            "fitted_rate": _clean(self.fitted_rate),
            "atol": self.atol,
            "tail_rate": _clean(self.tail_rate),
            "violation": self.violation,
        }


def _tail_rate(t: np.ndarray, v: np.ndarray) -> float:
    """Least-squares slope of -log v against log(1+t) over the second half of the span."""
    half = t >= t[0] + 0.5 * (t[-1] - t[0])
    tt, vv = t[half], v[half]
    pos = vv > 0
    if pos.sum() < 2:
        return math.inf
    slope = np.polyfit(np.log1p(tt[pos]), np.log(vv[pos]), 1)[0]
    return float(-slope)


def check_decay(series: DecaySeries, t0: float = 1.0, rtol: float = 1e-12, atol: float = 0.0) -> DecayReport:
    """One-sided algebraic envelope check anchored at ``t0``.

    The envelope constant is matched at the first sample with t >= t0, and
    every later sample must satisfy v(t) <= C(1+t)^{-r}(1 + rtol) + atol.
    Faster decay passes.  ``atol`` is a resolution floor: values at or below
    it are indistinguishable from round-off and impose no constraint.
    ``fitted_rate`` is the largest r the series satisfies with the same
    anchoring and floor; ``tail_rate`` a log-log slope; both are metadata.
    """
    if t0 < 1:
        raise ValueError("t0 must be >= 1")
    if atol < 0:
        raise ValueError("atol must be non-negative")
    t, v, r = series.times, series.values, series.envelope_rate
    if t.size == 0 or t[-1] < 10 * t0:
        raise ValueError(f"series must extend to at least 10*t0 = {10 * t0}")
    idx = np.nonzero(t >= t0)[0]
    a = int(idx[0])
    ta, va = t[a], v[a]
    if ta > 2 * t0:
        raise ValueError("no sample near the anchor time t0")
    C = va * (1.0 + ta) ** r
    tt, vv = t[a:], v[a:]
    env = C * (1.0 + tt) ** (-r)
    bad = np.nonzero(vv > env * (1.0 + rtol) + atol)[0]
    violation = None
    if bad.size:
        i = int(bad[0])
        violation = {"t": float(tt[i]), "value": float(vv[i]), "envelope": float(env[i]), "atol": atol}

    # v_i - atol <= v_a ((1+t_a)/(1+t_i))^r  <=>  r <= log(v_a/(v_i - atol)) / log((1+t_i)/(1+t_a))
    excess = vv[1:] - atol
    active = excess > 0
    if not np.any(active):
        fitted = math.inf
    elif va == 0:
        fitted = -math.inf
    else:
        rates = np.log(va / excess[active]) / np.log((1.0 + tt[1:][active]) / (1.0 + ta))
        fitted = float(np.min(rates))
    above = vv > atol
    return DecayReport(
        series=replace(series, envelope_C=float(C), satisfied=violation is None),
        passed=violation is None,
        t0=t0,
        anchor_t=float(ta),
        fitted_rate=fitted,
        tail_rate=_tail_rate(tt[above], vv[above]) if above.sum() >= 4 else math.inf,
        violation=violation,
        atol=atol,
    )


@dataclass
class NegSobolevReport:
    passed: bool
    s: float
    early_sup: float
    sup: float
    factor: float
    violation: dict | None = None

    def to_json(self) -> dict:
        return asdict(self)


def check_neg_sobolev_bound(
    times: Sequence[float], values: Sequence[float], s: float, *, early_frac: float = 0.1, factor: float = 1.1
) -> NegSobolevReport:
    """E_{-s}(t) <= factor · sup of E_{-s} over the first ``early_frac`` of samples."""
    t = np.asarray(times, float)
    v = np.asarray(values, float)
    if t.size < 2:
        raise ValueError("need at least two samples")
    n_early = max(1, int(math.ceil(early_frac * t.size)))
    early = float(np.max(v[:n_early]))
    bad = np.nonzero(v > factor * early)[0]
    violation = None
    if bad.size:
        i = int(bad[0])
        violation = {"t": t[i], "value": v[i], "bound": factor * early}
    return NegSobolevReport(
        passed=violation is None, s=s, early_sup=early, sup=float(np.max(v)), factor=factor, violation=violation
    )


def roundoff_state(grid, params: ModelParams, phi_ref: float = 1.0, rel: float = 32 * np.finfo(float).eps,
                   seed: int = 0) -> State:
    """Equilibrium (ρ̄, 0, φ_ref) carrying dealiased noise of relative size ``rel``.

    Its norms estimate the level below which a bracket is indistinguishable
    from round-off in double precision.
    """
    rng = np.random.default_rng(seed)
    mask = grid.dealias_mask

    def noise(scale):
        return grid.ifft(grid.fft(scale * rel * rng.standard_normal(grid.shape)) * mask)

    rho = params.rho_bar + noise(params.rho_bar)
    cs = params.sound_speed(params.rho_bar)
    mom = [noise(params.rho_bar * cs) for _ in range(grid.dim)]
    c = rho * phi_ref + noise(params.rho_bar * max(abs(phi_ref), 1.0))
    return State(0.0, Field(grid, rho), VectorField([Field(grid, m) for m in mom]), Field(grid, c))

"""
Lebesgue, Sobolev and negative-Sobolev norms on the unit torus, plus
executable checks of the functional inequalities used in the decay analysis.

Every L² quantity is evaluated spectrally through Parseval; L^p for other
``p`` uses the uniform grid sum (|T^d| = 1, so integrals and means agree).
The sharp inequalities (Fourier-side interpolation, Poincaré) are asserted
with their exact constants; the ones whose constants are not known are
exposed as ratio reports.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .spectral import Field, Grid, VectorField, lambda_pow

FieldLike = Union[Field, VectorField]

__all__ = [
    "NormSuite",
    "lp_norm",
    "sobolev_norm",
    "neg_sobolev_norm",
    "grad_power_norm",
    "check_interpolation",
    "check_gagliardo_nirenberg",
    "check_composition",
    "check_moser",
    "check_hls",
    "poincare_defect",
    "InterpolationReport",
    "RatioReport",
]


def _components(f: FieldLike) -> tuple[Field, ...]:
    return tuple(f) if isinstance(f, VectorField) else (f,)


def _pointwise_abs(f: FieldLike) -> np.ndarray:
    if isinstance(f, VectorField):
        return np.sqrt(np.sum(f.values**2, axis=0))
    return np.abs(f.values)


def _lp_of_array(a: np.ndarray, p: float) -> float:
    if math.isinf(p):
        return float(np.max(a))
    if p == 2:
        return float(np.sqrt(np.mean(a * a)))
    return float(np.mean(a**p) ** (1.0 / p))


def lp_norm(f: FieldLike, p: float = 2.0) -> float:
    """‖f‖_{L^p} by grid quadrature; ``p = inf`` is the max of |f|."""
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p}")
    return _lp_of_array(_pointwise_abs(f), p)


def _power(f: FieldLike) -> tuple[Grid, np.ndarray]:
    """Per-mode Parseval power Σ_components w |f̂|² (rfft layout)."""
    comps = _components(f)
    g = comps[0].grid
    p = np.zeros(g.spectral_shape)
    for c in comps:
        s = c.spectral
        p += s.real**2 + s.imag**2
    return g, p * g.parseval_weights


def grad_power_norm(f: FieldLike, j: int) -> float:
    """‖∇^j f‖_{L²} computed as (Σ (2π|k|)^{2j} |f̂|²)^{1/2}."""
    g, p = _power(f)
    return math.sqrt(float(np.sum(p * g.k2**j))) if j else math.sqrt(float(np.sum(p)))


def sobolev_norm(f: FieldLike, k: int) -> float:
    """Full H^k norm (Σ_{j<=k} ‖∇^j f‖²)^{1/2}."""
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    g, p = _power(f)
    weight = sum(g.k2**j for j in range(k + 1))
    return math.sqrt(float(np.sum(p * weight)))


def sobolev_hierarchy(f: FieldLike, kmax: int, shift: int = 0) -> list[float]:
    """``[‖∇^shift f‖_{H^0}, ..., ‖∇^shift f‖_{H^kmax}]`` from one power spectrum."""
    g, p = _power(f)
    out, acc = [], 0.0
    for j in range(kmax + 1):
        acc += float(np.sum(p * g.k2 ** (j + shift)))
        out.append(math.sqrt(acc))
    return out


def neg_sobolev_norm(f: FieldLike, s: float, *, return_mean: bool = False):
    """‖Λ^{-s}(f - ⨏f)‖_{L²} for ``0 < s < 3/2``.

    The mean is removed internally; with ``return_mean=True`` the removed
    mean (per component) is returned alongside the norm.
    """
    if not 0 < s < 1.5:
        raise ValueError(f"s must lie in (0, 3/2), got {s}")
    g, p = _power(f)
    nz = g.k2 > 0
    val = math.sqrt(float(np.sum(p[nz] * g.k2[nz] ** (-s))))
    if return_mean:
        means = [c.mean() for c in _components(f)]
        return val, (means if len(means) > 1 else means[0])
    return val


# ---------------------------------------------------------------------------
# pointwise tensor norms |∇^l f| for L^p versions of the inequalities
# ---------------------------------------------------------------------------


def _grad_tensor_abs(f: Field, l: int) -> np.ndarray:
    """Pointwise Frobenius norm of the l-th derivative tensor of a scalar field."""
    g = f.grid
    if l == 0:
        return np.abs(f.values)
    acc = np.zeros(g.shape)
    counts: dict[tuple[int, ...], int] = {}
    for idx in itertools.product(range(g.dim), repeat=l):
        key = tuple(sorted(idx))
        counts[key] = counts.get(key, 0) + 1
    for key, mult in counts.items():
        coeffs = f.spectral
        for a in key:
            coeffs = coeffs * g.ik[a]
        acc += mult * g.ifft(coeffs) ** 2
    return np.sqrt(acc)


def _grad_lp(f: Field, l: int, p: float) -> float:
    return _lp_of_array(_grad_tensor_abs(f, l), p)


# ---------------------------------------------------------------------------
# inequality checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InterpolationReport:
    lhs: float
    rhs: float
    theta: float
    holds: bool


def check_interpolation(f: Field, l: int, s: float) -> InterpolationReport:
    """‖∇^l f‖ <= ‖∇^{l+1} f‖^{1-θ} ‖f‖_{Ḣ^{-s}}^θ with θ = 1/(l+s+1).

    On the Fourier side this is Hölder's inequality, so the constant is 1.
    """
    if l not in (0, 1, 2):
        raise ValueError(f"l must be 0, 1 or 2, got {l}")
    if not 0 < s < 1.5:
        raise ValueError(f"s must lie in (0, 3/2), got {s}")
    scale = math.sqrt(f.grid.power_sum(f.spectral))
    if abs(f.mean()) > 1e-12 * max(scale, 1e-300):
        raise ValueError("interpolation check needs a mean-zero field")
    theta = 1.0 / (l + s + 1.0)
    lhs = grad_power_norm(f, l)
    if scale == 0.0:
        return InterpolationReport(0.0, 0.0, theta, True)
    rhs = grad_power_norm(f, l + 1) ** (1.0 - theta) * neg_sobolev_norm(f, s) ** theta
    return InterpolationReport(lhs, rhs, theta, lhs <= rhs * (1.0 + 1e-10))


@dataclass(frozen=True)
class RatioReport:
    """Ratio ``lhs / rhs`` of an inequality whose constant is not pinned."""

    lhs: float
    rhs: float
    ratio: float
    params: dict = field(default_factory=dict)

    @property
    def finite(self) -> bool:
        return math.isfinite(self.ratio)


def _ratio(lhs: float, rhs: float) -> float:
    if rhs == 0.0:
        return 0.0 if lhs == 0.0 else math.inf
    return lhs / rhs


def gn_theta(l, s, k, p, r, q, dim) -> float:
    """Interpolation exponent from the scaling identity
    l/d - 1/p = (s/d - 1/r)(1 - θ) + (k/d - 1/q)θ."""
    inv = lambda x: 0.0 if math.isinf(x) else 1.0 / x  # noqa: E731
    num = l / dim - inv(p) - s / dim + inv(r)
    den = (k - s) / dim - inv(q) + inv(r)
    if den == 0:
        raise ValueError("degenerate exponents: the scaling identity does not fix theta")
    return num / den


def check_gagliardo_nirenberg(
    f: Field, l: int, s: int, k: int, p: float, r: float, q: float, dim: int | None = None
) -> RatioReport:
    """Ratio ‖∇^l f‖_{L^p} / (‖∇^s f‖_{L^r}^{1-θ} ‖∇^k f‖_{L^q}^θ).

    ``dim`` sets the scaling dimension (defaults to the grid dimension).
    Exponent sets with θ outside [l/k, 1] are rejected.
    """
    d = f.grid.dim if dim is None else dim
    if not (0 <= l < k and 0 <= s < k):
        raise ValueError("need 0 <= l, s < k")
    for name, v in (("p", p), ("r", r), ("q", q)):
        if not v >= 1:
            raise ValueError(f"{name} must lie in [1, inf], got {v}")
    theta = gn_theta(l, s, k, p, r, q, d)
    if not (l / k - 1e-12 <= theta <= 1.0 + 1e-12):
        raise ValueError(f"incompatible exponents: theta={theta:.6g} outside [l/k, 1]")
    lhs = _grad_lp(f, l, p)
    rhs = _grad_lp(f, s, r) ** (1.0 - theta) * _grad_lp(f, k, q) ** theta
    return RatioReport(lhs, rhs, _ratio(lhs, rhs), {"theta": theta, "dim": d})


def check_composition(
    func: Callable[[np.ndarray], np.ndarray], sigma: Field, m: int, p: float = 2.0
) -> RatioReport:
    """Ratio ‖∇^m F(σ)‖_{L^p} / ‖∇^m σ‖_{L^p} for a smooth user-supplied ``F``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    composed = Field(sigma.grid, func(sigma.values))
    lhs = _grad_lp(composed, m, p)
    rhs = _grad_lp(sigma, m, p)
    return RatioReport(lhs, rhs, _ratio(lhs, rhs), {"m": m, "p": p})


def check_moser(f: Field, g: Field, alpha: tuple[int, ...], s: int) -> RatioReport:
    """Ratio ‖D^α(fg)‖ / (‖f‖_∞‖∇^s g‖ + ‖g‖_∞‖∇^s f‖) for a multi-index ``alpha``."""
    if sum(alpha) > s:
        raise ValueError("|alpha| must not exceed s")
    grid = f.grid
    coeffs = (f * g).spectral
    for a, times in enumerate(alpha):
        coeffs = coeffs * grid.ik[a] ** times
    lhs = math.sqrt(grid.power_sum(coeffs))
    rhs = lp_norm(f, math.inf) * grad_power_norm(g, s) + lp_norm(g, math.inf) * grad_power_norm(f, s)
    return RatioReport(lhs, rhs, _ratio(lhs, rhs), {"alpha": tuple(alpha), "s": s})


def check_hls(f: Field, s: float = 1.0, p: float = 1.2, q: float = 2.0) -> RatioReport:
    """Ratio ‖Λ^{-s} f‖_{L^q} / ‖f‖_{L^p} for mean-zero ``f``."""
    lhs = lp_norm(lambda_pow(f, -s), q)
    rhs = lp_norm(f, p)
    return RatioReport(lhs, rhs, _ratio(lhs, rhs), {"s": s, "p": p, "q": q})


def poincare_defect(f: FieldLike, p: float = 2.0) -> float:
    """‖f - ⨏f‖_{L^p} / ‖∇f‖_{L^p}; zero for constant fields.

    For vector fields each component is centred and the gradient norm is the
    Frobenius norm of the Jacobian.
    """
    if not 1 < p < math.inf:
        raise ValueError(f"p must lie in (1, inf), got {p}")
    comps = _components(f)
    g = comps[0].grid
    centred = np.zeros(g.shape)
    grad2 = np.zeros(g.shape)
    for c in comps:
        centred += (c.values - c.mean()) ** 2
        grad2 += _grad_tensor_abs(c, 1) ** 2
    num = _lp_of_array(np.sqrt(centred), p)
    den = _lp_of_array(np.sqrt(grad2), p)
    if den == 0.0:
        if num <= 1e-14 * max(1.0, max(abs(c.mean()) for c in comps)):
            return 0.0
        raise ValueError("non-constant field with vanishing gradient (pure Nyquist content)")
    return num / den


@dataclass
class NormSuite:
    """Norm snapshot of a state at time ``t``.

    ``hk[var][k]`` is the H^k norm for k = 0..4 of each tracked variable
    (``rho_dev`` = ρ - ρ̄, ``u``, ``grad_u``, ``grad_phi``, ``phi2m1`` = φ² - 1);
    ``neg[s][var]`` the Ḣ^{-s} norm after mean removal, ``means`` the removed means.
    """

    t: float
    l2: dict[str, float]
    hk: dict[str, list[float]]
    neg: dict[float, dict[str, float]]
    linf_phi: float
    phi2m1_l2: float
    rho_min: float
    rho_max: float
    means: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "t": self.t,
            "l2": self.l2,
            "hk": self.hk,
            "neg": {repr(float(s)): v for s, v in self.neg.items()},
            "linf_phi": self.linf_phi,
            "phi2m1_l2": self.phi2m1_l2,
            "rho_min": self.rho_min,
            "rho_max": self.rho_max,
            "means": self.means,
        }

    @classmethod
    def from_json(cls, d: dict) -> "NormSuite":
        return cls(
            t=d["t"],
            l2=dict(d["l2"]),
            hk={k: list(v) for k, v in d["hk"].items()},
            neg={float(s): dict(v) for s, v in d["neg"].items()},
            linf_phi=d["linf_phi"],
            phi2m1_l2=d["phi2m1_l2"],
            rho_min=d["rho_min"],
            rho_max=d["rho_max"],
            means=dict(d.get("means", {})),
        )

    # brackets used by the a-priori and decay checks
    def apriori_bracket(self) -> float:
        """‖ρ-ρ̄‖²_{H³} + ‖u‖²_{H³} + ‖∇φ‖²_{H²} + ‖φ²-1‖²."""
        return (
            self.hk["rho_dev"][3] ** 2
            + self.hk["u"][3] ** 2
            + self.hk["grad_phi"][2] ** 2
            + self.phi2m1_l2**2
        )

    def low_bracket(self) -> float:
        """‖u‖² + ‖φ²-1‖ (the slowly decaying combination)."""
        return self.l2["u"] ** 2 + self.phi2m1_l2

    def high_bracket(self) -> float:
        """‖ρ-ρ̄‖²_{H³} + ‖∇u‖²_{H²} + ‖∇φ‖²_{H²}."""
        return self.hk["rho_dev"][3] ** 2 + self.hk["grad_u"][2] ** 2 + self.hk["grad_phi"][2] ** 2

    def smallness_bracket(self) -> float:
        """‖ρ-ρ̄‖_{H³} + ‖u‖_{H³} + ‖∇φ‖_{H²} + ‖φ²-1‖ (unsquared)."""
        return self.hk["rho_dev"][3] + self.hk["u"][3] + self.hk["grad_phi"][2] + self.phi2m1_l2

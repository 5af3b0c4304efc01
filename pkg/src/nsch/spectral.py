"""
Fourier pseudo-spectral machinery on the unit torus (0, 1)^d.

Conventions
-----------
* Grid points ``x_j = j / n`` along each axis, ``d in {2, 3}``.
* Real-to-complex transforms (``rfftn``) with forward normalization, so the
  zero mode equals the spatial mean:  f̂(0) = ⨏ f.
* A mode with integer lattice vector ``k`` has wavenumber ``2πk`` and
  magnitude ``K = 2π|k|``.
* Parseval:  ‖f‖²_{L²} = Σ_m w_m |f̂_m|²  with ``w_m = 2`` on the half-plane
  modes that stand in for their conjugate twin and ``w_m = 1`` otherwise.
* Odd-order derivatives drop the Nyquist mode of the differentiated axis,
  which keeps every result real.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Iterator, Sequence

import numpy as np
import scipy.fft as sfft

from .errors import NonFiniteError

__all__ = [
    "Grid",
    "Field",
    "VectorField",
    "make_grid",
    "transform_forward",
    "transform_inverse",
    "derivative",
    "gradient",
    "divergence",
    "laplacian",
    "bilaplacian",
    "lambda_pow",
    "dealias",
    "random_field",
]


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with ``n`` points per axis on the unit torus.

    Wavenumber arrays follow the ``rfftn`` layout: every axis but the last uses
    the full FFT ordering, the last axis holds ``0 .. n/2`` only.
    """

    dim: int
    n: int
    length: float = 1.0

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if self.n < 8 or self.n % 2:
            raise ValueError(f"n must be even and >= 8, got {self.n}")
        if self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two, got {self.n}")
        if self.length != 1.0:
            raise ValueError("only the unit torus (length 1.0) is supported")

    # -- shapes -------------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def spectral_shape(self) -> tuple[int, ...]:
        return (self.n,) * (self.dim - 1) + (self.n // 2 + 1,)

    @property
    def h(self) -> float:
        return self.length / self.n

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Broadcast-ready coordinate arrays ``x_1 .. x_d``."""
        x = np.arange(self.n) * self.h
        return tuple(np.meshgrid(*([x] * self.dim), indexing="ij", sparse=True))

    # -- wavenumber lattice -------------------------------------------------
    @cached_property
    def k_int(self) -> tuple[np.ndarray, ...]:
        """Integer wavenumbers per axis, broadcastable to ``spectral_shape``."""
        full = np.fft.fftfreq(self.n, 1.0 / self.n).round().astype(np.int64)
        half = np.arange(self.n // 2 + 1, dtype=np.int64)
        axes = [full] * (self.dim - 1) + [half]
        return tuple(np.meshgrid(*axes, indexing="ij", sparse=True))

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Scaled wavenumbers ``2π k_i`` per axis."""
        return tuple(2.0 * np.pi * k.astype(float) for k in self.k_int)

    @cached_property
    def k2(self) -> np.ndarray:
        """Squared magnitude ``(2π|k|)²`` on the spectral grid."""
        out = np.zeros(self.spectral_shape)
        for kk in self.wavenumbers:
            out = out + kk**2
        return out

    @cached_property
    def kmag(self) -> np.ndarray:
        return np.sqrt(self.k2)

    @cached_property
    def ik(self) -> tuple[np.ndarray, ...]:
        """First-derivative multipliers ``i·2πk_i`` with the axis Nyquist mode removed."""
        out = []
        for kk, ki in zip(self.wavenumbers, self.k_int):
            out.append(np.where(np.abs(ki) == self.n // 2, 0.0, kk) * 1j)
        return tuple(out)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3 rule: keep a mode only if every ``|k_i| <= n/3``."""
        cut = self.n / 3.0
        mask = np.ones(self.spectral_shape, dtype=bool)
        for ki in self.k_int:
            mask = mask & (np.abs(ki) <= cut)
        return mask

    @cached_property
    def kmax_dealiased(self) -> float:
        """Largest wavenumber magnitude retained by the dealiasing mask."""
        return float(self.kmag[self.dealias_mask].max())

    @cached_property
    def parseval_weights(self) -> np.ndarray:
        kl = self.k_int[-1]
        interior = (kl > 0) & (kl < self.n // 2)
        w = np.where(interior, 2.0, 1.0)
        return np.broadcast_to(w, self.spectral_shape)

    # -- raw transforms (arrays in, arrays out) -----------------------------
    def fft(self, values: np.ndarray) -> np.ndarray:
        return sfft.rfftn(values, s=self.shape, axes=self._axes, norm="forward")

    def ifft(self, coeffs: np.ndarray) -> np.ndarray:
        return sfft.irfftn(coeffs, s=self.shape, axes=self._axes, norm="forward")

    @property
    def _axes(self) -> tuple[int, ...]:
        return tuple(range(-self.dim, 0))

    def power_sum(self, coeffs: np.ndarray, weight: np.ndarray | float = 1.0) -> float:
        """Weighted Parseval sum ``Σ w_m · weight_m · |ĉ_m|²``."""
        return float(np.sum(self.parseval_weights * weight * (coeffs.real**2 + coeffs.imag**2)))


@lru_cache(maxsize=None)
def make_grid(dim: int, n: int) -> Grid:
    """Shared grid instance, so the cached wavenumber arrays are built once."""
    return Grid(dim, n)


class Field:
    """Real periodic samples on a :class:`Grid` with a lazily computed spectral twin.

    Construct from ``values`` (physical samples) or ``spectral`` (rfftn
    coefficients), never both.  Both arrays are read-only once materialized.
    """

    __slots__ = ("grid", "_values", "_spectral")

    def __init__(self, grid: Grid, values=None, *, spectral=None):
        if (values is None) == (spectral is None):
            raise TypeError("give exactly one of values= or spectral=")
        self.grid = grid
        self._values = None
        self._spectral = None
        if values is not None:
            arr = np.array(values, dtype=float)
            if arr.shape != grid.shape:
                raise ValueError(f"values shape {arr.shape} != grid shape {grid.shape}")
            if not np.all(np.isfinite(arr)):
                raise NonFiniteError("field values contain NaN or inf")
            arr.setflags(write=False)
            self._values = arr
        else:
            arr = np.array(spectral, dtype=complex)
            if arr.shape != grid.spectral_shape:
                raise ValueError(
                    f"spectral shape {arr.shape} != expected {grid.spectral_shape}"
                )
            if not np.all(np.isfinite(arr)):
                raise NonFiniteError("spectral coefficients contain NaN or inf")
            arr.setflags(write=False)
            self._spectral = arr

    @property
    def values(self) -> np.ndarray:
        if self._values is None:
            v = self.grid.ifft(self._spectral)
            v.setflags(write=False)
            self._values = v
        return self._values

    @property
    def spectral(self) -> np.ndarray:
        if self._spectral is None:
            s = self.grid.fft(self._values)
            s.setflags(write=False)
            self._spectral = s
        return self._spectral

    def mean(self) -> float:
        return float(self.spectral.flat[0].real)

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "Field":
        return cls(grid, np.full(grid.shape, float(c)))

    @classmethod
    def from_function(cls, grid: Grid, func) -> "Field":
        return cls(grid, np.broadcast_to(func(*grid.coords), grid.shape))

    # pointwise arithmetic (no dealiasing; see spectral.dealias)
    def _other(self, other):
        if isinstance(other, Field):
            if other.grid != self.grid:
                raise ValueError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return Field(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Field(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return Field(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return Field(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return Field(self.grid, self.values / self._other(other))

    def __neg__(self):
        return Field(self.grid, -self.values)

    def __pow__(self, p):
        return Field(self.grid, self.values**p)

    def __repr__(self):
        return f"Field(dim={self.grid.dim}, n={self.grid.n}, mean={self.mean():.6g})"


class VectorField:
    """``dim`` scalar :class:`Field` components on one shared grid."""

    __slots__ = ("components",)

    def __init__(self, components: Sequence[Field]):
        comps = tuple(components)
        if not comps:
            raise ValueError("a vector field needs at least one component")
        grid = comps[0].grid
        if any(c.grid != grid for c in comps):
            raise ValueError("all components must share one grid")
        if len(comps) != grid.dim:
            raise ValueError(f"expected {grid.dim} components, got {len(comps)}")
        self.components = comps

    @property
    def grid(self) -> Grid:
        return self.components[0].grid

    @property
    def values(self) -> np.ndarray:
        return np.stack([c.values for c in self.components])

    @classmethod
    def from_values(cls, grid: Grid, values) -> "VectorField":
        return cls([Field(grid, v) for v in values])

    def __iter__(self) -> Iterator[Field]:
        return iter(self.components)

    def __len__(self):
        return len(self.components)

    def __getitem__(self, i) -> Field:
        return self.components[i]

    def __repr__(self):
        return f"VectorField(dim={self.grid.dim}, n={self.grid.n})"


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------


def transform_forward(f: Field) -> np.ndarray:
    """Spectral coefficients of ``f`` (zero mode = spatial mean)."""
    return f.spectral


def transform_inverse(grid: Grid, coeffs: np.ndarray) -> Field:
    return Field(grid, grid.ifft(np.asarray(coeffs, dtype=complex)))


def derivative(f: Field, axis: int, order: int = 1) -> Field:
    """Spectral derivative ``∂^order / ∂x_axis^order`` (axes counted from 0)."""
    g = f.grid
    if not 0 <= axis < g.dim:
        raise ValueError(f"axis {axis} out of range for a {g.dim}-d grid")
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    if order % 2:
        mult = g.ik[axis] ** order
    else:
        mult = (1j * g.wavenumbers[axis]) ** order
    return Field(g, spectral=f.spectral * mult)


def gradient(f: Field) -> VectorField:
    g = f.grid
    return VectorField([Field(g, spectral=f.spectral * g.ik[a]) for a in range(g.dim)])


def divergence(v: VectorField) -> Field:
    g = v.grid
    acc = np.zeros(g.spectral_shape, dtype=complex)
    for a, comp in enumerate(v):
        acc += g.ik[a] * comp.spectral
    return Field(g, spectral=acc)


def laplacian(f: Field) -> Field:
    return Field(f.grid, spectral=-f.grid.k2 * f.spectral)


def bilaplacian(f: Field) -> Field:
    return Field(f.grid, spectral=f.grid.k2**2 * f.spectral)


def lambda_pow(f: Field, s: float) -> Field:
    """Fractional multiplier ``(2π|k|)^s`` on the nonzero modes.

    The zero mode passes through for ``s >= 0``; negative powers require a
    mean-zero field and return a mean-zero result.
    """
    g = f.grid
    coeffs = f.spectral
    out = np.empty_like(coeffs)
    nz = g.k2 > 0
    out[nz] = coeffs[nz] * g.kmag[nz] ** s
    if s < 0:
        scale = np.sqrt(g.power_sum(coeffs))
        if abs(coeffs.flat[0]) > 1e-12 * scale:
            raise ValueError(
                f"negative power s={s} needs a mean-zero field (mean={coeffs.flat[0].real:.3e})"
            )
        out.flat[0] = 0.0
    else:
        out.flat[0] = coeffs.flat[0]
    return Field(g, spectral=out)


def dealias(f: Field) -> Field:
    return Field(f.grid, spectral=f.spectral * f.grid.dealias_mask)


def random_field(
    grid: Grid,
    rng: np.random.Generator,
    *,
    k_max: float | None = None,
    k_min: float = 0.0,
    mean_zero: bool = False,
    slope: float = 0.0,
) -> Field:
    """Band-limited Gaussian random field.

    Modes with ``k_min <= |k| <= k_max`` (Euclidean norm of the integer
    vector) and inside the dealiasing mask are kept; their amplitudes are
    scaled by ``|k|^-slope``.  ``k_max`` defaults to the dealiasing cutoff.
    """
    white = grid.fft(rng.standard_normal(grid.shape))
    kabs = grid.kmag / (2.0 * np.pi)
    keep = grid.dealias_mask & (kabs >= k_min)
    if k_max is not None:
        keep &= kabs <= k_max + 1e-12
    amp = np.where(kabs > 0, kabs, 1.0) ** (-slope)
    coeffs = np.where(keep, white * amp, 0.0)
    if mean_zero:
        coeffs.flat[0] = 0.0
    return Field(grid, grid.ifft(coeffs))

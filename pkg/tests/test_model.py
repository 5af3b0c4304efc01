import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from nsch.errors import BlowUpError
from nsch.model import (
    ModelParams,
    State,
    capillary_force,
    chemical_potential,
    rhs,
    thermo_G,
    thermo_G_bounds,
    thermo_G_prime,
    thermo_G_scalar,
    viscous_stress_div,
)
from nsch.spectral import Field, VectorField, divergence, gradient, laplacian, make_grid, random_field

TWO_PI = 2 * np.pi
PARAMS = ModelParams()


def _random_state(g, rng, amp=0.05, seed_phi=None):
    rho = 1.0 + amp * random_field(g, rng, k_max=g.n / 4).values
    u = [amp * random_field(g, rng, k_max=g.n / 4).values for _ in range(g.dim)]
    phi = 1.0 + amp * random_field(g, rng, k_max=g.n / 4).values
    return State.from_primitive(
        0.0, Field(g, rho), VectorField([Field(g, x) for x in u]), Field(g, phi)
    )


# -- parameters ---------------------------------------------------------------

@pytest.mark.parametrize(
    "kw", [{"rho_bar": 0}, {"gamma": 1.0}, {"p_coeff": -1}, {"nu0": 0}, {"nu1": -0.1}, {"lam0": -1}, {"eps": 0}]
)
def test_params_validation(kw):
    with pytest.raises(ValueError):
        ModelParams(**kw)


@settings(max_examples=50, deadline=None)
@given(rho=st.floats(1e-6, 1e3), phi=st.floats(-5, 5))
def test_constitutive_sign_conditions(rho, phi):
    assert PARAMS.dpressure(rho) > 0
    assert PARAMS.nu(phi) >= PARAMS.nu0
    assert PARAMS.lam(phi) >= 0


# -- chemical potential -------------------------------------------------------

@pytest.mark.parametrize("phi0", [1.0, -1.0, 0.0])
def test_mu_vanishes_on_critical_points(grid, phi0):
    mu = chemical_potential(State.uniform(grid, 1.0, phi0), PARAMS)
    assert np.max(np.abs(mu.values)) < 1e-14


def test_mu_linearization():
    g = make_grid(2, 32)
    rho_bar = 1.3
    params = ModelParams(rho_bar=rho_bar)
    for delta in (1e-2, 1e-3):
        cosx = Field.from_function(g, lambda x, y: np.cos(TWO_PI * x))
        st_ = State.from_primitive(
            0.0, Field.constant(g, rho_bar), VectorField([Field.constant(g, 0.0)] * 2), cosx * delta
        )
        mu = chemical_potential(st_, params).values
        linear = (4 * np.pi**2 / rho_bar - 1) * delta * cosx.values
        assert np.max(np.abs(mu - linear)) <= 1.01 * delta**3


def test_nonpositive_density_rejected(grid2):
    zero = VectorField([Field.constant(grid2, 0.0)] * 2)
    with pytest.raises(ValueError, match="positive"):
        State(0.0, Field.constant(grid2, -1.0), zero, Field.constant(grid2, 0.0))


# -- capillary force ----------------------------------------------------------

def test_capillary_force_constant(grid):
    f = capillary_force(Field.constant(grid, 0.7))
    assert np.max(np.abs(f.values)) == 0.0


def test_capillary_force_of_sine(grid):
    phi = Field.from_function(grid, lambda *x: np.sin(TWO_PI * x[0]))
    f = capillary_force(phi).values
    x = grid.coords[0]
    expect = -4 * np.pi**2 * np.sin(TWO_PI * x) * TWO_PI * np.cos(TWO_PI * x)
    assert np.max(np.abs(f[0] - expect)) < 1e-8
    assert np.max(np.abs(f[1:])) < 1e-12


def test_capillary_force_matches_stress_divergence(rng):
    g = make_grid(2, 64)
    for _ in range(10):
        phi = random_field(g, rng, k_max=g.n / 6)
        gp = gradient(phi)
        half_sq = 0.5 * np.sum(gp.values**2, axis=0)
        direct = []
        for i in range(2):
            row = [Field(g, gp[i].values * gp[j].values - (half_sq if i == j else 0.0)) for j in range(2)]
            direct.append(divergence(VectorField(row)).values)
        force = capillary_force(phi).values
        scale = np.max(np.abs(force))
        assert np.max(np.abs(np.array(direct) - force)) <= 1e-8 * scale


# -- viscous stress -----------------------------------------------------------

def test_viscous_of_constant_velocity(grid, rng):
    u = VectorField([Field.constant(grid, 0.3)] * grid.dim)
    out = viscous_stress_div(u, random_field(grid, rng), PARAMS)
    assert np.max(np.abs(out.values)) < 1e-14


def test_viscous_constant_coefficient_formula(grid, rng):
    params = ModelParams(nu1=0.0, lam0=0.0)
    u = VectorField([random_field(grid, rng, k_max=grid.n / 4) for _ in range(grid.dim)])
    out = viscous_stress_div(u, Field.constant(grid, 1.0), params).values
    grad_div = gradient(divergence(u)).values
    lap = np.array([laplacian(c).values for c in u])
    expect = params.nu0 * (lap + grad_div)
    assert np.max(np.abs(out - expect)) <= 1e-8 * np.max(np.abs(expect))


def test_viscous_sinusoidal_rotation(grid2):
    g = grid2
    u = VectorField([
        Field.from_function(g, lambda x, y: -np.sin(TWO_PI * y)),
        Field.from_function(g, lambda x, y: np.sin(TWO_PI * x)),
    ])
    # divergence-free, so the operator reduces to ν(1)Δu = -4π²(ν₀+ν₁)u
    out = viscous_stress_div(u, Field.constant(g, 1.0), PARAMS).values
    expect = -4 * np.pi**2 * (PARAMS.nu0 + PARAMS.nu1) * u.values
    assert np.max(np.abs(out - expect)) < 1e-8


# -- full right-hand side -----------------------------------------------------

@pytest.mark.parametrize("phi0", [1.0, -1.0, 0.0])
def test_rhs_vanishes_at_equilibria(grid, phi0):
    t = rhs(State.uniform(grid, PARAMS.rho_bar, phi0), PARAMS)
    for part in (t.rho.values, t.mom.values, t.c.values):
        assert np.max(np.abs(part)) < 1e-13


def test_rhs_zero_modes(grid, rng):
    for _ in range(5):
        t = rhs(_random_state(grid, rng), PARAMS)
        assert abs(t.rho.mean()) < 1e-15
        assert abs(t.c.mean()) < 1e-15
        scale = np.max(np.abs(t.mom.values))
        for m in t.mom:
            assert abs(m.mean()) <= 1e-10 * scale


def test_rhs_acoustic_linearization():
    g = make_grid(2, 32)
    cosx = Field.from_function(g, lambda x, y: np.cos(TWO_PI * x))
    for delta in (1e-3, 1e-4):
        rho = 1.0 + delta * cosx
        st_ = State(0.0, rho, VectorField([Field.constant(g, 0.0)] * 2), rho)
        dm = rhs(st_, PARAMS).mom.values
        expect = -PARAMS.dpressure(1.0) * delta * gradient(cosx).values
        assert np.max(np.abs(dm - expect)) <= 10 * delta**2


def test_rhs_translation_equivariant(grid2, rng):
    st_ = _random_state(grid2, rng)
    shift = lambda a: np.roll(a, 1, axis=-1)  # noqa: E731
    moved = st_.with_arrays(0.0, shift(st_.rho.values), [shift(m.values) for m in st_.mom], shift(st_.c.values))
    a, b = rhs(st_, PARAMS), rhs(moved, PARAMS)
    for pa, pb in ((a.rho, b.rho), (a.c, b.c)):
        assert np.allclose(shift(pa.values), pb.values, atol=1e-11)
    assert np.allclose(shift(a.mom.values), b.mom.values, atol=1e-11)
    # and deterministic
    again = rhs(st_, PARAMS)
    assert np.array_equal(again.c.values, a.c.values)


def test_rhs_vacuum_signal(grid2):
    vals = np.ones(grid2.shape)
    vals[3, 4] = 1e-3
    st_ = State(0.0, Field(grid2, vals), VectorField([Field.constant(grid2, 0.0)] * 2), Field(grid2, vals))
    with pytest.raises(BlowUpError) as exc:
        rhs(st_, PARAMS)
    assert exc.value.reason == "vacuum"


# -- thermodynamic potential --------------------------------------------------

def _g_quadrature(rho, params):
    p = params.pressure
    val, _ = quad(lambda z: (p(z) - p(params.rho_bar)) / z**2, params.rho_bar, rho, epsabs=0, epsrel=1e-13, limit=200)
    return rho * val


@pytest.mark.parametrize("params", [ModelParams(), ModelParams(rho_bar=2.0, gamma=1.67, p_coeff=0.3)])
def test_g_closed_form_vs_quadrature(params):
    for rho in np.linspace(params.rho_bar / 2, 2 * params.rho_bar, 50):
        oracle = _g_quadrature(rho, params)
        got = thermo_G_scalar(rho, params)
        if oracle == 0:
            assert abs(got) < 1e-14
        else:
            assert abs(got - oracle) <= 1e-8 * abs(oracle)


def test_g_vanishes_to_second_order_at_reference():
    for params in (ModelParams(), ModelParams(rho_bar=0.7, gamma=2.0)):
        assert abs(thermo_G_scalar(params.rho_bar, params)) < 1e-10
        assert abs(thermo_G_prime(params.rho_bar, params)) < 1e-10


@pytest.mark.parametrize("width", [0.1, 0.5])
def test_g_quadratic_bounds(width):
    params = ModelParams()
    lo, hi = params.rho_bar * (1 - width), params.rho_bar * (1 + width)
    c_lo, c_hi = thermo_G_bounds(params, lo, hi)
    assert 0 < c_lo <= c_hi
    for rho in np.linspace(lo, hi, 41):
        if rho == params.rho_bar:
            continue
        g = thermo_G_scalar(rho, params)
        d2 = (rho - params.rho_bar) ** 2
        assert g > 0
        assert c_lo * d2 * (1 - 1e-12) <= g <= c_hi * d2 * (1 + 1e-12)


def test_g_field_and_errors(grid2, rng):
    rho = 1.0 + 0.2 * random_field(grid2, rng, k_max=4)
    vals = thermo_G(rho, PARAMS).values
    assert np.all(vals >= 0)
    assert vals.flat[7] == pytest.approx(thermo_G_scalar(rho.values.flat[7], PARAMS), rel=1e-14)
    with pytest.raises(ValueError):
        thermo_G_scalar(0.0, PARAMS)
    with pytest.raises(ValueError):
        thermo_G(Field.constant(grid2, -1.0), PARAMS)
    with pytest.raises(ValueError):
        thermo_G_bounds(PARAMS, 2.0, 1.0)

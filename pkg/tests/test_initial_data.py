import numpy as np
import pytest

from nsch.diagnostics import norm_suite
from nsch.initial_data import PerturbationSpec, make_initial, make_large_data, stripe_profile
from nsch.model import ModelParams
from nsch.norms import sobolev_norm
from nsch.spectral import make_grid

PARAMS = ModelParams()


@pytest.mark.parametrize(
    "kw",
    [
        {"delta": -0.1},
        {"delta": float("nan")},
        {"k_min": 0},
        {"k_min": 5, "k_max": 4},
        {"phase_sign": 0},
        {"neg_s_target": 1.5},
        {"stripe_width": 0.0},
    ],
)
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        PerturbationSpec(**kw)


def test_band_above_cutoff_rejected():
    with pytest.raises(ValueError):
        make_initial(PerturbationSpec(k_max=6), make_grid(2, 16))


@pytest.mark.parametrize("sign", [1, -1])
def test_zero_amplitude_is_equilibrium(grid, sign):
    s = make_initial(PerturbationSpec(delta=0.0, phase_sign=sign), grid, PARAMS)
    assert np.all(s.rho.values == PARAMS.rho_bar)
    assert np.max(np.abs(s.mom.values)) == 0.0
    assert np.max(np.abs(s.phi.values - sign)) < 1e-15


@pytest.mark.parametrize("delta", [1e-3, 1e-2, 5e-2])
@pytest.mark.parametrize("neg_s", [None, 1.0])
def test_bracket_equals_delta(grid, delta, neg_s):
    s = make_initial(PerturbationSpec(delta=delta, neg_s_target=neg_s, seed=3), grid, PARAMS)
    assert norm_suite(s, PARAMS, ()).smallness_bracket() == pytest.approx(delta, rel=1e-8)


def test_deterministic_and_seed_dependent(grid2):
    a = make_initial(PerturbationSpec(seed=7), grid2, PARAMS)
    b = make_initial(PerturbationSpec(seed=7), grid2, PARAMS)
    c = make_initial(PerturbationSpec(seed=8), grid2, PARAMS)
    assert np.array_equal(a.rho.values, b.rho.values) and np.array_equal(a.c.values, b.c.values)
    assert not np.array_equal(a.rho.values, c.rho.values)


def test_band_limited_within_dealias_ball(grid):
    s = make_initial(PerturbationSpec(delta=0.02, k_min=2, k_max=4), grid, PARAMS)
    outside = ~grid.dealias_mask
    for f in (s.rho, *s.mom, s.c):
        assert np.max(np.abs(f.spectral[outside]), initial=0.0) < 1e-15
    kabs = grid.kmag / (2 * np.pi)
    live = np.abs(s.rho.spectral) > 1e-15
    live.flat[0] = False
    assert np.all((kabs[live] >= 2) & (kabs[live] <= 4 + 1e-12))


def test_mean_momentum_and_phase_mass(grid):
    delta = 0.02
    s = make_initial(PerturbationSpec(delta=delta), grid, PARAMS)
    for m in s.mom:
        assert abs(m.mean()) < 1e-16
    assert s.c.mean() == pytest.approx(PARAMS.rho_bar, abs=1e-15)
    # the mean velocity is then second order in the amplitude
    for u in s.u:
        assert abs(u.mean()) <= delta**2


def test_low_mode_weighting_raises_negative_norm(grid2):
    flat = make_initial(PerturbationSpec(delta=0.01, seed=2), grid2, PARAMS)
    tilted = make_initial(PerturbationSpec(delta=0.01, seed=2, neg_s_target=1.0), grid2, PARAMS)
    e_flat = norm_suite(flat, PARAMS, (1.0,)).neg[1.0]["rho_dev"]
    e_tilt = norm_suite(tilted, PARAMS, (1.0,)).neg[1.0]["rho_dev"]
    assert e_tilt > e_flat


def test_too_large_amplitude_rejected(grid2):
    with pytest.raises(ValueError, match="too large|non-positive"):
        make_initial(PerturbationSpec(delta=2e4), grid2, PARAMS)


def test_stripe_layer_scaling():
    g = make_grid(2, 256)
    norms = []
    for width in (0.02, 0.01):
        phi = stripe_profile(g, width)
        norms.append(np.sqrt(np.mean((phi.values**2 - 1) ** 2)))
        # away from the two interfaces the profile is a pure phase
        x = g.coords[0].ravel()
        far = (np.abs(x - 0.25) < 0.1) | (np.abs(x - 0.75) < 0.1)
        assert np.max(np.abs(phi.values[far, :] ** 2 - 1)) < 0.01
        assert np.max(np.abs(phi.values[0])) < 1e-12
    # ‖φ² - 1‖ ~ √width for a tanh layer
    assert norms[0] / norms[1] == pytest.approx(np.sqrt(2), rel=0.05)


def test_stripe_initial_state(grid2):
    spec = PerturbationSpec(delta=0.0, phase_sign="stripe", stripe_width=0.1)
    s = make_initial(spec, grid2, PARAMS)
    assert np.allclose(s.phi.values, stripe_profile(grid2, 0.1).values, atol=1e-14)
    s = make_initial(PerturbationSpec(delta=0.01, phase_sign="stripe"), grid2, PARAMS)
    assert s.rho.values.min() > PARAMS.rho_bar / 2


def test_large_data_is_valid_and_linear():
    g = make_grid(2, 16)
    s = make_large_data(PerturbationSpec(delta=0.5, k_max=4), g, PARAMS)
    assert s.rho.values.min() > 0
    assert np.max(np.abs(s.rho.values - PARAMS.rho_bar)) == pytest.approx(0.5 * PARAMS.rho_bar)
    dev = [
        sobolev_norm(make_large_data(PerturbationSpec(delta=d, k_max=4), g, PARAMS).rho - PARAMS.rho_bar, 3)
        for d in (0.1, 0.2, 0.4)
    ]
    assert dev[1] / dev[0] == pytest.approx(2.0, rel=1e-12)
    assert dev[2] / dev[1] == pytest.approx(2.0, rel=1e-12)
    brackets = [
        norm_suite(make_large_data(PerturbationSpec(delta=d, k_max=4), g, PARAMS), PARAMS, ()).smallness_bracket()
        for d in (0.001, 0.002)
    ]
    assert brackets[1] / brackets[0] == pytest.approx(2.0, rel=0.01)
    with pytest.raises(ValueError):
        make_large_data(PerturbationSpec(delta=1.0), g, PARAMS)

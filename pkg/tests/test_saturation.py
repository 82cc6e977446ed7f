import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cqednet.linear_response import DriveSpec, steady_state
from cqednet.oracles import bracket_quadrature
from cqednet.rates import AtomEnsembleParams, V_SCALING, apply_v_scaling, preset
from cqednet.saturation import (
    ConvergenceError,
    SaturationParams,
    bracket_term,
    default_grid,
    linear_flux_c,
    normalized_flux_c,
    power_to_yb,
    residual,
    saturation_curve,
    solve_saturated_spectrum,
    solve_saturated_state,
    transmission_ratio,
    yb_to_power,
)

Y_B_AT_HALF_NW = 2.349020376301424  # fig3 rates with v x 1.055, regression baseline


@pytest.fixture(scope="module")
def fig3():
    _, rates, atoms = preset("fig3")
    rates = apply_v_scaling(rates, V_SCALING["fig3"])
    return rates, SaturationParams.from_atoms(rates, atoms, A_geom=0.17)


def normalized_linear(rates, sat, atoms):
    """Linear amplitudes mapped into the normalized units of the saturable model at unit y_b."""
    E = rates.kappa_b * (sat.n_sat_1 * sat.n_sat_2) ** 0.25
    s = steady_state(rates, atoms, DriveSpec("C", E, 0.0))
    return np.array([s.a1 / math.sqrt(sat.n_sat_1), s.a2 / math.sqrt(sat.n_sat_2),
                     s.b / (sat.n_sat_1 * sat.n_sat_2) ** 0.25])


def test_bracket_small_x_limit():
    assert complex(bracket_term(0.0, 0.0, 10.0)) == pytest.approx(10.0)
    assert complex(bracket_term(1e-9, 0.0, 10.0)) == pytest.approx(10.0, rel=1e-12)
    assert complex(bracket_term(0.0, 2.0, 1.0)) == pytest.approx((1 - 2j) / 5)


def test_bracket_value():
    expected = (2 / 1.17) * 0.25 * (1 - 1 / math.sqrt(1.68 * 5))
    assert complex(bracket_term(2.0, 0.0, 1.0, 0.17)).real == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(0.27990, abs=1e-5)


def test_bracket_saturates():
    assert abs(bracket_term(1e6, 0.0, 1.0)) < 1e-6


@settings(max_examples=300, deadline=None)
@given(x=st.floats(0, 10), d=st.floats(-5, 5), C=st.floats(0.01, 20))
def test_bracket_matches_quadrature(x, d, C):
    ref = bracket_quadrature(x, d, C, 0.17)
    assert abs(complex(bracket_term(x, d, C, 0.17)) - ref) <= 1e-8 * abs(ref)


def test_bracket_bounded():
    xs = np.linspace(0, 100, 401)
    for d in (0.0, 1.0, 4.0):
        vals = np.abs(bracket_term(xs, d, 1.0, 0.17)) * xs ** 2
        # |X|^2 times the bracket is at most 2C sqrt(1 + d^2) / (1 + A)
        bound = 2.0 * math.sqrt(1 + d ** 2) / (1 + 0.17) * (1 + 1e-12)
        assert np.all(np.isfinite(vals)) and np.all(vals <= bound)


def test_weak_drive_matches_linear(fig3):
    rates, sat = fig3
    y = 1e-6
    state = solve_saturated_state(y, rates, sat)
    expected = y * normalized_linear(rates, sat, sat.linear_couplings(rates))
    got = np.array([state.X1, state.X2, state.Xb])
    np.testing.assert_allclose(got, expected, rtol=1e-4)
    assert state.converged and state.residual < 1e-10


def test_strong_drive_matches_empty(fig3):
    rates, sat = fig3
    y = 1e3
    state = solve_saturated_state(y, rates, sat)
    expected = y * normalized_linear(rates, sat, AtomEnsembleParams())
    got = np.array([state.X1, state.X2, state.Xb])
    assert np.max(np.abs(got - expected) / np.abs(expected)) < 0.01


def test_zero_cooperativity_is_linear(fig3):
    rates, sat = fig3
    empty = SaturationParams(0.0, 0.0, sat.n_sat_1, sat.n_sat_2)
    for y in (0.1, 50.0, 5000.0):
        s = solve_saturated_state(y, rates, empty)
        expected = y * normalized_linear(rates, empty, AtomEnsembleParams())
        np.testing.assert_allclose([s.X1, s.X2, s.Xb], expected, rtol=1e-10)


def test_residual_below_tolerance(fig3):
    rates, sat = fig3
    states = solve_saturated_spectrum(10.0, rates, sat, np.linspace(-20, 20, 41))
    for s in states:
        assert s.converged
        assert np.max(np.abs(residual(s, rates, sat))) < 1e-10


def test_monotone_along_branch(fig3):
    rates, sat = fig3
    ys = np.geomspace(0.1, 200, 25)
    amps = np.array([[abs(s.X1), abs(s.X2), abs(s.Xb)]
                     for s in (solve_saturated_state(y, rates, sat) for y in ys)])
    assert np.all(np.diff(amps, axis=0) >= -1e-12)


def test_continuation_consistency(fig3):
    rates, sat = fig3
    deltas = np.linspace(-15, 15, 31)
    direct = solve_saturated_spectrum(8.0, rates, sat, deltas)
    ref = None
    for y in (1.0, 3.0, 8.0):
        ref = solve_saturated_spectrum(y, rates, sat, deltas)
    for a, b in zip(direct, ref):
        if not (a.bistable or b.bistable):
            assert abs(a.Xb - b.Xb) < 1e-8 * max(abs(b.Xb), 1e-300)


def test_power_conversion(fig3):
    rates, sat = fig3
    assert power_to_yb(0.0, rates, sat) == 0.0
    assert power_to_yb(0.5e-9, rates, sat) == pytest.approx(Y_B_AT_HALF_NW, rel=1e-12)
    assert power_to_yb(1e-9, rates, sat) == pytest.approx(math.sqrt(2) * power_to_yb(0.5e-9, rates, sat), rel=1e-14)
    assert yb_to_power(power_to_yb(3e-9, rates, sat), rates, sat) == pytest.approx(3e-9, rel=1e-14)
    with pytest.raises(ValueError):
        power_to_yb(-1.0, rates, sat)


def test_cooperativities_from_preset(fig3):
    rates, sat = fig3
    assert sat.C1 == pytest.approx(4.81, abs=0.01)
    assert sat.C2 == pytest.approx(10.91, abs=0.01)
    g = sat.linear_couplings(rates)
    assert g.g_eff_1 ** 2 == pytest.approx(sat.C1 * rates.kappa_1 * rates.gamma_perp, rel=1e-12)


def test_params_validation():
    with pytest.raises(ValueError):
        SaturationParams(-1.0, 1.0, 40, 20)
    with pytest.raises(ValueError):
        SaturationParams(1.0, 1.0, 40, 20, A_geom=1.0)
    with pytest.raises(ValueError):
        SaturationParams(1.0, 1.0, 0.0, 20)
    _, rates, atoms = preset("fig2")
    with pytest.raises(ValueError):
        SaturationParams.from_atoms(rates, atoms)


def test_saturation_curve_shape(fig3):
    rates, sat = fig3
    powers = np.geomspace(0.5e-9, 27e-9, 8)
    points = saturation_curve(powers, rates, sat)
    T = np.array([p.norm_transmission for p in points])
    assert np.all(np.diff(T) < 0)
    assert all(p.converged for p in points)


def test_weak_power_matches_linear_ratio(fig3):
    rates, sat = fig3
    deltas = default_grid()
    point = saturation_curve([1e-15], rates, sat, deltas)[0]
    lin = linear_flux_c(rates, sat.linear_couplings(rates), deltas)
    assert point.norm_transmission == pytest.approx(transmission_ratio(deltas, lin)[2], rel=1e-3)


def test_zero_cooperativity_curve_flat(fig3):
    rates, sat = fig3
    empty = SaturationParams(0.0, 0.0, sat.n_sat_1, sat.n_sat_2)
    T = [p.norm_transmission for p in saturation_curve(np.geomspace(1e-10, 1e-7, 5), rates, empty)]
    np.testing.assert_allclose(T, T[0], rtol=1e-10)


def test_saturation_curve_validation(fig3):
    rates, sat = fig3
    with pytest.raises(ValueError):
        saturation_curve([2e-9, 1e-9], rates, sat)
    with pytest.raises(ValueError):
        saturation_curve([0.0], rates, sat)
    with pytest.raises(ValueError):
        transmission_ratio(np.linspace(-1, 1, 4), np.ones(4))


def test_non_convergence_reported(fig3):
    rates, sat = fig3
    with pytest.raises(ConvergenceError) as info:
        saturation_curve([1e-6], rates, sat, tol=1e-30, max_iter=1)
    assert info.value.power == 1e-6


def test_normalized_flux_weak_limit(fig3):
    rates, sat = fig3
    deltas = np.linspace(-30, 30, 61)
    states = solve_saturated_spectrum(1e-5, rates, sat, deltas)
    np.testing.assert_allclose(normalized_flux_c(states, rates, sat),
                               linear_flux_c(rates, sat.linear_couplings(rates), deltas), rtol=1e-8)


def test_zero_drive():
    _, rates, atoms = preset("fig3")
    sat = SaturationParams.from_atoms(rates, atoms)
    s = solve_saturated_state(0.0, rates, sat)
    assert s.X1 == 0 and s.converged
    with pytest.raises(ValueError):
        solve_saturated_state(-1.0, rates, sat)

import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cqednet.linear_response import (
    DriveSpec,
    SingularSystemError,
    input_flux,
    local_maxima,
    local_minima,
    output_flux,
    solve_amplitudes,
    steady_state,
    steady_state_analytic,
    sweep_spectrum,
)
from cqednet.rates import AtomEnsembleParams, ModelRates, V_SCALING, apply_v_scaling, preset


def scaled(name):
    _, rates, atoms = preset(name)
    return apply_v_scaling(rates, V_SCALING[name]), atoms


def toy_rates(**kw):
    base = dict(kappa_1l=1.0, kappa_1r=1.0, kappa_2l=1.0, kappa_2r=1.0, kappa_1loss=0.2, kappa_2loss=0.2,
                kappa_b_bs=0.1, kappa_b_loss=0.1, v1=9.0, v2=9.0, gamma_par=5.2, gamma_las=0.36)
    base.update(kw)
    return ModelRates(**base)


def test_decoupled_cavity():
    rates = toy_rates(v1=0.0, v2=0.0)
    s = steady_state(rates, AtomEnsembleParams(), DriveSpec("A", 2.0, 0.0))
    assert s.a1 == pytest.approx(-2j / rates.kappa_1)
    assert s.a2 == 0 and s.b == 0 and s.sigma1 == 0


rates_st = st.builds(
    toy_rates,
    kappa_1l=st.floats(0.1, 5), kappa_2r=st.floats(0.1, 5), kappa_b_bs=st.floats(0.01, 1),
    v1=st.floats(0.5, 20), v2=st.floats(0.5, 20), gamma_par=st.floats(0.5, 10), gamma_las=st.floats(0, 1),
)


@settings(max_examples=300, deadline=None)
@given(rates=rates_st, g1=st.floats(0, 20), g2=st.floats(0, 20), port=st.sampled_from("AC"),
       delta=st.floats(-30, 30), E=st.floats(0.1, 10))
def test_direct_matches_closed_form(rates, g1, g2, port, delta, E):
    drive = DriveSpec(port, E, delta)
    atoms = AtomEnsembleParams(g1, g2)
    d = steady_state(rates, atoms, drive).as_vector()
    a = steady_state_analytic(rates, atoms, drive).as_vector()
    np.testing.assert_allclose(a, d, rtol=0, atol=1e-10 * np.abs(d).max())


@settings(max_examples=100, deadline=None)
@given(s=st.floats(0.01, 100), delta=st.floats(-30, 30))
def test_linearity(s, delta):
    rates, atoms = scaled("fig2")
    base = steady_state(rates, atoms, DriveSpec("C", 1.0, delta))
    big = steady_state(rates, atoms, DriveSpec("C", s, delta))
    np.testing.assert_allclose(big.as_vector(), s * base.as_vector(), rtol=1e-12, atol=0)
    for port in "ABC":
        f0 = output_flux(base, DriveSpec("C", 1.0, delta), rates, port)
        f1 = output_flux(big, DriveSpec("C", s, delta), rates, port)
        assert f1 == pytest.approx(s ** 2 * f0, rel=1e-10)


def test_far_detuned_reflection():
    rates, _ = scaled("fig2")
    drive = DriveSpec("A", 1.0, 1e6)
    s = steady_state(rates, AtomEnsembleParams(), drive)
    assert output_flux(s, drive, rates, "A") == pytest.approx(input_flux(drive, rates), rel=1e-5)
    assert output_flux(s, drive, rates, "B") < 1e-12


def test_fig2_doublet_and_bright_modes_present():
    rates, atoms = scaled("fig2")
    spec = sweep_spectrum(rates, atoms, "A", n_points=1201)
    peaks = -spec.delta[local_maxima(spec.flux["B"])]
    assert len(peaks) == 4
    mags = np.sort(np.abs(peaks))
    assert np.all(np.abs(mags[:2] - 5.0) < 1.0) and np.all(np.abs(mags[2:] - 13.6) < 1.0)


def test_fig2_fiber_dark_absent_in_fiber():
    rates, atoms = scaled("fig2")
    spec = sweep_spectrum(rates, atoms, "A", n_points=1201)
    peaks_c = -spec.delta[local_maxima(spec.flux["C"])]
    peaks_b = -spec.delta[local_maxima(spec.flux["B"])]
    assert not np.any(np.abs(np.abs(peaks_c) - 5) < 0.5)
    assert np.any(np.abs(np.abs(peaks_b) - 5) < 1.0)


def test_fig2_empty_three_peaks():
    rates, _ = scaled("fig2")
    spec = sweep_spectrum(rates, AtomEnsembleParams(), "A", n_points=1201)
    peaks = -spec.delta[local_maxima(spec.flux["B"])]
    assert len(peaks) == 3 and np.min(np.abs(peaks)) < 0.1


def test_fig3_dark_peak_in_fiber():
    rates, atoms = scaled("fig3")
    spec = sweep_spectrum(rates, atoms, "C", n_points=1201)
    peaks = -spec.delta[local_maxima(spec.flux["C"])]
    assert np.min(np.abs(peaks)) < 0.1
    empty = sweep_spectrum(rates, AtomEnsembleParams(), "C", n_points=1201)
    assert len(local_maxima(empty.flux["C"])) == 2


def test_fig3_cavity_dark_suppression():
    rates, atoms = scaled("fig3")
    drive = DriveSpec("C", 1.0, 0.0)
    loaded = steady_state(rates, atoms, drive)
    empty = steady_state(rates, AtomEnsembleParams(), drive)
    for attr in ("a1", "a2"):
        loaded_ratio = abs(getattr(loaded, attr)) ** 2 / abs(loaded.b) ** 2
        empty_ratio = abs(getattr(empty, attr)) ** 2 / abs(empty.b) ** 2
        assert loaded_ratio < 0.05 * empty_ratio
    # vanishing damping approaches the pure cavity-dark state
    quiet = dataclasses.replace(rates, gamma_par=0.02, gamma_las=0.0, kappa_1loss=0.0, kappa_2loss=0.0)
    s = steady_state(quiet, atoms, drive)
    assert abs(s.a1) ** 2 < 1e-2 * abs(s.b) ** 2 and abs(s.a2) ** 2 < 1e-2 * abs(s.b) ** 2


def test_c_detection_modes():
    rates, atoms = scaled("fig3")
    tap = sweep_spectrum(rates, atoms, "C", n_points=201)
    refl = sweep_spectrum(rates, atoms, "C", n_points=201, c_detection="reflection")
    np.testing.assert_allclose(tap.flux["B"], refl.flux["B"])
    b = tap.amplitudes[:, 4]
    np.testing.assert_allclose(tap.flux["C"], 2 * rates.kappa_b_bs * np.abs(b) ** 2, rtol=1e-12)
    assert not np.allclose(tap.flux["C"], refl.flux["C"])
    with pytest.raises(ValueError):
        sweep_spectrum(rates, atoms, "C", c_detection="mirror")


def test_empty_peak_normalization():
    rates, atoms = scaled("fig2")
    spec = sweep_spectrum(rates, AtomEnsembleParams(), "A", normalize="empty_peak")
    assert spec.flux["B"].max() == pytest.approx(1.0)
    loaded = sweep_spectrum(rates, atoms, "A", normalize="empty_peak")
    raw = sweep_spectrum(rates, atoms, "A")
    np.testing.assert_allclose(loaded.flux["B"] * loaded.metadata["empty_peak_B"], raw.flux["B"])


def test_adiabatic_limit():
    rates = toy_rates(gamma_par=2e8)
    atoms = AtomEnsembleParams(5.0, 5.0)
    for delta in (0.0, 4.0):
        loaded = steady_state(rates, atoms, DriveSpec("A", 1.0, delta)).as_vector()[2:]
        empty = steady_state(rates, AtomEnsembleParams(), DriveSpec("A", 1.0, delta)).as_vector()[2:]
        np.testing.assert_allclose(loaded, empty, rtol=1e-6)


def test_zero_damping_resonance_is_singular():
    rates = toy_rates(kappa_1l=0.0, kappa_1r=0.0, kappa_2l=0.0, kappa_2r=0.0, kappa_1loss=0.0, kappa_2loss=0.0,
                      kappa_b_bs=0.0, kappa_b_loss=0.0, gamma_par=0.0, gamma_las=0.0)
    atoms = AtomEnsembleParams(5.0, 5.0)
    with pytest.raises(SingularSystemError):
        steady_state(rates, atoms, DriveSpec("A", 1.0, -5.0))
    with pytest.raises(SingularSystemError, match="gamma_perp"):
        steady_state_analytic(rates, atoms, DriveSpec("A", 1.0, 0.0))


def test_uncoupled_atoms_without_damping():
    rates = toy_rates(gamma_par=0.0, gamma_las=0.0)
    s = steady_state(rates, AtomEnsembleParams(), DriveSpec("A", 1.0, 0.0))
    assert s.sigma1 == 0 and abs(s.a1) > 0


def test_drive_validation():
    with pytest.raises(ValueError):
        DriveSpec("B")
    with pytest.raises(ValueError):
        DriveSpec("A", float("nan"))
    assert DriveSpec("A", 1.0, 0.0, detunings=(1, 2, 3, 4)).oscillator_detunings() == (1.0, 2.0, 3.0, 4.0)


def test_separate_detunings_broadcast():
    rates, atoms = scaled("fig2")
    E = np.array([0, 0, 1, 0, 0], dtype=complex)
    d = np.linspace(-5, 5, 7)
    batched = solve_amplitudes(rates, atoms, E, (d, d, d, np.zeros_like(d)))
    for k, dk in enumerate(d):
        single = steady_state(rates, atoms, DriveSpec("A", 1.0, detunings=(dk, dk, dk, 0.0))).as_vector()
        np.testing.assert_allclose(batched[k], single, rtol=1e-12)


def test_sweep_validation():
    rates, atoms = scaled("fig2")
    with pytest.raises(ValueError):
        sweep_spectrum(rates, atoms, "A", n_points=1)
    with pytest.raises(ValueError):
        sweep_spectrum(rates, atoms, "A", delta_min=5, delta_max=-5)
    with pytest.raises(ValueError):
        sweep_spectrum(rates, atoms, "A", normalize="max")


def test_extrema_helpers():
    x = np.linspace(-3, 3, 601)
    y = np.exp(-(x - 1) ** 2 * 8) + np.exp(-(x + 1) ** 2 * 8)
    assert len(local_maxima(y)) == 2
    assert np.abs(x[local_minima(y)]).min() < 0.01

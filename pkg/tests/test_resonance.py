"""Single-resonance model: Kerr response, facet etalon, fitting, calibration."""

from __future__ import annotations

import math

import numpy as np
import pytest

from floquet_rings import (
    C0,
    HBAR,
    CalibrationMap,
    FacetParams,
    ResonanceParams,
    calibrate_phase,
    facet_transmission,
    fit_resonance,
    kerr_occupation,
    kerr_t0,
    q_compose,
)

OMEGA_0 = 2 * math.pi * C0 / 1545e-9


def test_q_compose_reciprocal_sum():
    assert q_compose(95050.0, 186120.0) == pytest.approx(62918.1847, abs=0.01)
    assert q_compose(30966.0, 143542.0) == pytest.approx(25471.16, abs=0.01)
    assert q_compose(2.0, 2.0) == pytest.approx(1.0, rel=1e-15)
    q = q_compose(8.1e4, 1.9e5)
    assert 1.0 / q == pytest.approx(1.0 / 8.1e4 + 1.0 / 1.9e5, rel=1e-14)


def test_linear_through_amplitude_is_lorentzian():
    p = ResonanceParams(OMEGA_0, kappa_ext=1.2e10, kappa_int=0.8e10)
    w = OMEGA_0 + np.linspace(-5e10, 5e10, 101)
    t0 = kerr_t0(p, w)
    ref = 1.0 - 1.2e10 / (0.5 * 2.0e10 - 1j * (w - OMEGA_0))
    assert np.max(np.abs(t0 - ref)) < 1e-14
    # critical coupling extinguishes the through port on resonance
    crit = ResonanceParams(OMEGA_0, kappa_ext=1e10, kappa_int=1e10)
    assert abs(kerr_t0(crit, np.array([OMEGA_0]))[0]) < 1e-14


def test_kerr_occupation_satisfies_cubic_balance():
    p = ResonanceParams(OMEGA_0, kappa_ext=1.2e10, kappa_int=0.8e10,
                        g_nl=1e4)
    w = OMEGA_0 + np.linspace(-3e10, 3e10, 201)
    power = 1e-4
    state = kerr_occupation(p, w, power)
    flux = p.kappa_ext * power / (HBAR * w)
    lhs = state.n_res * ((p.kappa / 2) ** 2
                         + (w - OMEGA_0 + 2 * p.g_nl * state.n_res) ** 2)
    assert np.max(np.abs(lhs / flux - 1.0)) < 1e-9


def test_weak_drive_matches_linear_response():
    p = ResonanceParams(OMEGA_0, kappa_ext=1.2e10, kappa_int=0.8e10,
                        g_nl=1e4)
    w = OMEGA_0 + np.linspace(-8e10, 8e10, 401)
    power = 1e-10
    state = kerr_occupation(p, w, power)
    linear = (p.kappa_ext * power / (HBAR * w)
              / ((p.kappa / 2) ** 2 + (w - OMEGA_0) ** 2))
    assert not state.bistable
    assert np.max(np.abs(state.n_res / linear - 1.0)) < 1e-6


def test_strong_drive_bistable_with_hysteresis_and_red_shift():
    p = ResonanceParams(OMEGA_0, kappa_ext=1.2e10, kappa_int=0.8e10,
                        g_nl=1e4)
    w = OMEGA_0 + np.linspace(-8e10, 8e10, 2001)
    power = 2e27 * HBAR * OMEGA_0 / p.kappa_ext
    up = kerr_occupation(p, w, power, sweep="wavelength-up")
    down = kerr_occupation(p, w, power, sweep="wavelength-down")
    assert up.bistable and down.bistable
    branch_gap = np.max(np.abs(up.n_res - down.n_res)) / np.max(up.n_res)
    assert branch_gap > 0.1
    # the occupation maximum sits below the cold resonance frequency
    assert w[int(np.argmax(up.n_res))] < OMEGA_0


def test_facet_fabry_perot_frozen_point():
    # decay rates chosen so the bare through amplitude is 0.3 + 0.4j
    kext = 1e10
    kint = kext * 15.0 / 13.0
    delta = -kext * 8.0 / 13.0
    facet = FacetParams(r1=math.sqrt(0.2), r2=math.sqrt(0.2),
                        t1=math.sqrt(0.8), t2=math.sqrt(0.8), phi=0.7)
    p = ResonanceParams(OMEGA_0, kext, kint, facet=facet)
    t0 = kerr_t0(p, np.array([OMEGA_0 + delta]))[0]
    assert t0 == pytest.approx(0.3 + 0.4j, abs=1e-10)
    t_meas = facet_transmission(p, np.array([OMEGA_0 + delta]))[0]
    assert t_meas == pytest.approx(0.166307946789, abs=1e-9)
    # without mirrors the etalon factor disappears
    bare = ResonanceParams(OMEGA_0, kext, kint)
    assert facet_transmission(bare, np.array([OMEGA_0 + delta]))[0] == \
        pytest.approx(abs(t0) ** 2, abs=1e-12)


def test_facet_airy_envelope_off_resonance():
    rho = 0.2
    w = np.array([OMEGA_0 + 1e16])  # far detuned: |t0| -> 1
    vals = []
    for phi in np.linspace(0.0, 2 * math.pi, 9):
        facet = FacetParams(r1=math.sqrt(rho), r2=math.sqrt(rho),
                            t1=math.sqrt(1 - rho), t2=math.sqrt(1 - rho),
                            phi=phi)
        p = ResonanceParams(OMEGA_0, 1e10, 1e10, facet=facet)
        vals.append(facet_transmission(p, w)[0])
    assert max(vals) == pytest.approx(1.0, abs=1e-4)
    assert min(vals) == pytest.approx((1 - rho) ** 2 / (1 + rho) ** 2,
                                      abs=1e-4)


def _synthetic_dip(n_points=2401, noise=0.0, seed=None):
    kappa_ext = OMEGA_0 / 95050.0
    kappa_int = OMEGA_0 / 186120.0
    truth = ResonanceParams(OMEGA_0, kappa_ext, kappa_int,
                            facet=FacetParams(r1=0.22, r2=0.22,
                                              t1=0.95, t2=0.95, phi=1.3))
    kappa = kappa_ext + kappa_int
    w = OMEGA_0 + np.linspace(-10, 10, n_points) * kappa
    y = facet_transmission(truth, w)
    if noise:
        rng = np.random.default_rng(seed)
        y = np.clip(y + rng.normal(0.0, noise, y.shape), 0.0, None)
    return truth, 2 * math.pi * C0 / w, y


def test_fit_recovers_noiseless_parameters():
    truth, lam, y = _synthetic_dip()
    fit = fit_resonance(lam, y)
    assert fit.q_t == pytest.approx(truth.q_t, rel=1e-6)
    assert fit.residual_rms < 1e-8
    # the etalon's phase response breaks the under/over ambiguity, so the
    # automatic regime choice lands on the true over-coupled solution
    assert not fit.degenerate
    assert fit.coupling == "over"
    assert fit.params.kappa_ext == pytest.approx(truth.kappa_ext, rel=1e-6)
    assert fit.params.omega_0 == pytest.approx(truth.omega_0, rel=1e-12)
    forced = fit_resonance(lam, y, coupling="over")
    assert forced.params.kappa_ext > forced.params.kappa_int
    assert forced.params.kappa_ext == pytest.approx(truth.kappa_ext,
                                                    rel=1e-6)


def test_bare_lorentzian_fit_is_coupling_degenerate():
    # without mirrors the magnitude response is symmetric under exchanging
    # the extrinsic and intrinsic rates, so only q_t is determined
    kappa_ext = OMEGA_0 / 95050.0
    kappa_int = OMEGA_0 / 186120.0
    truth = ResonanceParams(OMEGA_0, kappa_ext, kappa_int)
    kappa = kappa_ext + kappa_int
    w = OMEGA_0 + np.linspace(-10, 10, 2401) * kappa
    lam = 2 * math.pi * C0 / w
    fit = fit_resonance(lam, facet_transmission(truth, w))
    assert fit.degenerate
    assert fit.q_t == pytest.approx(truth.q_t, rel=1e-6)
    assert fit.params_swapped is not None
    assert fit.params_swapped.kappa_ext == pytest.approx(
        fit.params.kappa_int, rel=1e-3)


def test_fit_tolerates_one_percent_noise():
    truth, lam, y = _synthetic_dip(n_points=9601, noise=0.01, seed=2024)
    fit = fit_resonance(lam, y)
    assert fit.q_t == pytest.approx(truth.q_t, rel=0.03)
    assert fit.uncertainties["q_t"] > 0.0
    assert fit.uncertainties["q_t"] < 0.05 * truth.q_t


def test_fit_rejects_degenerate_input():
    with pytest.raises(ValueError):
        fit_resonance(np.linspace(1544e-9, 1546e-9, 8),
                      np.ones(8))


def test_phase_calibration_recovers_line():
    slope = 0.2808680222418568e-9  # m per rad of defect phase
    lam_ref = 1546.3041e-9
    phi_ref = 1.47 * math.pi
    phis = np.array([1.5, 1.7, 1.9, 2.3, 2.5]) * math.pi
    lams_nm = (lam_ref + slope * (phis - phi_ref)) * 1e9
    cal = calibrate_phase(phase_samples=list(zip(phis, lams_nm)),
                          reference=(phi_ref, lam_ref * 1e9))
    assert cal.slope_lam_phase == pytest.approx(slope * 1e9, rel=1e-12)
    assert cal.r2_phase == pytest.approx(1.0, abs=1e-12)
    assert cal.lam_of_phase(2.0 * math.pi) == pytest.approx(
        (lam_ref + slope * (2.0 * math.pi - phi_ref)) * 1e9, rel=1e-12)
    back = cal.phase_of_lam(cal.lam_of_phase(1.8 * math.pi))
    assert back == pytest.approx(1.8 * math.pi, rel=1e-12)
    assert math.isnan(cal.slope_lam_heat)


def test_heater_calibration_and_composed_map():
    # heater power tunes the resonance linearly; slope in nm per mW
    heats = np.array([0.0, 1.0, 2.0, 3.5, 5.0])
    lams = 1546.0 + 0.12 * heats
    cal = calibrate_phase(heater_samples=list(zip(heats, lams)))
    assert cal.slope_lam_heat == pytest.approx(0.12, rel=1e-12)
    assert cal.r2_heat == pytest.approx(1.0, abs=1e-12)
    assert cal.lam_at_zero_heat == pytest.approx(1546.0, rel=1e-12)
    assert cal.lam_of_heat(2.5) == pytest.approx(1546.3, rel=1e-12)
    assert math.isnan(cal.slope_lam_phase)
    with pytest.raises(ValueError):
        cal.lam_of_phase(2.0)
    # with both maps fitted, heater power composes through wavelength
    phis = np.array([1.5, 1.9, 2.3]) * math.pi
    lam_of_phi = 1546.0 + 0.28 * (phis - 1.5 * math.pi)
    both = calibrate_phase(phase_samples=list(zip(phis, lam_of_phi)),
                           heater_samples=list(zip(heats, lams)))
    expected_phi = both.phase_of_lam(both.lam_of_heat(3.0))
    assert both.phase_of_heat(3.0) == pytest.approx(expected_phi, rel=1e-12)


def test_calibration_requires_enough_samples():
    with pytest.raises(ValueError):
        calibrate_phase()
    with pytest.raises(ValueError):
        calibrate_phase(phase_samples=[(1.0, 1546.0)])
    with pytest.raises(ValueError):
        calibrate_phase(phase_samples=[(1.0, 1546.0), (1.0, 1546.2)])


def test_parameter_validation():
    with pytest.raises(ValueError):
        ResonanceParams(-1.0, 1e10, 1e10)
    with pytest.raises(ValueError):
        ResonanceParams(OMEGA_0, -1e10, 1e10)
    with pytest.raises(ValueError):
        FacetParams(r1=0.8, t1=0.8)  # r^2 + t^2 > 1
    with pytest.raises(ValueError):
        kerr_occupation(ResonanceParams(OMEGA_0, 1e10, 1e10),
                        np.array([OMEGA_0]), -1.0)

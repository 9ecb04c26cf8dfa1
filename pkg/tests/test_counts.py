"""Detected counting statistics: correlation formulas, histograms, peak fits."""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.special import erf

from floquet_rings import (
    DetectionChain,
    PairSourceModel,
    detected_rates,
    expected_car,
    expected_g2_zero,
    fit_peak_and_car,
    g2_cross_zero,
    nonclassicality_gamma,
    synthetic_histogram,
)

# calibrated source/chain shipped in the default configuration
PAIR_RATE_PER_W2 = 22216213735270.39
LEAK_PER_W = 562276344.5281307
BROKEN_S = 0.6251899313501146
BROKEN_I = 0.5203314853091736
ETA = 0.25
DARK = 50.0
T_COIN = 100e-12
DELTA_TRUE = 99.7e-12
WINDOW = 3 * DELTA_TRUE


def _calibrated():
    model = PairSourceModel(PAIR_RATE_PER_W2, BROKEN_S, BROKEN_I)
    chain = DetectionChain(ETA, ETA, DARK, DARK, LEAK_PER_W, LEAK_PER_W)
    return model, chain


def test_detected_rates_compose_efficiency_leak_and_dark():
    chain = DetectionChain(0.3, 0.2, dark_s=11.0, dark_i=7.0,
                           leak_s=1e9, leak_i=2e9)
    n_c, s_s, s_i = detected_rates((1e6, 1.5e6, 1.3e6), chain, power=1e-4)
    assert n_c == pytest.approx(0.3 * 0.2 * 1e6, rel=1e-14)
    assert s_s == pytest.approx(0.3 * 1.5e6 + 1e9 * 1e-4 + 11.0, rel=1e-14)
    assert s_i == pytest.approx(0.2 * 1.3e6 + 2e9 * 1e-4 + 7.0, rel=1e-14)


def test_pair_source_intrinsic_rates_quadratic():
    model = PairSourceModel(1e13, broken_ratio_s=0.6, broken_ratio_i=0.5)
    n_c, n_s, n_i = model.intrinsic_rates(2e-4)
    assert n_c == pytest.approx(1e13 * 4e-8, rel=1e-14)
    assert n_s == pytest.approx(n_c * 1.6, rel=1e-14)
    assert n_i == pytest.approx(n_c * 1.5, rel=1e-14)


def test_g2_cross_zero_normalises_to_accidentals():
    assert g2_cross_zero(2e3, 1e5, 2e5, 1e-10) == pytest.approx(
        2e3 / (1e5 * 2e5 * 1e-10), rel=1e-14)
    # feeding the accidental rate itself returns exactly 1
    assert g2_cross_zero(1e5 * 2e5 * 1e-10, 1e5, 2e5, 1e-10) == 1.0
    with pytest.raises(ValueError):
        g2_cross_zero(1.0, 0.0, 1.0)


def test_gamma_is_squared_cross_over_autos():
    assert nonclassicality_gamma(30.0) == pytest.approx(900.0)
    assert nonclassicality_gamma(30.0, 2.0, 2.0) == pytest.approx(225.0)
    assert nonclassicality_gamma(1.0) == pytest.approx(1.0)


def test_calibrated_g2_hits_target():
    model, chain = _calibrated()
    g2 = expected_g2_zero(model, chain, 0.29e-3, t_coin=T_COIN)
    assert g2 == pytest.approx(1450.0, abs=1e-6)
    with_floor = expected_g2_zero(model, chain, 0.29e-3, t_coin=T_COIN,
                                  include_accidentals=True)
    assert with_floor == pytest.approx(g2 + 1.0, rel=1e-12)


def test_calibrated_car_hits_target():
    model, chain = _calibrated()
    car = expected_car(model, chain, 86e-6, window=WINDOW, delta=DELTA_TRUE)
    assert car == pytest.approx(2331.0, abs=1e-6)


def test_expected_car_formula_by_hand():
    model, chain = _calibrated()
    power = 86e-6
    n_c = ETA * ETA * PAIR_RATE_PER_W2 * power**2
    s_s = (ETA * PAIR_RATE_PER_W2 * power**2 * (1 + BROKEN_S)
           + LEAK_PER_W * power + DARK)
    s_i = (ETA * PAIR_RATE_PER_W2 * power**2 * (1 + BROKEN_I)
           + LEAK_PER_W * power + DARK)
    capture = erf(WINDOW / (2 * math.sqrt(2) * DELTA_TRUE))
    by_hand = 1.0 + capture * n_c / (s_s * s_i * WINDOW)
    assert expected_car(model, chain, power) == pytest.approx(by_hand,
                                                              rel=1e-12)


def test_car_excess_falls_as_inverse_square_power():
    model, chain = _calibrated()
    powers = np.geomspace(1e-2, 1e-1, 25)
    cars = np.array([expected_car(model, chain, p) for p in powers])
    slope = np.polyfit(np.log10(powers), np.log10(cars - 1.0), 1)[0]
    assert slope == pytest.approx(-2.0, abs=0.05)


def test_car_is_non_monotonic_in_power():
    # dark counts dominate at vanishing power, pairs dominate at high
    # power; the ratio peaks in between
    model, chain = _calibrated()
    powers = np.geomspace(1e-9, 1e-2, 60)
    cars = np.array([expected_car(model, chain, p) for p in powers])
    peak = int(np.argmax(cars))
    assert 0 < peak < cars.size - 1
    assert cars[peak] > cars[0] and cars[peak] > cars[-1]


def test_synthetic_histogram_reproducible_and_poissonian():
    rates = (2.5e3, 1.2e5, 1.1e5)
    h1 = synthetic_histogram(rates, DELTA_TRUE, seed=42, stream=3)
    h2 = synthetic_histogram(rates, DELTA_TRUE, seed=42, stream=3)
    assert np.array_equal(h1.counts, h2.counts)
    h3 = synthetic_histogram(rates, DELTA_TRUE, seed=42, stream=4)
    assert not np.array_equal(h1.counts, h3.counts)
    assert h1.t.shape == (601,)
    assert h1.t[1] - h1.t[0] == pytest.approx(20e-12)
    # total counts near the expected mean (floor + full peak captured)
    mean_total = (rates[1] * rates[2] * 20e-12 * 601 + rates[0]) * 300.0
    assert h1.counts.sum() == pytest.approx(mean_total,
                                            rel=5 / math.sqrt(mean_total))


def test_peak_fit_recovers_width_center_and_floor():
    model, chain = _calibrated()
    rates = detected_rates(model.intrinsic_rates(86e-6), chain, 86e-6)
    hist = synthetic_histogram(rates, DELTA_TRUE, seed=2024)
    res = fit_peak_and_car(hist)
    assert res.delta == pytest.approx(DELTA_TRUE, rel=0.02)
    assert res.fwhm == pytest.approx(2 * math.sqrt(2 * math.log(2))
                                     * res.delta, rel=1e-12)
    assert abs(res.peak_center) < 20e-12
    floor_expected = rates[1] * rates[2] * 20e-12 * 300.0
    assert res.floor_per_bin == pytest.approx(floor_expected, rel=0.05)
    assert res.car == pytest.approx(2331.0, rel=0.2)
    assert res.g2_si_zero > 100.0
    assert res.gamma == pytest.approx(res.g2_si_zero ** 2, rel=1e-12)


def test_car_curve_saturates_once_window_covers_peak():
    model, chain = _calibrated()
    rates = detected_rates(model.intrinsic_rates(86e-6), chain, 86e-6)
    hist = synthetic_histogram(rates, DELTA_TRUE, seed=7)
    res = fit_peak_and_car(hist)
    wide = res.car_windows >= 0.5e-9
    assert np.count_nonzero(wide) >= 3
    tail = res.car_vs_window[wide]
    assert np.max(np.abs(tail / tail[-1] - 1.0)) < 0.02
    # the curve rises before saturating
    narrow = res.car_vs_window[res.car_windows <= 0.15e-9]
    assert narrow[0] < 0.8 * tail[-1]


def test_flat_histogram_reports_unit_car():
    # edge-transport configuration: no trapped resonance, pairs washed out,
    # only accidental coincidences remain
    rates = (0.0, 2.0e5, 2.0e5)
    hist = synthetic_histogram(rates, DELTA_TRUE, seed=5,
                               acquisition_time=1200.0)
    res = fit_peak_and_car(hist)
    assert res.car == pytest.approx(1.0, abs=0.05)
    assert math.isnan(res.delta)
    assert res.g2_si_zero == pytest.approx(1.0, abs=0.1)


def test_detection_chain_validation():
    with pytest.raises(ValueError):
        DetectionChain(1.2, 0.5)
    with pytest.raises(ValueError):
        DetectionChain(0.5, 0.5, dark_s=-1.0)
    with pytest.raises(ValueError):
        PairSourceModel(-1.0)


def test_histogram_validation():
    with pytest.raises(ValueError):
        synthetic_histogram((-1.0, 1e5, 1e5), DELTA_TRUE)
    with pytest.raises(ValueError):
        synthetic_histogram((1e3, 1e5, 1e5), 0.0)
    with pytest.raises(ValueError):
        synthetic_histogram((1e3, 1e5, 1e5), DELTA_TRUE, n_bins=2)

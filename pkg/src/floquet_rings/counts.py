"""Detected counting statistics for a photon-pair source.

Maps intrinsic pair and single rates to detected rates through a detection
chain (arm efficiencies, pump-leakage background, dark counts), evaluates
cross/auto second-order correlations and the Cauchy-Schwarz ratio, and
provides a synthetic coincidence-histogram generator plus the matching
peak-fit / coincidence-to-accidental analysis.

Conventions
-----------
* Rates are in Hz, powers in W, times in seconds.
* ``detected_rates`` maps whatever intrinsic singles it is given; callers
  that start from a pair rate must pass singles that already include the
  paired component (see :class:`PairSourceModel`).
* The coincidence peak is modelled as a Gaussian of standard deviation
  ``delta``; the full width at half maximum is ``2*sqrt(2*ln 2)*delta`` by
  construction.
* Measured coincidences include the accidental floor, so composed
  correlation values satisfy ``g2 >= 1`` and the coincidence-to-accidental
  ratio tends to 1 for an uncorrelated source.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit
from scipy.special import erf

__all__ = [
    "T_COIN_DEFAULT",
    "CAR_WINDOW_DEFAULT",
    "DetectionChain",
    "PairSourceModel",
    "CoincidenceHistogram",
    "CorrelationResult",
    "detected_rates",
    "g2_cross_zero",
    "nonclassicality_gamma",
    "expected_g2_zero",
    "expected_car",
    "synthetic_histogram",
    "fit_peak_and_car",
]

T_COIN_DEFAULT = 100e-12
"""Smallest resolved coincidence bin used for g2(0) normalisation (s)."""

CAR_WINDOW_DEFAULT = 3 * 99.7e-12
"""Default coincidence window: three peak standard deviations (s)."""

_FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


def _window_capture(window: float, delta: float) -> float:
    """Fraction of a centred Gaussian peak inside ``|t| <= window/2``."""
    return float(erf(window / (2.0 * math.sqrt(2.0) * delta)))


@dataclass(frozen=True)
class DetectionChain:
    """Per-arm detection model: efficiency, pump leakage, dark counts.

    Parameters
    ----------
    eta_s, eta_i:
        Chip-to-detector transmission of the signal/idler arm, in [0, 1].
    dark_s, dark_i:
        Detector dark-count rates (Hz).
    leak_s, leak_i:
        Pump-leakage background coefficients (counts/s per W of on-chip
        pump power); model the residual pump light that survives filtering.
    """

    eta_s: float
    eta_i: float
    dark_s: float = 0.0
    dark_i: float = 0.0
    leak_s: float = 0.0
    leak_i: float = 0.0

    def __post_init__(self) -> None:
        for name in ("eta_s", "eta_i"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        for name in ("dark_s", "dark_i", "leak_s", "leak_i"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class PairSourceModel:
    """Quadratic-in-power rate model of a parametric pair source.

    ``pair_rate_per_w2`` is the generated pair rate divided by the squared
    on-chip pump power; ``broken_ratio_s`` (``broken_ratio_i``) is the ratio
    of broken-pair signal (idler) singles to the pair rate, set by the
    partner mode's intrinsic-to-extrinsic loss ratio.  Intrinsic singles in
    each arm are the pairs plus that arm's broken-pair events.
    """

    pair_rate_per_w2: float
    broken_ratio_s: float = 0.0
    broken_ratio_i: float = 0.0

    def __post_init__(self) -> None:
        if self.pair_rate_per_w2 < 0.0:
            raise ValueError("pair_rate_per_w2 must be non-negative")
        if self.broken_ratio_s < 0.0 or self.broken_ratio_i < 0.0:
            raise ValueError("broken-pair ratios must be non-negative")

    def intrinsic_rates(self, power: float) -> tuple[float, float, float]:
        """(pair, signal-singles, idler-singles) rates at ``power`` (Hz)."""
        n_c = self.pair_rate_per_w2 * power**2
        return (n_c,
                n_c * (1.0 + self.broken_ratio_s),
                n_c * (1.0 + self.broken_ratio_i))


@dataclass(frozen=True)
class CoincidenceHistogram:
    """Coincidence counts versus signal-idler delay.

    ``t`` holds bin centres (s), ``counts`` the non-negative integer counts
    accumulated over ``acquisition_time`` with uniform ``bin_width``.
    """

    t: np.ndarray
    counts: np.ndarray
    bin_width: float
    acquisition_time: float

    def __post_init__(self) -> None:
        t = np.asarray(self.t, dtype=float)
        counts = np.asarray(self.counts)
        if t.ndim != 1 or counts.shape != t.shape:
            raise ValueError("t and counts must be 1-D arrays of equal length")
        if self.bin_width <= 0.0 or self.acquisition_time <= 0.0:
            raise ValueError("bin_width and acquisition_time must be positive")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "counts", np.asarray(counts, dtype=np.int64))


@dataclass(frozen=True)
class CorrelationResult:
    """Correlation numbers extracted from a coincidence histogram.

    ``g2_si_t`` is the measured cross-correlation versus delay (counts
    normalised to the accidental floor) on the ``t`` grid.  ``delta`` is the
    fitted Gaussian standard deviation of the coincidence peak (NaN for a
    flat histogram); ``fwhm`` is tied to it exactly.  ``car_windows`` and
    ``car_vs_window`` trace the coincidence-to-accidental ratio as the
    integration window opens, with the accidental normalisation fixed at the
    reported ``window`` so the curve saturates once the window swallows the
    whole peak.
    """

    t: np.ndarray
    g2_si_t: np.ndarray
    g2_si_zero: float
    g2_ss_zero: float
    g2_ii_zero: float
    gamma: float
    car: float
    window: float
    delta: float
    peak_center: float
    floor_per_bin: float
    car_windows: np.ndarray = field(repr=False)
    car_vs_window: np.ndarray = field(repr=False)

    @property
    def fwhm(self) -> float:
        """Full width at half maximum of the fitted peak (s)."""
        return _FWHM_PER_SIGMA * self.delta


def detected_rates(
    intrinsic: tuple[float, float, float],
    chain: DetectionChain,
    power: float = 0.0,
) -> tuple[float, float, float]:
    """Map intrinsic (pair, signal, idler) rates to detected rates.

    Coincidences see both arm efficiencies; each single rate sees its own
    efficiency plus the pump-leakage background ``leak * power`` and the
    dark counts of that arm.
    """
    n_c, n_s, n_i = intrinsic
    if n_c < 0.0 or n_s < 0.0 or n_i < 0.0 or power < 0.0:
        raise ValueError("rates and power must be non-negative")
    return (
        chain.eta_s * chain.eta_i * n_c,
        chain.eta_s * n_s + chain.leak_s * power + chain.dark_s,
        chain.eta_i * n_i + chain.leak_i * power + chain.dark_i,
    )


def g2_cross_zero(
    n_tot_c: float,
    n_tot_s: float,
    n_tot_i: float,
    t_coin: float = T_COIN_DEFAULT,
) -> float:
    """Zero-delay cross-correlation from detected rates.

    ``g2 = n_tot_c / (n_tot_s * n_tot_i * t_coin)``: the measured
    coincidence rate normalised to the accidental rate of two Poissonian
    streams within the coincidence bin ``t_coin``.  Feeding the accidental
    rate itself (``n_tot_c = n_tot_s * n_tot_i * t_coin``) returns exactly 1.
    """
    if t_coin <= 0.0:
        raise ValueError("t_coin must be positive")
    if n_tot_s <= 0.0 or n_tot_i <= 0.0:
        raise ValueError("single rates must be positive to normalise g2")
    if n_tot_c < 0.0:
        raise ValueError("coincidence rate must be non-negative")
    return n_tot_c / (n_tot_s * n_tot_i * t_coin)


def nonclassicality_gamma(
    g_si_zero: float,
    g_ss_zero: float = 1.0,
    g_ii_zero: float = 1.0,
) -> float:
    """Cauchy-Schwarz ratio ``g_si^4 / (g_ss^2 * g_ii^2)`` at zero delay.

    Values above 1 violate the classical Cauchy-Schwarz bound
    ``g_si^2 <= g_ss * g_ii``.  Auto-correlations default to 1
    (Poissonian filtered singles); pass 2 for a thermal single-mode
    assumption.
    """
    if g_ss_zero <= 0.0 or g_ii_zero <= 0.0:
        raise ValueError("auto-correlations must be positive")
    if g_si_zero < 0.0:
        raise ValueError("cross-correlation must be non-negative")
    return g_si_zero**2 / (g_ss_zero * g_ii_zero)


def _composed_rates(
    model: PairSourceModel,
    chain: DetectionChain,
    power: float,
) -> tuple[float, float, float]:
    return detected_rates(model.intrinsic_rates(power), chain, power)


def expected_g2_zero(
    model: PairSourceModel,
    chain: DetectionChain,
    power: float,
    t_coin: float = T_COIN_DEFAULT,
    include_accidentals: bool = False,
) -> float:
    """Model zero-delay cross-correlation at a given pump power.

    With ``include_accidentals`` the accidental floor is added to the
    coincidence rate before normalising, which shifts the value up by
    exactly 1 and guarantees ``g2 >= 1`` for every parameter choice.
    """
    n_tot_c, s_s, s_i = _composed_rates(model, chain, power)
    if include_accidentals:
        n_tot_c += s_s * s_i * t_coin
    return g2_cross_zero(n_tot_c, s_s, s_i, t_coin)


def expected_car(
    model: PairSourceModel,
    chain: DetectionChain,
    power: float,
    window: float = CAR_WINDOW_DEFAULT,
    delta: float = 99.7e-12,
) -> float:
    """Model coincidence-to-accidental ratio at a given pump power.

    True coincidences captured by the window (a centred Gaussian peak of
    standard deviation ``delta``) ride on the accidental rate
    ``s_s * s_i * window``; the ratio of window counts to an equal far-away
    window is ``1 + capture * n_pairs / (s_s * s_i * window)``.  The excess
    over 1 falls as ``1/power**2`` once the singles are pair-dominated.
    """
    if window <= 0.0 or delta <= 0.0:
        raise ValueError("window and delta must be positive")
    n_tot_c, s_s, s_i = _composed_rates(model, chain, power)
    accidental = s_s * s_i * window
    if accidental <= 0.0:
        raise ValueError("accidental rate must be positive to normalise")
    return 1.0 + _window_capture(window, delta) * n_tot_c / accidental


def synthetic_histogram(
    rates: tuple[float, float, float],
    delta_true: float,
    n_bins: int = 601,
    bin_width: float = 20e-12,
    acquisition_time: float = 300.0,
    seed: int = 0,
    stream: int = 0,
) -> CoincidenceHistogram:
    """Draw a synthetic coincidence histogram from detected rates.

    Every bin is an independent Poisson draw around
    ``floor + peak``, where the floor is the accidental rate
    ``n_tot_s * n_tot_i * bin_width * acquisition_time`` and the peak
    distributes ``n_tot_c * acquisition_time`` counts as a centred Gaussian
    of standard deviation ``delta_true``, integrated exactly over each bin.
    The draw is keyed by ``(seed, stream)`` only, so histograms are
    bit-for-bit reproducible and independent per stream.
    """
    n_tot_c, n_tot_s, n_tot_i = rates
    if min(n_tot_c, n_tot_s, n_tot_i) < 0.0:
        raise ValueError("rates must be non-negative")
    if delta_true <= 0.0 or bin_width <= 0.0 or acquisition_time <= 0.0:
        raise ValueError("delta_true, bin_width, acquisition_time must be positive")
    if n_bins < 3:
        raise ValueError("need at least 3 bins")
    edges = (np.arange(n_bins + 1) - n_bins / 2.0) * bin_width
    centers = 0.5 * (edges[:-1] + edges[1:])
    floor = n_tot_s * n_tot_i * bin_width * acquisition_time
    cdf = 0.5 * (1.0 + erf(edges / (delta_true * math.sqrt(2.0))))
    mean = floor + n_tot_c * acquisition_time * np.diff(cdf)
    rng = np.random.Generator(np.random.Philox(key=[seed, stream]))
    return CoincidenceHistogram(centers, rng.poisson(mean), bin_width,
                                acquisition_time)


def _far_floor(
    t: np.ndarray,
    counts: np.ndarray,
    center: float,
    fwhm: float,
) -> tuple[float, np.ndarray]:
    """Mean counts per bin over bins at least 10 FWHM from the peak."""
    far = np.abs(t - center) >= 10.0 * fwhm
    if not np.any(far):
        raise RuntimeError(
            "histogram span too short to estimate the accidental floor "
            "(no bins at least 10 FWHM from the peak)")
    return float(counts[far].mean()), far


def fit_peak_and_car(
    hist: CoincidenceHistogram,
    window: float | None = None,
    window_factor: float = 3.0,
    auto_correlation: float = 1.0,
    flat_window: float = CAR_WINDOW_DEFAULT,
    t_coin: float = T_COIN_DEFAULT,
    n_curve: int = 25,
    max_curve_window: float = 1.0e-9,
) -> CorrelationResult:
    """Fit the coincidence peak and evaluate CAR and correlation numbers.

    A Gaussian (amplitude, centre, standard deviation, floor) is fitted by
    least squares when a locally averaged bin stands above the Poisson
    floor by more than the expected extreme of the floor noise across all
    bins (so a few-sigma peak spread over several bins is resolved, while
    single-bin shot-noise spikes are not); otherwise the histogram is
    treated as flat and the coincidence-to-accidental ratio is evaluated in
    a ``flat_window`` around zero delay, landing near 1.

    CAR divides the counts inside the window (``window_factor`` standard
    deviations wide by default, or the explicit ``window``) centred on the
    fitted peak by the counts of an equal-width window at large delay,
    estimated from the mean floor of all bins at least 10 FWHM away.  The
    ``car_vs_window`` curve reopens the numerator window while keeping that
    accidental normalisation fixed, so it grows toward saturation once the
    window exceeds the peak width.  ``g2_si_zero`` converts the fitted peak
    area to a coincidence rate, normalised to the accidental rate in
    ``t_coin`` and including the floor itself (so it is at least 1).

    Raises ``RuntimeError`` with diagnostics if the least-squares fit does
    not converge or the floor cannot be estimated.
    """
    t = hist.t
    counts = hist.counts.astype(float)
    med = float(np.median(counts))
    i_max = int(np.argmax(counts))

    # peak-vs-flat: average over a few bins so a genuine peak (many bins
    # wide) keeps its height while shot-noise spikes shrink, then require
    # the averaged excess to beat the expected extreme of the floor noise
    # over the whole histogram
    k_avg = 5
    smooth = np.convolve(counts, np.ones(k_avg) / k_avg, mode="same")
    sigma_avg = max(math.sqrt(max(med, 1.0) / k_avg), 1e-12)
    extreme = math.sqrt(2.0 * math.log(max(len(t), 2))) + 1.5
    resolvable = (smooth.max() - np.median(smooth)
                  >= max(3.0, extreme) * sigma_avg)

    if not resolvable:
        return _flat_result(hist, counts, med, auto_correlation,
                            window or flat_window, t_coin,
                            n_curve, max_curve_window)

    # initial width from half-maximum crossings around the peak
    half = med + 0.5 * (counts[i_max] - med)
    above = counts >= half
    j_lo = i_max
    while j_lo > 0 and above[j_lo - 1]:
        j_lo -= 1
    j_hi = i_max
    while j_hi < len(t) - 1 and above[j_hi + 1]:
        j_hi += 1
    fwhm0 = max((j_hi - j_lo + 1) * hist.bin_width, hist.bin_width)
    delta0 = fwhm0 / _FWHM_PER_SIGMA

    floor0, _ = _far_floor(t, counts, t[i_max], fwhm0)

    # least squares in scaled coordinates so all four parameters are O(1)
    t_ref = float(t[i_max])
    t_scale = max(delta0, hist.bin_width)
    y_scale = max(counts[i_max] - floor0, 1.0)
    u = (t - t_ref) / t_scale
    z = (counts - floor0) / y_scale

    def gauss(uu: np.ndarray, amp: float, mu: float, sd: float, c: float):
        return c + amp * np.exp(-((uu - mu) ** 2) / (2.0 * sd**2))

    try:
        popt, _ = curve_fit(gauss, u, z, p0=(1.0, 0.0, 1.0, 0.0),
                            maxfev=20000)
    except RuntimeError as exc:
        raise RuntimeError(
            f"coincidence-peak fit did not converge (peak {counts[i_max]:.3g}"
            f" counts at {t_ref:.3e} s over floor {floor0:.3g}): {exc}"
        ) from exc
    amp = float(popt[0]) * y_scale
    mu = t_ref + float(popt[1]) * t_scale
    delta = abs(float(popt[2])) * t_scale
    if amp <= 0.0 or delta <= 0.0:
        raise RuntimeError(
            "coincidence-peak fit collapsed to a non-positive peak "
            f"(amplitude {amp:.3g}, width {delta:.3g})")
    fwhm = _FWHM_PER_SIGMA * delta

    floor, _ = _far_floor(t, counts, mu, fwhm)
    floor = max(floor, 1e-300)
    win = window if window is not None else window_factor * delta
    win = max(win, hist.bin_width)

    def window_counts(width: float) -> float:
        sel = np.abs(t - mu) <= 0.5 * width
        return float(counts[sel].sum())

    def window_bins(width: float) -> int:
        return int(np.count_nonzero(np.abs(t - mu) <= 0.5 * width))

    n_win = max(window_bins(win), 1)
    accidental = floor * n_win
    car = window_counts(win) / accidental

    widths = np.linspace(hist.bin_width, max_curve_window, n_curve)
    curve = np.array([window_counts(w) / accidental for w in widths])

    # peak area in counts -> detected pair rate normalised per t_coin bin
    area = amp * math.sqrt(2.0 * math.pi) * delta / hist.bin_width
    g2_zero = 1.0 + area * hist.bin_width / (floor * t_coin)
    gamma = nonclassicality_gamma(g2_zero, auto_correlation, auto_correlation)
    return CorrelationResult(
        t=t,
        g2_si_t=counts / floor,
        g2_si_zero=g2_zero,
        g2_ss_zero=auto_correlation,
        g2_ii_zero=auto_correlation,
        gamma=gamma,
        car=car,
        window=win,
        delta=delta,
        peak_center=float(mu),
        floor_per_bin=floor,
        car_windows=widths,
        car_vs_window=curve,
    )


def _flat_result(
    hist: CoincidenceHistogram,
    counts: np.ndarray,
    floor: float,
    auto_correlation: float,
    window: float,
    t_coin: float,
    n_curve: int,
    max_curve_window: float,
) -> CorrelationResult:
    """CAR evaluation for a histogram with no resolvable peak."""
    t = hist.t
    floor = max(floor, 1e-300)

    def window_counts(width: float) -> float:
        sel = np.abs(t) <= 0.5 * width
        return float(counts[sel].sum())

    n_win = int(np.count_nonzero(np.abs(t) <= 0.5 * window))
    accidental = floor * max(n_win, 1)
    car = window_counts(window) / accidental
    widths = np.linspace(hist.bin_width, max_curve_window, n_curve)
    curve = np.array([window_counts(w) / accidental for w in widths])
    g2_t = counts / floor
    g2_zero = float(g2_t[np.argmin(np.abs(t))])
    gamma = nonclassicality_gamma(max(g2_zero, 0.0), auto_correlation,
                                  auto_correlation)
    return CorrelationResult(
        t=t,
        g2_si_t=g2_t,
        g2_si_zero=g2_zero,
        g2_ss_zero=auto_correlation,
        g2_ii_zero=auto_correlation,
        gamma=gamma,
        car=car,
        window=window,
        delta=float("nan"),
        peak_center=0.0,
        floor_per_bin=floor,
        car_windows=widths,
        car_vs_window=curve,
    )

"""Single-resonance transmission models and parameter extraction.

A driven resonator side-coupled to a feeding channel shows the dip
``T0 = 1 - kappa_ext/(kappa/2 - i*(omega - omega_0 + 2*g_nl*n_res))``,
with the circulating occupation ``n_res`` solving a self-consistent cubic
when the Kerr shift matters.  Chip facets add a Fabry-Perot etalon around
it.  This module provides those forward models, a damped least-squares
fitter extracting (omega_0, kappa_ext, kappa_int, facet) with
uncertainties, quality-factor composition, and the linear maps between
defect phase, heater power, and resonance wavelength.

Conventions
-----------
* Angular frequencies and decay rates in rad/s, wavelengths in metres --
  except :class:`CalibrationMap`, whose slopes are nm/rad and nm/mW to
  match how tuning curves are usually quoted.
* The Kerr term red-shifts the resonance; on a bistable fold the branch
  is chosen by continuation along the sweep direction (wavelength
  increasing by default, the way a laser sweep traces it).
* Facet reflection/transmission coefficients are real and non-negative;
  all propagation phase is carried by ``phi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constants import C0, HBAR

__all__ = [
    "FacetParams",
    "ResonanceParams",
    "KerrSteadyState",
    "CalibrationMap",
    "FitResult",
    "kerr_occupation",
    "kerr_t0",
    "facet_transmission",
    "q_compose",
    "fit_resonance",
    "calibrate_phase",
]


@dataclass(frozen=True)
class FacetParams:
    """Facet Fabry-Perot parameters: field reflection/transmission and
    the round-trip propagation phase of the enclosed path."""

    r1: float = 0.0
    r2: float = 0.0
    t1: float = 1.0
    t2: float = 1.0
    phi: float = 0.0

    def __post_init__(self) -> None:
        for name in ("r1", "r2", "t1", "t2"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative (phase lives in phi)")
        for r, t in ((self.r1, self.t1), (self.r2, self.t2)):
            if r * r + t * t > 1.0 + 1e-12:
                raise ValueError("facet must be passive: r^2 + t^2 <= 1")


@dataclass(frozen=True)
class ResonanceParams:
    """One resonance coupled to its feeding channel, seen through facets.

    ``g_nl`` is the Kerr shift per circulating photon (rad/s, 0 for the
    linear model).  Quality factors derive from the decay rates, so
    ``1/q_t == 1/q_e + 1/q_i`` holds exactly.
    """

    omega_0: float
    kappa_ext: float
    kappa_int: float
    g_nl: float = 0.0
    facet: FacetParams = field(default_factory=FacetParams)

    def __post_init__(self) -> None:
        if self.omega_0 <= 0.0:
            raise ValueError("omega_0 must be positive")
        if self.kappa_ext < 0.0 or self.kappa_int < 0.0:
            raise ValueError("decay rates must be non-negative")
        if self.kappa_ext + self.kappa_int <= 0.0:
            raise ValueError("total decay rate must be positive")
        if self.g_nl < 0.0:
            raise ValueError("g_nl must be non-negative")

    @property
    def kappa(self) -> float:
        return self.kappa_ext + self.kappa_int

    @property
    def q_t(self) -> float:
        return self.omega_0 / self.kappa

    @property
    def q_e(self) -> float:
        return self.omega_0 / self.kappa_ext if self.kappa_ext > 0 else math.inf

    @property
    def q_i(self) -> float:
        return self.omega_0 / self.kappa_int if self.kappa_int > 0 else math.inf

    @property
    def lam_0(self) -> float:
        """Resonance wavelength (m)."""
        return 2.0 * math.pi * C0 / self.omega_0


@dataclass(frozen=True)
class KerrSteadyState:
    """Self-consistent circulating occupation along a frequency sweep."""

    n_res: np.ndarray
    bistable: bool


def _kerr_roots(delta: float, g: float, half_kappa_sq: float,
                flux: float) -> list[float]:
    """Positive real roots of ``n*(half_kappa_sq + (delta + 2 g n)^2) = flux``."""
    if g == 0.0 or flux == 0.0:
        return [flux / (half_kappa_sq + delta * delta)]
    roots = np.roots([4.0 * g * g, 4.0 * g * delta,
                      half_kappa_sq + delta * delta, -flux])
    out = [float(r.real) for r in roots
           if abs(r.imag) <= 1e-9 * max(abs(r), 1.0) and r.real > 0.0]
    return sorted(out) if out else [flux / (half_kappa_sq + delta * delta)]


def kerr_occupation(
    params: ResonanceParams,
    omega: np.ndarray,
    power: float,
    sweep: str = "wavelength-up",
) -> KerrSteadyState:
    """Circulating photon number along a swept drive of on-chip ``power``.

    Each frequency solves the cubic self-consistency between the Kerr
    shift and the Lorentzian response.  Where three branches coexist the
    one continuing the previous sweep point is kept, mimicking how a
    swept laser traces a bistable resonance; ``bistable`` reports whether
    any point had multiple branches.  ``sweep`` is ``"wavelength-up"``
    (frequency decreasing) or ``"wavelength-down"``.
    """
    if power < 0.0:
        raise ValueError("power must be non-negative")
    if sweep not in ("wavelength-up", "wavelength-down"):
        raise ValueError("sweep must be 'wavelength-up' or 'wavelength-down'")
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    order = np.argsort(w)
    if sweep == "wavelength-up":
        order = order[::-1]
    half_kappa_sq = (0.5 * params.kappa) ** 2
    n_out = np.empty_like(w)
    bistable = False
    n_prev: float | None = None
    for idx in order:
        flux = params.kappa_ext * power / (HBAR * w[idx])
        roots = _kerr_roots(w[idx] - params.omega_0, params.g_nl,
                            half_kappa_sq, flux)
        if len(roots) > 1:
            bistable = True
        if n_prev is None:
            pick = roots[0]
        else:
            pick = min(roots, key=lambda r: abs(r - n_prev))
        n_out[idx] = pick
        n_prev = pick
    return KerrSteadyState(n_out, bistable)


def kerr_t0(
    params: ResonanceParams,
    omega: np.ndarray,
    power: float = 0.0,
    sweep: str = "wavelength-up",
    with_state: bool = False,
):
    """Complex through-channel amplitude ``T0(omega)`` of the resonance.

    At zero power (or ``g_nl = 0``) this is the linear Lorentzian
    ``1 - kappa_ext/(kappa/2 - i*(omega - omega_0))``; otherwise the
    resonance is self-consistently shifted by ``2*g_nl*n_res``.  With
    ``with_state`` the :class:`KerrSteadyState` (including the
    bistability flag) is returned alongside.
    """
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    if power > 0.0 and params.g_nl > 0.0:
        state = kerr_occupation(params, w, power, sweep)
    else:
        state = KerrSteadyState(np.zeros_like(w), False)
    detune = w - params.omega_0 + 2.0 * params.g_nl * state.n_res
    t0 = 1.0 - params.kappa_ext / (0.5 * params.kappa - 1j * detune)
    if with_state:
        return t0, state
    return t0


def facet_transmission(
    params: ResonanceParams,
    omega: np.ndarray,
    power: float = 0.0,
    sweep: str = "wavelength-up",
) -> np.ndarray:
    """Power transmission through the facet etalon dressing the resonance.

    ``T = |t1 t2|^2 |T0|^2 / |1 - r1 r2 T0^2 exp(-i phi)|^2``; the
    denominator is the round trip between the two facets through the
    resonance.  Raises if ``r1*r2 >= 1`` (no passive steady state).
    """
    f = params.facet
    rho = f.r1 * f.r2
    if rho >= 1.0:
        raise ValueError("facet round-trip reflection r1*r2 must be below 1")
    t0 = kerr_t0(params, omega, power, sweep)
    num = (f.t1 * f.t2) ** 2 * np.abs(t0) ** 2
    den = np.abs(1.0 - rho * t0 * t0 * np.exp(-1j * f.phi)) ** 2
    return num / den


def q_compose(q_e: float, q_i: float) -> float:
    """Loaded quality factor from extrinsic and intrinsic ones."""
    if q_e <= 0.0 or q_i <= 0.0:
        raise ValueError("quality factors must be positive")
    return 1.0 / (1.0 / q_e + 1.0 / q_i)


# --------------------------------------------------------------------------
# fitting


@dataclass(frozen=True)
class FitResult:
    """Outcome of a resonance fit.

    ``params`` is the selected solution; ``params_swapped`` the
    best-converged solution of the opposite coupling regime (extrinsic
    and intrinsic rates roughly exchanged), when one exists.
    ``uncertainties`` holds one-standard-deviation estimates from the
    residual covariance for omega_0, kappa_ext, kappa_int, q_t, q_e, q_i.
    ``degenerate`` marks fits where both regimes describe the data equally
    well (a bare Lorentzian dip cannot tell them apart).
    """

    params: ResonanceParams
    params_swapped: ResonanceParams | None
    uncertainties: dict[str, float]
    residual_rms: float
    coupling: str
    degenerate: bool
    cost: float

    @property
    def q_t(self) -> float:
        return self.params.q_t

    @property
    def q_e(self) -> float:
        return self.params.q_e

    @property
    def q_i(self) -> float:
        return self.params.q_i


def _fit_model(omega: np.ndarray, x: np.ndarray, omega_ref: float,
               kappa_ref: float) -> np.ndarray:
    """Transmission model in scaled fit coordinates."""
    omega_0 = omega_ref + x[0] * kappa_ref
    kappa_e = math.exp(x[1]) * kappa_ref
    kappa_i = math.exp(x[2]) * kappa_ref
    amp = math.exp(x[3])
    rho = x[4]
    phi = x[5]
    kappa = kappa_e + kappa_i
    t0 = 1.0 - kappa_e / (0.5 * kappa - 1j * (omega - omega_0))
    den = np.abs(1.0 - rho * t0 * t0 * np.exp(-1j * phi)) ** 2
    return amp * np.abs(t0) ** 2 / den


def _clip_x(x: np.ndarray) -> np.ndarray:
    x = x.copy()
    x[4] = min(max(x[4], 0.0), 0.99)
    # amplitude cannot exceed what passive facets allow: sqrt(A) <= 1 - rho
    max_ln_amp = 2.0 * math.log(max(1.0 - x[4], 1e-6))
    x[3] = min(x[3], max_ln_amp)
    x[1] = min(max(x[1], -12.0), 12.0)
    x[2] = min(max(x[2], -12.0), 12.0)
    return x


def _levenberg_marquardt(residual, x0: np.ndarray, max_iter: int = 200):
    """Damped least squares with central finite-difference Jacobians."""
    x = _clip_x(np.asarray(x0, dtype=float))
    r = residual(x)
    cost = 0.5 * float(r @ r)
    lam = 1e-3
    converged = False
    for _ in range(max_iter):
        jac = np.empty((r.size, x.size))
        for j in range(x.size):
            h = 1e-6 * max(abs(x[j]), 1.0)
            xp = x.copy(); xp[j] += h
            xm = x.copy(); xm[j] -= h
            jac[:, j] = (residual(xp) - residual(xm)) / (2.0 * h)
        g = jac.T @ r
        h_mat = jac.T @ jac
        accepted = False
        for _ in range(40):
            try:
                step = np.linalg.solve(
                    h_mat + lam * np.diag(np.maximum(np.diag(h_mat), 1e-12)),
                    -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            x_new = _clip_x(x + step)
            r_new = residual(x_new)
            cost_new = 0.5 * float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new <= cost:
                improved = cost - cost_new
                x, r, cost = x_new, r_new, cost_new
                lam = max(lam * 0.3, 1e-12)
                accepted = True
                if (improved <= 1e-14 * (cost + 1e-30)
                        or float(np.max(np.abs(step))) < 1e-10):
                    converged = True
                break
            lam *= 10.0
        if not accepted:
            converged = True     # no downhill direction left
            break
        if converged:
            break
    return x, r, cost, converged


def _decode(x: np.ndarray, omega_ref: float, kappa_ref: float,
            g_nl: float = 0.0) -> ResonanceParams:
    rho = min(max(x[4], 0.0), 0.99)
    amp = math.exp(x[3])
    amp = min(amp, (1.0 - rho) ** 2)
    r = math.sqrt(rho)
    t = amp ** 0.25
    return ResonanceParams(
        omega_0=omega_ref + x[0] * kappa_ref,
        kappa_ext=math.exp(x[1]) * kappa_ref,
        kappa_int=math.exp(x[2]) * kappa_ref,
        g_nl=g_nl,
        facet=FacetParams(r, r, t, t, x[5] % (2.0 * math.pi)),
    )


def fit_resonance(
    spectrum,
    transmission: np.ndarray | None = None,
    coupling: str = "auto",
) -> FitResult:
    """Extract resonance parameters from a transmission dip.

    ``spectrum`` is either an object with ``wavelength`` (m) and
    ``transmission`` attributes or a wavelength array, in which case
    ``transmission`` must be given.  The spectrum must contain one
    dominant dip sampled by several points per linewidth.

    The model (linear resonance dressed by a facet etalon) is fitted by
    damped least squares with central finite-difference Jacobians from
    five heuristic starts: extinction-matched under- and over-coupled
    splits, a balanced split, and weak-etalon variants.  A bare
    Lorentzian determines the extrinsic/intrinsic split only up to
    exchange; ``coupling`` selects ``"under"`` (kappa_ext < kappa_int),
    ``"over"``, or ``"auto"`` (lowest residual, under-coupled on a tie,
    with ``degenerate=True`` marking indistinguishable fits).

    Raises ``RuntimeError`` when no start converges, or when a forced
    coupling regime has no converged solution.
    """
    if coupling not in ("auto", "under", "over"):
        raise ValueError("coupling must be 'auto', 'under', or 'over'")
    if transmission is None:
        lam = np.asarray(spectrum.wavelength, dtype=float)
        y = np.asarray(spectrum.transmission, dtype=float)
    else:
        lam = np.asarray(spectrum, dtype=float)
        y = np.asarray(transmission, dtype=float)
    if lam.ndim != 1 or lam.size < 12 or y.shape != lam.shape:
        raise ValueError("need matching 1-D arrays with at least 12 samples")
    omega = 2.0 * math.pi * C0 / lam
    order = np.argsort(omega)
    omega = omega[order]
    y = y[order]

    # dip heuristics
    i_min = int(np.argmin(y))
    n_edge = max(3, y.size // 10)
    base = float(np.median(np.concatenate([y[:n_edge], y[-n_edge:]])))
    base = max(base, float(np.max(y)) * 0.5, 1e-12)
    depth = max(base - y[i_min], 1e-6 * base)
    extinction = max(y[i_min], 0.0) / base
    omega_ref = float(omega[i_min])
    half = y < base - 0.5 * depth
    kappa_ref = float(np.ptp(omega[half])) if np.count_nonzero(half) > 1 else \
        float(omega[min(i_min + 1, omega.size - 1)] - omega[max(i_min - 1, 0)])
    kappa_ref = max(kappa_ref, float(np.diff(omega).mean()))

    # extinction fixes kappa_ext/kappa up to under/over exchange
    s = math.sqrt(min(max(extinction, 0.0), 1.0))
    frac_under = 0.5 * (1.0 - s)
    frac_over = 0.5 * (1.0 + s)
    ln_amp = math.log(base)

    def start(frac: float, rho: float, phi: float) -> np.ndarray:
        frac = min(max(frac, 1e-3), 1.0 - 1e-3)
        return np.array([0.0, math.log(frac), math.log(1.0 - frac),
                         ln_amp, rho, phi])

    starts = [
        start(frac_under, 0.0, 0.0),
        start(frac_over, 0.0, 0.0),
        start(0.5, 0.0, 0.0),
        start(frac_under, 0.05, 0.5 * math.pi),
        start(frac_over, 0.05, -0.5 * math.pi),
    ]

    def residual(x: np.ndarray) -> np.ndarray:
        return _fit_model(omega, x, omega_ref, kappa_ref) - y

    fits = []
    for x0 in starts:
        x, r, cost, ok = _levenberg_marquardt(residual, x0)
        if ok and np.isfinite(cost):
            fits.append((cost, x, r))
    if not fits:
        raise RuntimeError(
            "resonance fit did not converge from any start "
            f"(dip at {2*math.pi*C0/omega_ref*1e9:.4f} nm, depth {depth:.3g}, "
            f"baseline {base:.3g})")

    def regime(x: np.ndarray) -> str:
        return "under" if x[1] < x[2] else "over"

    best: dict[str, tuple[float, np.ndarray, np.ndarray]] = {}
    for cost, x, r in fits:
        key = regime(x)
        if key not in best or cost < best[key][0]:
            best[key] = (cost, x, r)

    tol = 1e-9
    degenerate = (len(best) == 2 and
                  abs(best["under"][0] - best["over"][0])
                  <= tol * (1.0 + min(best["under"][0], best["over"][0])))
    if coupling == "auto":
        if degenerate:
            key = "under"
        else:
            key = min(best, key=lambda k: best[k][0])
    else:
        if coupling not in best:
            raise RuntimeError(
                f"no converged fit in the requested '{coupling}'-coupled "
                f"regime (found: {sorted(best)})")
        key = coupling
    cost, x, r = best[key]
    other = next((k for k in best if k != key), None)
    params = _decode(x, omega_ref, kappa_ref)
    params_swapped = (_decode(best[other][1], omega_ref, kappa_ref)
                      if other is not None else None)

    # covariance of the scaled parameters at the optimum
    jac = np.empty((r.size, x.size))
    for j in range(x.size):
        h = 1e-6 * max(abs(x[j]), 1.0)
        xp = x.copy(); xp[j] += h
        xm = x.copy(); xm[j] -= h
        jac[:, j] = (residual(xp) - residual(xm)) / (2.0 * h)
    dof = max(r.size - x.size, 1)
    sigma2 = float(r @ r) / dof
    cov_x = sigma2 * np.linalg.pinv(jac.T @ jac)
    # physical covariance for (omega_0, kappa_ext, kappa_int)
    scale = np.array([kappa_ref,
                      math.exp(x[1]) * kappa_ref,
                      math.exp(x[2]) * kappa_ref])
    cov_p = cov_x[:3, :3] * np.outer(scale, scale)
    w0, ke, ki = params.omega_0, params.kappa_ext, params.kappa_int

    def q_sigma(grad: np.ndarray) -> float:
        return float(math.sqrt(max(grad @ cov_p @ grad, 0.0)))

    unc = {
        "omega_0": float(math.sqrt(max(cov_p[0, 0], 0.0))),
        "kappa_ext": float(math.sqrt(max(cov_p[1, 1], 0.0))),
        "kappa_int": float(math.sqrt(max(cov_p[2, 2], 0.0))),
        "q_t": q_sigma(np.array([1.0 / (ke + ki),
                                 -w0 / (ke + ki) ** 2,
                                 -w0 / (ke + ki) ** 2])),
        "q_e": q_sigma(np.array([1.0 / ke, -w0 / ke**2, 0.0])),
        "q_i": q_sigma(np.array([1.0 / ki, 0.0, -w0 / ki**2])),
    }
    rms = math.sqrt(float(r @ r) / r.size)
    return FitResult(params, params_swapped, unc, rms, key, degenerate,
                     cost)


# --------------------------------------------------------------------------
# tuning calibration


@dataclass(frozen=True)
class CalibrationMap:
    """Linear wavelength tuning maps of a defect resonance.

    ``slope_lam_phase`` is d(lambda)/d(delta_phi) in nm/rad;
    ``slope_lam_heat`` is d(lambda)/d(p_heat) in nm/mW.  ``reference``
    anchors the absolute placement of the phase line as
    ``(delta_phi_ref, lambda_ref_nm)``; either slope is NaN when its
    samples were not provided.  ``lam_at_zero_heat`` is the heater line's
    own intercept (nm).
    """

    slope_lam_phase: float
    slope_lam_heat: float
    reference: tuple[float, float]
    r2_phase: float
    r2_heat: float
    lam_at_zero_heat: float

    def lam_of_phase(self, delta_phi: float) -> float:
        """Resonance wavelength (nm) at defect phase ``delta_phi`` (rad)."""
        if math.isnan(self.slope_lam_phase):
            raise ValueError("no phase samples were fitted")
        phi_ref, lam_ref = self.reference
        return lam_ref + self.slope_lam_phase * (delta_phi - phi_ref)

    def phase_of_lam(self, lam_nm: float) -> float:
        """Defect phase (rad) placing the resonance at ``lam_nm``."""
        if math.isnan(self.slope_lam_phase) or self.slope_lam_phase == 0.0:
            raise ValueError("no usable phase slope")
        phi_ref, lam_ref = self.reference
        return phi_ref + (lam_nm - lam_ref) / self.slope_lam_phase

    def lam_of_heat(self, p_heat_mw: float) -> float:
        """Resonance wavelength (nm) at heater power ``p_heat_mw`` (mW)."""
        if math.isnan(self.slope_lam_heat):
            raise ValueError("no heater samples were fitted")
        return self.lam_at_zero_heat + self.slope_lam_heat * p_heat_mw

    def phase_of_heat(self, p_heat_mw: float) -> float:
        """Composed map: defect phase reached at a given heater power."""
        return self.phase_of_lam(self.lam_of_heat(p_heat_mw))


def _line_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    if x.size < 2:
        raise ValueError("need at least two samples for a line")
    if float(np.ptp(x)) == 0.0:
        raise ValueError("samples are rank deficient: all abscissae equal")
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot <= 1e-300 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r2


def calibrate_phase(
    phase_samples=None,
    heater_samples=None,
    reference: tuple[float, float] | None = None,
) -> CalibrationMap:
    """Fit the linear wavelength tuning maps of a defect resonance.

    ``phase_samples`` is an iterable of ``(delta_phi rad, lambda nm)``;
    ``heater_samples`` of ``(p_heat mW, lambda nm)``.  Either may be
    omitted, but not both.  Slopes come from least-squares lines (R^2
    reported per map); ``reference`` optionally anchors the phase line at
    an absolute ``(delta_phi_ref, lambda_ref_nm)`` point -- tuning slopes
    transfer between model and device better than absolute offsets, so an
    externally measured anchor can replace the fitted intercept.  Rank-
    deficient sample sets (fewer than two points, or all abscissae equal)
    raise ``ValueError``.
    """
    if phase_samples is None and heater_samples is None:
        raise ValueError("need phase samples, heater samples, or both")

    slope_p = math.nan
    r2_p = math.nan
    ref = reference
    if phase_samples is not None:
        arr = np.asarray(list(phase_samples), dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError("phase_samples must be (delta_phi, lambda_nm) pairs")
        slope_p, icpt_p, r2_p = _line_fit(arr[:, 0], arr[:, 1])
        if ref is None:
            phi_mid = float(arr[:, 0].mean())
            ref = (phi_mid, slope_p * phi_mid + icpt_p)
    if ref is None:
        ref = (math.nan, math.nan)

    slope_h = math.nan
    r2_h = math.nan
    lam0_h = math.nan
    if heater_samples is not None:
        arr = np.asarray(list(heater_samples), dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError("heater_samples must be (p_heat_mw, lambda_nm) pairs")
        slope_h, lam0_h, r2_h = _line_fit(arr[:, 0], arr[:, 1])

    return CalibrationMap(slope_p, slope_h, ref, r2_p, r2_h, lam0_h)

"""Command-line front end: reproducible experiment recipes.

Every subcommand reads one structured configuration file, runs one recipe on
the validated parameters, and writes plain data files (CSV for tables, JSON
for summaries) plus a run manifest into the output directory.  Numbers are
written with 17 significant digits so reruns can be compared byte for byte;
files are written atomically (temp file + rename) so an interrupted run
never leaves a partial file behind.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 I/O failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .bands import (bulk_bands, chern_number, fdmr_band, find_gaps,
                    flat_band_index, ribbon_spectrum)
from .biphoton import (PumpDrive, ThresholdError, effective_coupling,
                       pair_rate_closed_form, pair_rate_numeric, single_rates,
                       zeta_amplitudes)
from .config import ConfigError, RunConfig, default_config_path, load_config
from .counts import (PairSourceModel, detected_rates, expected_car,
                     expected_g2_zero, fit_peak_and_car, synthetic_histogram)
from .lattice import SUBLATTICES, PhaseDefect, build_finite_geometry, ring_positions
from .resonance import calibrate_phase, fit_resonance
from .transport import (disorder_ensemble, find_resonances, steady_state,
                        transmission_spectrum, with_defect)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

WORKERS_ENV = "FLOQUET_RINGS_WORKERS"

_NUMERICAL_ERRORS = (ThresholdError, RuntimeError, FloatingPointError,
                     ArithmeticError, np.linalg.LinAlgError)


# ---------------------------------------------------------------------------
# serialization helpers
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    """One CSV cell: full round-trip precision for floats."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def _csv_bytes(columns) -> bytes:
    """``columns`` is a list of (name, sequence); all the same length."""
    names = [name for name, _ in columns]
    arrays = [list(values) for _, values in columns]
    n = len(arrays[0])
    if any(len(a) != n for a in arrays):
        raise ValueError("CSV columns must share one length")
    lines = [",".join(names)]
    for i in range(n):
        lines.append(",".join(_fmt(a[i]) for a in arrays))
    return ("\n".join(lines) + "\n").encode()


def _jsonable(obj):
    """Convert numpy scalars/arrays and NaN to plain JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return None if math.isnan(f) else f
    return obj


def _json_bytes(obj) -> bytes:
    return (json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n").encode()


class RunWriter:
    """Collects output payloads, then writes them atomically plus a manifest."""

    def __init__(self, out_dir: Path):
        self.out_dir = Path(out_dir)
        self.entries: list[tuple[str, bytes]] = []

    def add_csv(self, name: str, columns) -> None:
        self.entries.append((name, _csv_bytes(columns)))

    def add_json(self, name: str, obj) -> None:
        self.entries.append((name, _json_bytes(obj)))

    def _write_atomic(self, name: str, payload: bytes) -> None:
        target = self.out_dir / name
        tmp = target.with_name(target.name + f".tmp-{os.getpid()}")
        try:
            tmp.write_bytes(payload)
            os.replace(tmp, target)
        finally:
            tmp.unlink(missing_ok=True)

    def commit(self, manifest: dict) -> list[str]:
        """Write every staged file, then the manifest; returns file names."""
        self.out_dir.mkdir(parents=True, exist_ok=True)
        outputs = []
        for name, payload in self.entries:
            self._write_atomic(name, payload)
            outputs.append({
                "name": name,
                "sha256": hashlib.sha256(payload).hexdigest(),
                "bytes": len(payload),
            })
        manifest = dict(manifest, outputs=outputs)
        self._write_atomic("manifest.json", _json_bytes(manifest))
        return [o["name"] for o in outputs] + ["manifest.json"]


# ---------------------------------------------------------------------------
# shared pieces
# ---------------------------------------------------------------------------

def _geometry(cfg: RunConfig, with_defect_flag: bool = True):
    defect = (cfg.defect.defect
              if with_defect_flag and cfg.defect is not None else None)
    return build_finite_geometry(
        cfg.lattice,
        defect=defect,
        theta_io=cfg.ports.theta_io,
        input_site=cfg.ports.input_site,
        output_site=cfg.ports.output_site,
    )


def _require_defect(cfg: RunConfig):
    if cfg.defect is None:
        raise ConfigError("this command needs a 'defect' section in the config")
    return cfg.defect


def _worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}")
    if n < 1:
        raise ConfigError(f"{WORKERS_ENV} must be >= 1, got {n}")
    return n


def _pair_rate_per_w2(cfg: RunConfig) -> float:
    """Pair rate / P^2 from the configured modes (exact: the rate is
    quadratic in power throughout the weak-pumping regime)."""
    p_ref = 1e-4
    drive = PumpDrive(p_ref, cfg.sfwm.pump.omega_laser)
    return pair_rate_closed_form(cfg.sfwm.modes, drive,
                                 cfg.sfwm.coupling.g_nl) / p_ref**2


def _pair_source(cfg: RunConfig) -> PairSourceModel:
    return PairSourceModel(
        _pair_rate_per_w2(cfg),
        broken_ratio_s=cfg.sfwm.broken_ratio_signal,
        broken_ratio_i=cfg.sfwm.broken_ratio_idler,
    )


def _resonance_params_json(params) -> dict:
    return {
        "omega_0": params.omega_0,
        "lam_0_nm": params.lam_0 * 1e9,
        "kappa_ext": params.kappa_ext,
        "kappa_int": params.kappa_int,
        "q_t": params.q_t,
        "q_e": params.q_e,
        "q_i": params.q_i,
        "facet": {
            "r1": params.facet.r1,
            "r2": params.facet.r2,
            "t1": params.facet.t1,
            "t2": params.facet.t2,
            "phi": params.facet.phi,
        },
    }


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_bands(cfg: RunConfig, args, writer: RunWriter) -> str:
    spec = bulk_bands(cfg.lattice, n_k=41)
    nk = spec.kx.size
    kx_col, ky_col = np.meshgrid(spec.kx, spec.ky, indexing="ij")
    writer.add_csv("bands.csv", [
        ("kx_rad_per_m", kx_col.ravel()),
        ("ky_rad_per_m", ky_col.ravel()),
        ("quasienergy_1", spec.quasienergy[:, :, 0].ravel()),
        ("quasienergy_2", spec.quasienergy[:, :, 1].ravel()),
        ("quasienergy_3", spec.quasienergy[:, :, 2].ravel()),
    ])
    flat = flat_band_index(spec)
    flat_dev = float(np.max(np.abs(spec.quasienergy[:, :, flat])))
    cherns = [chern_number(spec, b) for b in range(3)]
    gaps = find_gaps(spec)
    writer.add_json("gaps.json", {
        "n_k": nk,
        "gaps": [{"lo": lo, "hi": hi,
                  "width": float(np.mod(hi - lo, 2.0 * math.pi))}
                 for lo, hi in gaps],
        "flat_band_index": flat,
        "flat_band_max_abs": flat_dev,
        "chern_numbers": [int(round(c)) for c in cherns],
        "chern_residuals": [float(c - round(c)) for c in cherns],
    })
    return f"{len(gaps)} gaps, flat-band deviation {flat_dev:.2e}"


def cmd_ribbon(cfg: RunConfig, args, writer: RunWriter) -> str:
    rib = ribbon_spectrum(cfg.lattice, ny=cfg.lattice.ny)
    nk, nb = rib.quasienergy.shape
    kx = np.repeat(rib.kx, nb)
    branch = np.tile(np.arange(nb), nk)
    writer.add_csv("ribbon.csv", [
        ("kx_rad_per_m", kx),
        ("branch", branch),
        ("quasienergy", rib.quasienergy.ravel()),
        ("weight_bottom", rib.weight_bottom.ravel()),
        ("weight_top", rib.weight_top.ravel()),
        ("label", rib.labels.ravel()),
    ])
    n_edge = int(np.sum(rib.labels != "bulk"))
    return f"{nk} momenta x {nb} branches, {n_edge} edge-labelled states"


def cmd_fdmr(cfg: RunConfig, args, writer: RunWriter) -> str:
    dc = _require_defect(cfg)
    grid = dc.sweep_grid()
    # a full round-trip detune (multiples of 2*pi) is gauge-trivial:
    # no in-gap state exists there, so those samples are excluded
    mask = np.abs(grid / math.pi - 2.0) > 0.049
    if not mask.any():
        raise ConfigError("defect sweep range contains only the "
                          "gauge-trivial detune window around 2*pi")
    sweep = fdmr_band(cfg.lattice, grid[mask],
                      defect_site=dc.defect.site, steps=dc.defect.steps)
    coeffs, r2 = _line_with_r2(sweep.delta_phi, sweep.eps_tracked)
    writer.add_csv("fdmr_sweep.csv", [
        ("delta_phi_rad", sweep.delta_phi),
        ("delta_phi_pi", sweep.delta_phi / math.pi),
        ("quasienergy_tracked", sweep.eps_tracked),
        ("quasienergy_in_gap", sweep.eps_in_gap),
        ("gap_index", sweep.gap_index),
        ("gap_fraction", sweep.gap_fraction),
        ("flatness", sweep.flatness),
        ("loop_weight", sweep.loop_weight),
        ("ipr", sweep.ipr),
    ])
    writer.add_json("fdmr.json", {
        "slope_quasienergy_per_rad": coeffs[0],
        "intercept": coeffs[1],
        "r_squared": r2,
        "max_flatness": float(np.max(sweep.flatness)),
        "min_loop_weight": float(np.min(sweep.loop_weight)),
        "n_points": int(sweep.delta_phi.size),
        "n_excluded_gauge_trivial": int(np.sum(~mask)),
        "gaps": [[lo, hi] for lo, hi in sweep.gaps],
    })
    return (f"slope {coeffs[0]:+.4f}/rad, R^2 {r2:.6f}, "
            f"max flatness {np.max(sweep.flatness):.2e}")


def _line_with_r2(x, y):
    coeffs = np.polyfit(x, y, 1)
    pred = np.polyval(coeffs, x)
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return coeffs, r2


def cmd_transmission(cfg: RunConfig, args, writer: RunWriter) -> str:
    geom = _geometry(cfg)
    spec = transmission_spectrum(geom, cfg.sweep.lam_min, cfg.sweep.lam_max,
                                 cfg.sweep.points)
    resos = find_resonances(spec)
    writer.add_csv("transmission.csv", [
        ("wavelength_nm", spec.wavelength * 1e9),
        ("transmission", spec.transmission),
        ("re_t", spec.t.real),
        ("im_t", spec.t.imag),
    ])
    writer.add_json("resonances.json", {
        "defect_on": cfg.defect is not None,
        "resonances": [{
            "lam0_nm": r.lam0 * 1e9,
            "fwhm_nm": r.fwhm * 1e9,
            "depth": r.depth,
            "q_loaded": r.q_loaded,
        } for r in resos],
    })
    return (f"{cfg.sweep.points} wavelengths, {len(resos)} resonances, "
            f"defect {'on' if cfg.defect is not None else 'off'}")


def cmd_fields(cfg: RunConfig, args, writer: RunWriter) -> str:
    lam = args.wavelength_nm * 1e-9
    if not 0.5 * cfg.sweep.lam_min < lam < 2.0 * cfg.sweep.lam_max:
        raise ConfigError("--wavelength-nm lies far outside the sweep band")
    geom = _geometry(cfg)
    state = steady_state(geom, lam)
    params = cfg.lattice
    intensity = state.ring_intensity()
    pos = ring_positions(params) * 1e6
    rings = np.arange(params.n_rings)
    cells, subs = np.divmod(rings, 3)
    ns, ms = np.divmod(cells, params.nx)
    writer.add_csv("fields.csv", [
        ("ring", rings),
        ("m", ms),
        ("n", ns),
        ("sublattice", [SUBLATTICES[s] for s in subs]),
        ("x_um", pos[:, 0]),
        ("y_um", pos[:, 1]),
        ("intensity", intensity),
    ])
    writer.add_json("fields.json", {
        "wavelength_nm": args.wavelength_nm,
        "through_power": abs(state.through) ** 2,
        "drop_power": abs(state.t_out) ** 2,
        "exiting_power": state.exiting_power(),
        "max_ring_intensity": float(np.max(intensity)),
        "argmax_ring": int(np.argmax(intensity)),
    })
    return (f"fields at {args.wavelength_nm:.4f} nm, "
            f"drop power {abs(state.t_out) ** 2:.4f}")


def cmd_disorder(cfg: RunConfig, args, writer: RunWriter) -> str:
    _require_defect(cfg)
    if cfg.disorder is None:
        raise ConfigError("this command needs a 'disorder' section in the config")
    workers = _worker_count()
    geom = _geometry(cfg)
    # anchor on the defect dip nearest the scan centre, then confine the
    # per-trial search to half a dip spacing around it so every trial
    # follows the same physical resonance
    dips = _defect_dips(geom, cfg.sweep.lam_min, cfg.sweep.lam_max,
                        cfg.sweep.points)
    if not dips:
        raise RuntimeError("no defect dip in the scan window; check the "
                           "defect detune and sweep range")
    centre = 0.5 * (cfg.sweep.lam_min + cfg.sweep.lam_max)
    anchor = min(dips, key=lambda r: abs(r.lam0 - centre))
    half_span = 0.85e-9
    summary = disorder_ensemble(geom, cfg.disorder,
                                anchor.lam0 - half_span,
                                anchor.lam0 + half_span,
                                n_workers=workers)
    writer.add_csv("disorder_trials.csv", [
        ("trial", np.arange(cfg.disorder.n_trials)),
        ("survived", summary.survived),
        ("lam0_nm", summary.lam0 * 1e9),
        ("q_loaded", summary.q_loaded),
        ("depth", summary.depth),
    ])
    writer.add_json("disorder_summary.json", {
        "survival_fraction": summary.survival_fraction,
        "lam0_ref_nm": summary.lam0_ref * 1e9,
        "q_ref": summary.q_ref,
        "median_abs_shift_nm": summary.median_abs_shift * 1e9,
        "max_abs_shift_nm": summary.max_abs_shift * 1e9,
        "median_rel_q_change": summary.median_rel_q_change,
        "max_rel_q_change": summary.max_rel_q_change,
        "sigma_g": cfg.disorder.sigma_g,
        "sigma_phi": cfg.disorder.sigma_phi,
        "n_trials": cfg.disorder.n_trials,
        "seed": cfg.disorder.seed,
    })
    return (f"survival {summary.survival_fraction:.0%} over "
            f"{cfg.disorder.n_trials} trials ({workers} worker(s))")


def cmd_sfwm(cfg: RunConfig, args, writer: RunWriter) -> str:
    modes = cfg.sfwm.modes
    g_nl = cfg.sfwm.coupling.g_nl
    omega_laser = cfg.sfwm.pump.omega_laser
    powers = cfg.sfwm.power_grid()
    g_vals, nc_num, nc_cf, ns_vals, ni_vals = [], [], [], [], []
    for p in powers:
        drive = PumpDrive(float(p), omega_laser)
        g_vals.append(effective_coupling(modes, drive, g_nl))
        amps = zeta_amplitudes(modes, drive, g_nl)
        nc_num.append(pair_rate_numeric(amps))
        nc_cf.append(pair_rate_closed_form(modes, drive, g_nl))
        n_s, n_i = single_rates(modes, drive, g_nl)
        ns_vals.append(n_s)
        ni_vals.append(n_i)
    writer.add_csv("sfwm_rates.csv", [
        ("power_w", powers),
        ("coupling_g_rad_per_s", g_vals),
        ("pair_rate_numeric", nc_num),
        ("pair_rate_closed_form", nc_cf),
        ("singles_signal", ns_vals),
        ("singles_idler", ni_vals),
    ])
    slope, _ = np.polyfit(np.log10(powers), np.log10(nc_num), 1)
    amps = zeta_amplitudes(modes, PumpDrive(cfg.sfwm.pump.power, omega_laser),
                           g_nl)
    writer.add_csv("biphoton_spectrum.csv", [
        ("omega_offset_rad_per_s", amps.omega - modes.omega["signal"]),
        ("abs_zeta11_sq", np.abs(amps.zeta11) ** 2),
    ])
    writer.add_json("sfwm.json", {
        "pair_rate_per_w2": _pair_rate_per_w2(cfg),
        "power_slope_log_log": float(slope),
        "worst_closed_form_rel_dev": float(np.max(np.abs(
            np.asarray(nc_num) / np.asarray(nc_cf) - 1.0))),
        "g_nl": g_nl,
        "pump_detuning": omega_laser - modes.omega["pump"],
        "n_powers": int(powers.size),
    })
    return (f"{powers.size} powers, log-log slope {slope:.4f}, "
            f"pair rate/P^2 = {_pair_rate_per_w2(cfg):.4e}")


def cmd_counts(cfg: RunConfig, args, writer: RunWriter) -> str:
    det = cfg.detection
    model = _pair_source(cfg)
    power = cfg.sfwm.pump.power
    rates = detected_rates(model.intrinsic_rates(power), det.chain, power)
    hist = synthetic_histogram(rates, det.delta_true,
                               n_bins=det.n_bins, bin_width=det.bin_width,
                               acquisition_time=det.acquisition_time,
                               seed=cfg.seed, stream=0)
    result = fit_peak_and_car(hist, flat_window=det.window, t_coin=det.t_coin)
    writer.add_csv("histogram.csv", [
        ("delay_ps", hist.t * 1e12),
        ("counts", hist.counts),
    ])
    writer.add_json("correlation.json", {
        "power_w": power,
        "detected_rates": {"coincidence": rates[0], "signal": rates[1],
                           "idler": rates[2]},
        "g2_si_zero": result.g2_si_zero,
        "g2_si_zero_expected_bare": expected_g2_zero(model, det.chain, power,
                                                     t_coin=det.t_coin),
        "g2_si_zero_expected_with_accidentals": expected_g2_zero(
            model, det.chain, power, t_coin=det.t_coin,
            include_accidentals=True),
        "gamma": result.gamma,
        "car": result.car,
        "car_expected": expected_car(model, det.chain, power,
                                     window=det.window, delta=det.delta_true),
        "window_ps": result.window * 1e12,
        "delta_ps": result.delta * 1e12,
        "fwhm_ps": result.fwhm * 1e12,
        "peak_center_ps": result.peak_center * 1e12,
        "floor_per_bin": result.floor_per_bin,
        "acquisition_s": det.acquisition_time,
        "car_vs_window": [[w * 1e12, c] for w, c in
                          zip(result.car_windows, result.car_vs_window)],
    })
    fwhm = result.fwhm * 1e12
    fwhm_txt = "flat" if math.isnan(fwhm) else f"FWHM {fwhm:.1f} ps"
    return f"g2(0) {result.g2_si_zero:.1f}, CAR {result.car:.1f}, {fwhm_txt}"


def cmd_fit(cfg: RunConfig, args, writer: RunWriter) -> str:
    path = Path(args.input)
    if not path.is_file():
        raise ConfigError(f"--input file {path} does not exist")
    try:
        table = np.genfromtxt(path, delimiter=",", names=True)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot parse {path} as a CSV table: {exc}")
    if table.dtype.names is None or "wavelength_nm" not in table.dtype.names:
        raise ConfigError(f"{path} needs a 'wavelength_nm' column")
    if "transmission" not in table.dtype.names:
        raise ConfigError(f"{path} needs a 'transmission' column")
    lam = np.asarray(table["wavelength_nm"], dtype=float) * 1e-9
    trans = np.asarray(table["transmission"], dtype=float)
    result = fit_resonance(lam, trans, coupling=args.coupling)
    writer.add_json("fit.json", {
        "input": str(path),
        "coupling": result.coupling,
        "degenerate": result.degenerate,
        "residual_rms": result.residual_rms,
        "cost": result.cost,
        "params": _resonance_params_json(result.params),
        "params_swapped": (None if result.params_swapped is None
                           else _resonance_params_json(result.params_swapped)),
        "uncertainties": result.uncertainties,
    })
    return (f"Q_t {result.q_t:.0f} ({result.coupling}-coupled"
            f"{', degenerate' if result.degenerate else ''}), "
            f"residual rms {result.residual_rms:.2e}")


def _defect_dips(geom, lam_min: float, lam_max: float, n_points: int,
                 min_depth: float = 0.5, min_q: float = 5.0e4):
    """Transmission dips that qualify as defect-resonance lines.

    The defect dips are simultaneously deep and narrow; the passband also
    carries deep-but-broad etalon features and narrow-but-shallow ripple,
    and the combined depth/Q threshold removes both.
    """
    spec = transmission_spectrum(geom, lam_min, lam_max, n_points)
    return [r for r in find_resonances(spec)
            if r.depth >= min_depth and r.q_loaded >= min_q]


def _predict_lam(samples, phi: float) -> float:
    if len(samples) >= 2:
        coeffs = np.polyfit([s[0] for s in samples],
                            [s[1] for s in samples], 1)
        return float(np.polyval(coeffs, phi))
    return samples[-1][1]


def cmd_calibrate(cfg: RunConfig, args, writer: RunWriter) -> str:
    dc = _require_defect(cfg)
    lo, hi = dc.sweep_phi
    n_samples = min(dc.sweep_points, 7)
    grid = [float(phi) for phi in np.linspace(lo, hi, n_samples)
            if abs(phi / math.pi - 2.0) > 0.049]
    if len(grid) < 2:
        raise ConfigError("defect sweep range leaves fewer than two "
                          "usable calibration samples")
    base = _geometry(cfg, with_defect_flag=False)
    samples = []        # (delta_phi rad, dip wavelength m)
    skipped = 0
    half_span = 0.45e-9
    for phi in grid:
        geom = with_defect(base, PhaseDefect(dc.defect.site, phi,
                                             dc.defect.steps))
        if not samples:
            dips = _defect_dips(geom, cfg.sweep.lam_min, cfg.sweep.lam_max,
                                cfg.sweep.points)
            centre = 0.5 * (cfg.sweep.lam_min + cfg.sweep.lam_max)
        else:
            centre = _predict_lam(samples, phi)
            dips = _defect_dips(geom, centre - half_span, centre + half_span,
                                361)
            dips = [r for r in dips if abs(r.lam0 - centre) < half_span]
        if not dips:
            skipped += 1
            continue
        dip = min(dips, key=lambda r: abs(r.lam0 - centre))
        samples.append((phi, dip.lam0))
    if len(samples) < 2:
        raise RuntimeError("defect dip was trackable at fewer than two "
                           "detunes; widen the sweep window")
    cal = calibrate_phase(
        phase_samples=[(phi, lam * 1e9) for phi, lam in samples])
    writer.add_csv("calibration_samples.csv", [
        ("delta_phi_rad", [s[0] for s in samples]),
        ("delta_phi_pi", [s[0] / math.pi for s in samples]),
        ("lam0_nm", [s[1] * 1e9 for s in samples]),
    ])
    writer.add_json("calibration.json", {
        "slope_lam_phase_nm_per_rad": cal.slope_lam_phase,
        "slope_lam_phase_nm_per_pi": cal.slope_lam_phase * math.pi,
        "r2_phase": cal.r2_phase,
        "reference_phi_rad": cal.reference[0],
        "reference_lam_nm": cal.reference[1],
        "n_samples": len(samples),
        "n_skipped": skipped,
        "heater": None,
    })
    return (f"{len(samples)} samples, slope "
            f"{cal.slope_lam_phase * math.pi:+.4f} nm/pi, "
            f"R^2 {cal.r2_phase:.6f}")


COMMANDS = {
    "bands": (cmd_bands, "Bulk quasienergy bands, gap intervals and "
                         "band invariants"),
    "ribbon": (cmd_ribbon, "Strip spectrum with edge-weight labels"),
    "fdmr": (cmd_fdmr, "Defect-resonance trajectory over a phase-detune "
                       "sweep"),
    "transmission": (cmd_transmission, "Bus-to-bus transmission spectrum "
                                       "and dip list"),
    "fields": (cmd_fields, "Steady-state intensity map at one wavelength"),
    "disorder": (cmd_disorder, "Monte-Carlo robustness of the defect dip"),
    "sfwm": (cmd_sfwm, "Photon-pair rates over a pump-power sweep"),
    "counts": (cmd_counts, "Synthetic coincidence histogram and "
                           "correlation numbers"),
    "fit": (cmd_fit, "Fit a resonance dip from a transmission CSV"),
    "calibrate": (cmd_calibrate, "Wavelength-vs-phase tuning map of the "
                                 "defect dip"),
}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="floquet-rings",
        description="Microring-lattice simulator: band structure, transport, "
                    "photon-pair statistics and resonance analysis.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", default=str(default_config_path()),
                       help="run configuration file (default: the shipped "
                            "calibrated configuration)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config's RNG seed")
        p.add_argument("--out", default=None,
                       help="override the config's output directory")
        if name == "fields":
            p.add_argument("--wavelength-nm", type=float, required=True,
                           help="wavelength at which to solve the field map")
        if name == "fit":
            p.add_argument("--input", required=True,
                           help="CSV with wavelength_nm and transmission "
                                "columns")
            p.add_argument("--coupling", choices=("auto", "under", "over"),
                           default="auto",
                           help="resonance coupling regime to report")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    command = args.command

    try:
        config_bytes = Path(args.config).read_bytes()
    except OSError as exc:
        print(f"config error: cannot read {args.config}: {exc}",
              file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, seed=args.seed, output_dir=args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    writer = RunWriter(Path(cfg.output_dir))
    t0 = time.perf_counter()
    try:
        summary = COMMANDS[command][0](cfg, args, writer)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure in '{command}': {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"numerical failure in '{command}': {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O failure in '{command}': {exc}", file=sys.stderr)
        return EXIT_IO
    compute_s = time.perf_counter() - t0

    manifest = {
        "tool": "floquet-rings",
        "version": __version__,
        "command": command,
        "schema_version": cfg.schema_version,
        "seed": cfg.seed,
        "config_sha256": hashlib.sha256(config_bytes).hexdigest(),
        "timings_s": {"compute": compute_s},
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }
    t1 = time.perf_counter()
    try:
        names = writer.commit(manifest)
    except OSError as exc:
        print(f"I/O failure writing outputs: {exc}", file=sys.stderr)
        return EXIT_IO
    write_s = time.perf_counter() - t1

    print(f"{command}: {summary}")
    print(f"wrote {len(names)} files to {writer.out_dir} "
          f"(compute {compute_s:.1f} s, write {write_s:.2f} s)")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

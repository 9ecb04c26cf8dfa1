"""Command-line interface: outputs, manifests, exit codes, reproducibility."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np
import pytest
import yaml

from floquet_rings import C0, default_config_path
from floquet_rings.cli import (
    EXIT_CONFIG,
    EXIT_IO,
    EXIT_NUMERICAL,
    EXIT_OK,
    WORKERS_ENV,
)


def _merge(base: dict, overrides: dict) -> dict:
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _merge(base[key], value)
        else:
            base[key] = value
    return base


def _write_cfg(tmp_path: Path, name: str = "cfg.yaml", **overrides) -> Path:
    with open(default_config_path()) as fh:
        data = yaml.safe_load(fh)
    _merge(data, overrides)
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return path


def _narrow_cfg(tmp_path: Path, **extra) -> Path:
    """Config with the wavelength sweep narrowed around one defect dip."""
    return _write_cfg(
        tmp_path,
        **_merge({"sweep": {"lam_start_nm": 1545.9, "lam_stop_nm": 1546.7,
                            "points": 321}}, extra),
    )


def _read_manifest(out_dir: Path) -> dict:
    return json.loads((out_dir / "manifest.json").read_text())


def _data_files(out_dir: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(out_dir.iterdir())
            if p.name != "manifest.json"}


def test_bands_outputs_and_manifest(run_cli):
    code, out = run_cli("bands")
    assert code == EXIT_OK
    manifest = _read_manifest(out)
    assert manifest["command"] == "bands"
    assert manifest["seed"] == 2024
    assert manifest["schema_version"] == 1
    names = {entry["name"] for entry in manifest["outputs"]}
    assert names == {"bands.csv", "gaps.json"}
    for entry in manifest["outputs"]:
        blob = (out / entry["name"]).read_bytes()
        assert hashlib.sha256(blob).hexdigest() == entry["sha256"]
        assert len(blob) == entry["bytes"]
    gaps = json.loads((out / "gaps.json").read_text())
    assert len(gaps["gaps"]) == 3
    assert gaps["chern_numbers"] == [0, 0, 0]
    assert gaps["flat_band_max_abs"] < 1e-12
    # no stray temporary files
    assert not list(out.glob("*tmp*"))


def test_bands_rerun_is_byte_identical(run_cli, tmp_path):
    code1, out1 = run_cli("bands", out=tmp_path / "a")
    code2, out2 = run_cli("bands", out=tmp_path / "b")
    assert code1 == code2 == EXIT_OK
    assert _data_files(out1) == _data_files(out2)


def test_ribbon_labels_edges(run_cli):
    code, out = run_cli("ribbon")
    assert code == EXIT_OK
    with open(out / "ribbon.csv") as fh:
        rows = list(csv.DictReader(fh))
    labels = {row["label"] for row in rows}
    assert {"bulk", "edge-bottom", "edge-top"} <= labels
    for row in rows[:200]:
        if row["label"] == "edge-bottom":
            assert float(row["weight_bottom"]) >= 0.6


def test_transmission_finds_defect_dip(run_cli, tmp_path):
    cfg = _narrow_cfg(tmp_path)
    code, out = run_cli("transmission", config=cfg)
    assert code == EXIT_OK
    res = json.loads((out / "resonances.json").read_text())
    lam0s = [r["lam0_nm"] for r in res["resonances"]
             if r["depth"] >= 0.5 and r["q_loaded"] >= 5e4]
    assert any(abs(lam - 1546.304129) < 5e-4 for lam in lam0s)
    with open(out / "transmission.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 321
    assert {"wavelength_nm", "transmission", "re_t", "im_t"} <= set(rows[0])


def test_fields_localised_on_defect_ring(run_cli, tmp_path):
    cfg = _narrow_cfg(tmp_path)
    code, out = run_cli("fields", "--wavelength-nm", "1546.304129",
                        config=cfg)
    assert code == EXIT_OK
    info = json.loads((out / "fields.json").read_text())
    # ring 16 = cell (5, 0), middle sublattice: the defect ring
    assert info["argmax_ring"] == 16
    assert info["max_ring_intensity"] > 10.0
    with open(out / "fields.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 300  # 10 x 10 cells, three rings each
    peak = max(rows, key=lambda r: float(r["intensity"]))
    assert peak["sublattice"] == "B"
    assert (int(peak["m"]), int(peak["n"])) == (5, 0)


def test_fdmr_sweep_summary(run_cli, tmp_path):
    cfg = _write_cfg(tmp_path, defect={"sweep_phi_pi": [1.55, 1.95],
                                       "sweep_points": 5})
    code, out = run_cli("fdmr", config=cfg)
    assert code == EXIT_OK
    summary = json.loads((out / "fdmr.json").read_text())
    assert summary["n_points"] == 5
    assert summary["n_excluded_gauge_trivial"] == 0
    assert summary["r_squared"] > 0.99
    assert summary["max_flatness"] < 1e-8
    assert summary["min_loop_weight"] > 0.9
    assert summary["slope_quasienergy_per_rad"] == pytest.approx(
        -0.335, abs=0.01)


def test_sfwm_rates_scale_quadratically(run_cli):
    code, out = run_cli("sfwm")
    assert code == EXIT_OK
    with open(out / "sfwm_rates.csv") as fh:
        rows = list(csv.DictReader(fh))
    powers = np.array([float(r["power_w"]) for r in rows])
    closed = np.array([float(r["pair_rate_closed_form"]) for r in rows])
    numeric = np.array([float(r["pair_rate_numeric"]) for r in rows])
    slope = np.polyfit(np.log(powers), np.log(closed), 1)[0]
    assert slope == pytest.approx(2.0, abs=1e-6)
    assert np.max(np.abs(numeric / closed - 1.0)) < 0.01
    info = json.loads((out / "sfwm.json").read_text())
    assert info["pair_rate_per_w2"] == pytest.approx(2.2216213735e13,
                                                     rel=1e-4)


def test_counts_reproduces_calibration_targets(run_cli, tmp_path):
    code, out = run_cli("counts")
    assert code == EXIT_OK
    corr = json.loads((out / "correlation.json").read_text())
    assert corr["g2_si_zero_expected_bare"] == pytest.approx(1450.0,
                                                             abs=1e-6)
    assert corr["gamma"] > 1.0
    assert corr["fwhm_ps"] == pytest.approx(234.8, rel=0.02)
    with open(out / "histogram.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 601
    # the coincidence-to-accidental benchmark point sits at lower pump power
    cfg = _write_cfg(tmp_path, sfwm={"pump_power_w": 8.6e-5})
    code, out2 = run_cli("counts", config=cfg, out=tmp_path / "car")
    assert code == EXIT_OK
    corr2 = json.loads((out2 / "correlation.json").read_text())
    assert corr2["car_expected"] == pytest.approx(2331.0, abs=1e-6)


def test_counts_seed_changes_histogram_only(run_cli, tmp_path):
    _, out1 = run_cli("counts", out=tmp_path / "a")
    _, out2 = run_cli("counts", seed=7, out=tmp_path / "b")
    h1 = (out1 / "histogram.csv").read_bytes()
    h2 = (out2 / "histogram.csv").read_bytes()
    assert h1 != h2
    c1 = json.loads((out1 / "correlation.json").read_text())
    c2 = json.loads((out2 / "correlation.json").read_text())
    # model expectations are seed-free even though measured values move
    assert c1["car_expected"] == c2["car_expected"]
    assert c1["g2_si_zero_expected_bare"] == c2["g2_si_zero_expected_bare"]


def test_disorder_small_ensemble(run_cli, tmp_path, monkeypatch):
    cfg = _narrow_cfg(tmp_path, disorder={"n_trials": 3})
    monkeypatch.setenv(WORKERS_ENV, "2")
    code, out = run_cli("disorder", config=cfg)
    assert code == EXIT_OK
    summary = json.loads((out / "disorder_summary.json").read_text())
    assert summary["n_trials"] == 3
    assert summary["survival_fraction"] == 1.0
    assert "n_workers" not in summary
    with open(out / "disorder_trials.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3
    # rerun serially: identical trial data regardless of worker count
    monkeypatch.setenv(WORKERS_ENV, "1")
    _, out2 = run_cli("disorder", config=cfg, out=tmp_path / "serial")
    assert (out / "disorder_trials.csv").read_bytes() == \
        (out2 / "disorder_trials.csv").read_bytes()


def test_calibrate_reports_linear_tuning(run_cli, tmp_path):
    # detunes whose level lands on the flat bulk band are expected to be
    # skipped; the default detune span leaves enough healthy samples
    cfg = _write_cfg(
        tmp_path,
        sweep={"lam_start_nm": 1546.1, "lam_stop_nm": 1547.6, "points": 321},
    )
    code, out = run_cli("calibrate", config=cfg)
    assert code == EXIT_OK
    cal = json.loads((out / "calibration.json").read_text())
    assert cal["r2_phase"] > 0.999
    assert cal["slope_lam_phase_nm_per_pi"] == pytest.approx(0.8824,
                                                             abs=0.02)
    assert cal["n_samples"] >= 4
    with open(out / "calibration_samples.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == cal["n_samples"]


def test_fit_command_recovers_quality_factor(run_cli, tmp_path):
    from floquet_rings import FacetParams, ResonanceParams, facet_transmission

    omega_0 = 2 * math.pi * C0 / 1545e-9
    truth = ResonanceParams(omega_0, omega_0 / 95050.0, omega_0 / 186120.0,
                            facet=FacetParams(0.22, 0.22, 0.95, 0.95, 1.3))
    kappa = truth.kappa_ext + truth.kappa_int
    w = omega_0 + np.linspace(-10, 10, 2401) * kappa
    lam_nm = 2 * math.pi * C0 / w * 1e9
    y = facet_transmission(truth, w)
    csv_path = tmp_path / "dip.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["wavelength_nm", "transmission"])
        writer.writerows(zip(lam_nm, y))
    code, out = run_cli("fit", "--input", str(csv_path))
    assert code == EXIT_OK
    fit = json.loads((out / "fit.json").read_text())
    assert fit["params"]["q_t"] == pytest.approx(truth.q_t, rel=1e-4)
    assert fit["residual_rms"] < 1e-6


def test_unknown_config_key_exits_2(run_cli, tmp_path):
    cfg = _write_cfg(tmp_path, mystery=1)
    code, _ = run_cli("bands", config=cfg)
    assert code == EXIT_CONFIG


def test_malformed_yaml_exits_2(run_cli, tmp_path):
    cfg = tmp_path / "broken.yaml"
    cfg.write_text("lattice: [unclosed\n")
    code, _ = run_cli("bands", config=cfg)
    assert code == EXIT_CONFIG


def test_missing_defect_section_exits_2(run_cli, tmp_path):
    with open(default_config_path()) as fh:
        data = yaml.safe_load(fh)
    del data["defect"]
    cfg = tmp_path / "nodefect.yaml"
    cfg.write_text(yaml.safe_dump(data))
    code, _ = run_cli("fdmr", config=cfg)
    assert code == EXIT_CONFIG


def test_pump_past_threshold_exits_3(run_cli, tmp_path):
    cfg = _write_cfg(tmp_path, sfwm={"power_sweep_w": [0.5, 1.0],
                                     "power_points": 3})
    code, _ = run_cli("sfwm", config=cfg)
    assert code == EXIT_NUMERICAL


def test_missing_fit_input_exits_2(run_cli, tmp_path):
    code, _ = run_cli("fit", "--input", str(tmp_path / "absent.csv"))
    assert code in (EXIT_CONFIG, EXIT_IO)


def test_unwritable_output_exits_4(run_cli, tmp_path):
    blocker = tmp_path / "blocked"
    blocker.write_text("a file, not a directory")
    code, _ = run_cli("bands", out=blocker / "sub")
    assert code == EXIT_IO

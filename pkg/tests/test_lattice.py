"""Geometry, coupler layout, and phase-defect bookkeeping."""

from __future__ import annotations

import math

import numpy as np
import pytest

from floquet_rings import (
    LatticeParams,
    PhaseDefect,
    RingSite,
    THETA_ANOMALOUS_MIN,
    THETA_STRONG,
    build_finite_geometry,
    defect_loop_rings,
    ring_positions,
)
from floquet_rings.lattice import loop_neighbourhood


def test_coupling_rate_matches_four_theta_over_length():
    p = LatticeParams(theta=1.2)
    assert p.kappa == pytest.approx(4 * 1.2 / p.ring_length, rel=1e-15)


def test_strong_coupling_angle_exceeds_anomalous_threshold():
    assert THETA_STRONG == pytest.approx(math.asin(math.sqrt(0.98)), rel=1e-15)
    assert THETA_STRONG > THETA_ANOMALOUS_MIN
    assert THETA_ANOMALOUS_MIN == pytest.approx(math.pi / math.sqrt(8), rel=1e-15)


def test_propagation_constant_includes_dispersion():
    p = LatticeParams(theta=1.0)
    lam = p.lam0 + 0.4e-9
    n_eff = p.n0 + p.dn_dlam * (lam - p.lam0)
    assert p.beta(lam) == pytest.approx(2 * math.pi * n_eff / lam, rel=1e-14)


def test_ring_fsr_uses_group_index():
    p = LatticeParams(theta=1.0)
    n_g = p.n0 - p.lam0 * p.dn_dlam
    expected = p.lam0 ** 2 / (n_g * p.ring_length)
    assert p.ring_fsr() == pytest.approx(expected, rel=1e-12)
    assert p.ring_fsr() == pytest.approx(5.2983e-9, rel=1e-4)


def test_amplitude_loss_rate_from_db_per_cm():
    p = LatticeParams(theta=1.0, loss_db_cm=2.6)
    # 2.6 dB/cm in power is half that in amplitude, converted to nepers/m
    expected = 2.6 * 100.0 * math.log(10.0) / 20.0
    assert p.alpha_amp == pytest.approx(expected, rel=1e-12)
    assert LatticeParams(theta=1.0, loss_db_cm=0.0).alpha_amp == 0.0


def test_site_index_round_trip():
    p = LatticeParams(theta=1.0, nx=4, ny=3)
    seen = set()
    for n in range(3):
        for m in range(4):
            for s in range(3):
                idx = RingSite(m, n, s).index(p)
                assert 0 <= idx < 3 * 4 * 3
                seen.add(idx)
    assert len(seen) == 36


def test_site_sublattice_labels():
    assert RingSite(0, 0, 0).sublattice == "A"
    assert RingSite(0, 0, 1).sublattice == "B"
    assert RingSite(0, 0, 2).sublattice == "C"


def test_defect_requires_b_sublattice():
    with pytest.raises(ValueError):
        PhaseDefect(RingSite(0, 0, 0), 1.0)
    with pytest.raises(ValueError):
        PhaseDefect(RingSite(0, 0, 2), 1.0)
    PhaseDefect(RingSite(2, 1, 1), 1.0)  # does not raise


def test_defect_phase_split_across_steps():
    d = PhaseDefect(RingSite(0, 0, 1), 1.5 * math.pi, steps=(4, 1))
    assert d.phase_per_step() == pytest.approx(0.75 * math.pi, rel=1e-15)
    p = LatticeParams(theta=1.0)
    assert d.delta_beta(4, p) == pytest.approx(4 * 0.75 * math.pi / p.ring_length)
    assert d.delta_beta(1, p) == pytest.approx(4 * 0.75 * math.pi / p.ring_length)
    assert d.delta_beta(2, p) == 0.0
    assert d.delta_beta(3, p) == 0.0


def test_geometry_counts_and_ports():
    p = LatticeParams(theta=1.0, nx=5, ny=4)
    geom = build_finite_geometry(p)
    assert geom.n_rings == 3 * 5 * 4
    # input bus on the first bottom-row ring, output bus on the last
    assert geom.port("input").ring == RingSite(0, 0, 0).index(p)
    assert geom.port("output").ring == RingSite(4, 0, 1).index(p)
    assert geom.port("input").theta == pytest.approx(p.theta)
    # interior coupler count: step-1 pairs + step-2 pairs + step-3 + step-4
    n12 = 2 * 5 * 4                       # within-cell pairs at steps 1 and 2
    n3 = (5 - 1) * 4                      # step-3 pairs across cell boundary in x
    n4 = 5 * (4 - 1)                      # step-4 pairs across cell boundary in y
    assert len(geom.couplers) == n12 + n3 + n4


def test_geometry_segment_phase_carries_defect():
    p = LatticeParams(theta=1.0, nx=3, ny=3)
    d = PhaseDefect(RingSite(1, 0, 1), 1.3 * math.pi)
    geom = build_finite_geometry(p, defect=d)
    r = d.site.index(p)
    per_seg = d.phase_per_step()
    assert geom.segment_phase[r, 3] == pytest.approx(per_seg)
    assert geom.segment_phase[r, 0] == pytest.approx(per_seg)
    clean = np.delete(geom.segment_phase, r, axis=0)
    assert np.all(clean == 0.0)


def test_ring_positions_shape_and_offsets():
    p = LatticeParams(theta=1.0, nx=3, ny=2)
    pos = ring_positions(p)
    assert pos.shape == (18, 2)
    a = pos[RingSite(1, 1, 0).index(p)]
    b = pos[RingSite(1, 1, 1).index(p)]
    c = pos[RingSite(1, 1, 2).index(p)]
    assert b[0] - a[0] == pytest.approx(p.pitch / 2)
    assert b[1] - a[1] == pytest.approx(0.0)
    assert c[1] - a[1] == pytest.approx(p.pitch / 2)
    assert c[0] - a[0] == pytest.approx(0.0)


def test_defect_orbit_starts_at_defect_and_stays_local():
    p = LatticeParams(theta=1.0, nx=10, ny=10)
    d = PhaseDefect(RingSite(5, 0, 1), 1.47 * math.pi)
    loop = defect_loop_rings(p, d)
    assert loop[0] == d.site
    assert len(loop) == len(set(loop))  # each ring listed once
    assert len(loop) >= 3
    # the orbit stays within one cell of the defect
    for site in loop:
        assert abs(site.m - 5) <= 1 and abs(site.n - 0) <= 1
    hood = loop_neighbourhood(p, d)
    assert set(loop) <= set(hood)
    assert len(hood) > len(loop)


def test_invalid_parameters_rejected():
    with pytest.raises(ValueError):
        LatticeParams(theta=-0.1)
    with pytest.raises(ValueError):
        LatticeParams(theta=1.0, nx=0)
    with pytest.raises(ValueError):
        LatticeParams(theta=1.0, loss_db_cm=-1.0)

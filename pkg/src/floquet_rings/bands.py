"""Floquet operators, quasienergy spectra, Chern numbers and defect bands.

The one-period evolution is the ordered product of the four step unitaries,

    U_F = U_4 U_3 U_2 U_1,      U_j = expm(sign * 1j * H_j * L/4),

with ``sign = -1`` throughout this package.  Quasienergies are reported as
dimensionless phases eps*L in (-pi, pi], the eigenphases of U_F; flipping
the sign convention negates the spectrum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lattice import (LatticeParams, PhaseDefect, StepHamiltonian,
                      build_bulk_step, build_ribbon_step, build_supercell_step,
                      defect_loop_stroboscopic, loop_neighbourhood)

__all__ = [
    "EVOLUTION_SIGN",
    "FloquetSpectrum",
    "RibbonSpectrum",
    "GapReport",
    "FdmrSweep",
    "floquet_operator",
    "step_unitary",
    "bulk_bands",
    "flat_band_index",
    "chern_number",
    "chern_from_states",
    "ribbon_spectrum",
    "edge_branch_count",
    "find_gaps",
    "gap_report",
    "fdmr_band",
]

#: Sign s in U_j = expm(s * 1j * H_j * L/4).
EVOLUTION_SIGN = -1.0


def step_unitary(step: StepHamiltonian, ring_length: float,
                 sign: float = EVOLUTION_SIGN) -> np.ndarray:
    """Quarter-period propagator expm(sign*1j*H*L/4) via Hermitian eigh."""
    w, v = np.linalg.eigh(step.matrix)
    phase = np.exp(sign * 1j * w * ring_length / 4.0)
    return (v * phase) @ v.conj().T


def floquet_operator(steps, ring_length: float, sign: float = EVOLUTION_SIGN):
    """One-period evolution operator and its eigen-decomposition.

    Parameters
    ----------
    steps : sequence of StepHamiltonian
        The four step Hamiltonians, in step order 1..4.
    ring_length : float
        Ring circumference L (metres); each step acts for L/4.

    Returns
    -------
    (U, eps, vecs) : U_F (dim,dim); quasienergy phases eps*L in (-pi, pi]
        sorted ascending; eigenvector columns in matching order.
    """
    js = [s.j for s in steps]
    if sorted(js) != [1, 2, 3, 4]:
        raise ValueError(f"expected steps 1..4 exactly once, got {js}")
    u = None
    for s in sorted(steps, key=lambda s: s.j):
        uj = step_unitary(s, ring_length, sign)
        u = uj if u is None else uj @ u
    vals, vecs = np.linalg.eig(u)
    eps = np.angle(vals)
    order = np.argsort(eps, kind="stable")
    return u, eps[order], vecs[:, order]


# ---------------------------------------------------------------------------
# Bulk bands over the Brillouin zone
# ---------------------------------------------------------------------------

@dataclass
class FloquetSpectrum:
    """Quasienergy sheets over a rectangular k-grid.

    ``quasienergy[i, j, b]`` is the phase eps*L of band b at (kx[i], ky[j]),
    sorted ascending per k-point; ``states`` holds the matching eigenvector
    columns.  Momenta are in rad/m.
    """

    kx: np.ndarray
    ky: np.ndarray
    quasienergy: np.ndarray = field(repr=False)
    states: np.ndarray = field(repr=False)
    params: LatticeParams | None = None


def _batched_expm(h, ring_length, sign):
    """expm(sign*1j*h*L/4) for a (..., d, d) stack of Hermitian matrices."""
    w, v = np.linalg.eigh(h)
    phase = np.exp(sign * 1j * w * ring_length / 4.0)
    return np.einsum("...ij,...j,...kj->...ik", v, phase, v.conj())


def bulk_bands(params: LatticeParams, n_k: int = 101,
               sign: float = EVOLUTION_SIGN) -> FloquetSpectrum:
    """Three quasienergy sheets on an n_k x n_k grid covering the BZ.

    The grid spans one reciprocal period [-pi/pitch, pi/pitch) per axis
    (endpoint excluded; the Bloch matrices are exactly periodic).
    """
    if n_k < 3:
        raise ValueError("need at least a 3x3 k-grid")
    g = 2.0 * np.pi / params.pitch
    kx = -0.5 * g + g * np.arange(n_k) / n_k
    ky = kx.copy()
    kxg, kyg = np.meshgrid(kx, ky, indexing="ij")
    npts = kxg.size

    u = np.broadcast_to(np.eye(3, dtype=complex), (npts, 3, 3)).copy()
    kap = params.kappa
    offs = {1: (1, 0.0, 0.0), 2: (2, 0.0, 0.0), 3: (1, -1.0, 0.0),
            4: (2, 0.0, -1.0)}
    for j in (1, 2, 3, 4):
        s, dx, dy = offs[j]
        phase = np.exp(1j * (kxg.ravel() * dx + kyg.ravel() * dy) * params.pitch)
        h = np.zeros((npts, 3, 3), dtype=complex)
        h[:, 0, s] = kap * phase
        h[:, s, 0] = np.conj(h[:, 0, s])
        u = _batched_expm(h, params.ring_length, sign) @ u

    vals, vecs = np.linalg.eig(u)
    eps = np.angle(vals)
    order = np.argsort(eps, axis=-1, kind="stable")
    eps = np.take_along_axis(eps, order, axis=-1)
    vecs = np.take_along_axis(vecs, order[:, None, :], axis=-1)
    return FloquetSpectrum(kx, ky,
                           eps.reshape(n_k, n_k, 3),
                           vecs.reshape(n_k, n_k, 3, 3),
                           params)


def flat_band_index(spectrum: FloquetSpectrum) -> int:
    """Index of the sheet with the smallest maximum |eps*L|."""
    dev = np.max(np.abs(spectrum.quasienergy), axis=(0, 1))
    return int(np.argmin(dev))


# ---------------------------------------------------------------------------
# Chern numbers (plaquette link-variable method)
# ---------------------------------------------------------------------------

def chern_from_states(states: np.ndarray) -> float:
    """Chern number of one band from its eigenvector field.

    ``states`` has shape (nkx, nky, dim): the band's eigenvector on a grid
    covering the BZ once, endpoint excluded (periodic wrap is implied).
    Uses plaquette products of normalised link overlaps; each plaquette
    flux must stay well inside (-pi, pi) for the lattice field strength to
    be admissible, otherwise a ValueError is raised.
    """
    psi = np.asarray(states)
    if psi.ndim != 3:
        raise ValueError("states must have shape (nkx, nky, dim)")
    ux = np.einsum("ijk,ijk->ij", psi.conj(), np.roll(psi, -1, axis=0))
    uy = np.einsum("ijk,ijk->ij", psi.conj(), np.roll(psi, -1, axis=1))
    if np.min(np.abs(ux)) < 1e-12 or np.min(np.abs(uy)) < 1e-12:
        raise ValueError("vanishing link overlap; k-grid too coarse or band degenerate")
    ux /= np.abs(ux)
    uy /= np.abs(uy)
    flux = np.angle(ux * np.roll(uy, -1, axis=0)
                    * np.conj(np.roll(ux, -1, axis=1)) * np.conj(uy))
    if np.max(np.abs(flux)) > 0.95 * np.pi:
        raise ValueError("plaquette flux approaches pi; refine the k-grid")
    return float(np.sum(flux) / (2.0 * np.pi))


def chern_number(spectrum: FloquetSpectrum, band: int,
                 degeneracy_tol: float = 1e-6) -> int:
    """Integer Chern number of one quasienergy sheet.

    Refuses (ValueError) if the band approaches another sheet anywhere on
    the grid, or if the computed lattice sum is not close to an integer.
    """
    eps = spectrum.quasienergy
    nb = eps.shape[-1]
    if not 0 <= band < nb:
        raise ValueError(f"band index {band} out of range")
    others = [b for b in range(nb) if b != band]
    dist = np.min([_circ_dist(eps[..., band], eps[..., b]) for b in others])
    if dist < degeneracy_tol:
        raise ValueError(
            f"band {band} is degenerate with a neighbour (min separation "
            f"{dist:.2e}); Chern number undefined")
    c = chern_from_states(spectrum.states[..., band])
    ci = int(np.rint(c))
    if abs(c - ci) > 1e-2:
        raise ValueError(f"lattice Chern sum {c:.4f} is not integer-like")
    return ci


def _circ_dist(a, b):
    d = np.abs(a - b) % (2.0 * np.pi)
    return np.min(np.minimum(d, 2.0 * np.pi - d))


# ---------------------------------------------------------------------------
# Ribbon spectra and edge branches
# ---------------------------------------------------------------------------

@dataclass
class RibbonSpectrum:
    """Quasienergies of a strip, periodic along x, open along y."""

    kx: np.ndarray
    quasienergy: np.ndarray = field(repr=False)   # (nk, 3*ny)
    weight_bottom: np.ndarray = field(repr=False)
    weight_top: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)        # "bulk"/"edge-bottom"/"edge-top"
    ny: int = 0
    params: LatticeParams | None = None


def ribbon_spectrum(params: LatticeParams, kx_grid=None, ny=None,
                    edge_threshold: float = 0.6,
                    sign: float = EVOLUTION_SIGN) -> RibbonSpectrum:
    """Quasienergy spectrum of a ribbon with per-state edge labels.

    A state is labelled ``edge-bottom`` (``edge-top``) when at least
    ``edge_threshold`` of its weight sits in the outermost unit cell of the
    bottom (top) boundary; everything else is ``bulk``.
    """
    ny = params.ny if ny is None else int(ny)
    if kx_grid is None:
        g = 2.0 * np.pi / params.pitch
        kx_grid = -0.5 * g + g * np.arange(201) / 201
    kx_grid = np.asarray(kx_grid, dtype=float)
    dim = 3 * ny
    nk = kx_grid.size
    eps = np.empty((nk, dim))
    wb = np.empty((nk, dim))
    wt = np.empty((nk, dim))
    for i, kx in enumerate(kx_grid):
        steps = [build_ribbon_step(params, j, kx, ny) for j in (1, 2, 3, 4)]
        _, e, v = floquet_operator(steps, params.ring_length, sign)
        eps[i] = e
        p = np.abs(v) ** 2
        p /= p.sum(axis=0)
        wb[i] = p[:3].sum(axis=0)
        wt[i] = p[-3:].sum(axis=0)
    labels = np.full((nk, dim), "bulk", dtype="<U11")
    labels[wb >= edge_threshold] = "edge-bottom"
    labels[wt >= edge_threshold] = "edge-top"
    return RibbonSpectrum(kx_grid, eps, wb, wt, labels, ny, params)


def edge_branch_count(ribbon: RibbonSpectrum, gap_interval, side: str) -> int:
    """Number of edge branches on one boundary crossing a quasienergy gap.

    Counts sign changes, over the periodic kx grid, of the edge state
    nearest the gap centre relative to that centre.  ``side`` is
    ``"bottom"`` or ``"top"``.
    """
    lo, hi = gap_interval
    centre = _interval_centre(lo, hi)
    want = "edge-bottom" if side == "bottom" else "edge-top"
    nk = ribbon.kx.size
    vals = np.full(nk, np.nan)
    for i in range(nk):
        mask = (ribbon.labels[i] == want) & _in_interval(ribbon.quasienergy[i], lo, hi)
        if np.any(mask):
            cand = ribbon.quasienergy[i][mask]
            d = np.angle(np.exp(1j * (cand - centre)))
            vals[i] = d[np.argmin(np.abs(d))]
    good = ~np.isnan(vals)
    if not np.any(good):
        return 0
    v = vals[good]
    width = np.mod(hi - lo, 2.0 * np.pi)
    crossings = 0
    for i in range(v.size):
        a, b = v[i - 1], v[i]
        # sign change with a small jump is a genuine crossing of the gap
        # centre; a jump of order the gap width is the branch re-entering
        if (a < 0.0) != (b < 0.0) and abs(b - a) < 0.5 * width:
            crossings += 1
    return int(crossings)


def _in_interval(eps, lo, hi):
    """Membership of phases in the circular interval (lo, hi), lo < hi allowed to wrap."""
    e = np.mod(eps - lo, 2.0 * np.pi)
    width = np.mod(hi - lo, 2.0 * np.pi)
    return (e > 0) & (e < width)


def _interval_centre(lo, hi):
    width = np.mod(hi - lo, 2.0 * np.pi)
    return np.angle(np.exp(1j * (lo + 0.5 * width)))


# ---------------------------------------------------------------------------
# Gap analysis
# ---------------------------------------------------------------------------

@dataclass
class GapReport:
    """One quasienergy gap: circular interval, width and edge content."""

    label: str
    lo: float
    hi: float
    width: float
    edge_count_bottom: int | None = None
    edge_count_top: int | None = None
    chern_below: int | None = None
    chern_above: int | None = None


def find_gaps(spectrum: FloquetSpectrum, min_width: float = 0.05):
    """Maximal eigenvalue-free circular intervals of the bulk spectrum.

    Returns a list of (lo, hi) phase pairs, each interval traversed
    counter-clockwise from lo to hi, sorted by ascending centre.
    """
    eps = np.sort(spectrum.quasienergy.ravel())
    gaps = []
    diffs = np.diff(eps)
    wrap = eps[0] + 2.0 * np.pi - eps[-1]
    for i in np.nonzero(diffs > min_width)[0]:
        gaps.append((eps[i], eps[i + 1]))
    if wrap > min_width:
        gaps.append((eps[-1], eps[0] + 2.0 * np.pi))
    gaps = [(lo, np.angle(np.exp(1j * hi))) if hi > np.pi else (lo, hi)
            for lo, hi in gaps]
    gaps.sort(key=lambda g: _interval_centre(*g))
    return gaps


def gap_report(params: LatticeParams, n_k: int = 41, ny: int | None = None,
               with_edges: bool = True, with_chern: bool = True):
    """Per-gap summary: intervals, widths, edge counts and adjacent Cherns.

    Gaps are labelled I, II, III by ascending centre quasienergy.
    """
    spec = bulk_bands(params, n_k=n_k)
    gaps = find_gaps(spec)
    ribbon = ribbon_spectrum(params, ny=ny) if with_edges else None
    reports = []
    labels = ["I", "II", "III", "IV", "V"]
    band_centres = np.mean(spec.quasienergy, axis=(0, 1))
    for idx, (lo, hi) in enumerate(gaps):
        width = float(np.mod(hi - lo, 2.0 * np.pi))
        rep = GapReport(labels[idx] if idx < len(labels) else str(idx + 1),
                        float(lo), float(hi), width)
        if ribbon is not None:
            rep.edge_count_bottom = edge_branch_count(ribbon, (lo, hi), "bottom")
            rep.edge_count_top = edge_branch_count(ribbon, (lo, hi), "top")
        if with_chern:
            below = int(np.argmin(np.abs(np.angle(np.exp(1j * (band_centres - lo))))))
            above = int(np.argmin(np.abs(np.angle(np.exp(1j * (band_centres - hi))))))
            rep.chern_below = chern_number(spec, below)
            rep.chern_above = chern_number(spec, above)
        reports.append(rep)
    return reports


# ---------------------------------------------------------------------------
# Defect (loop-resonance) bands on a supercell
# ---------------------------------------------------------------------------

@dataclass
class FdmrSweep:
    """Defect-band trajectory under a phase-detune sweep.

    ``eps_tracked`` follows one physical loop resonance continuously (the
    three copies of the resonance sit 2*pi/3 apart, one per gap, and the
    tracker unwraps across copy hand-offs), while ``eps_in_gap`` is the
    wrapped representative actually found inside a bulk gap at each detune.

    ``gap_fraction`` measures how far the wrapped resonance has travelled
    across its gap from the upper-quasienergy edge.  Quasienergy decreases
    as wavelength increases, so this is the distance from the
    short-wavelength edge of the corresponding transmission gap: it grows
    from 0 (resonance emerging from the edge) towards 1 as the detune
    pushes the resonance across.

    ``eps_copies[i, g]`` is the copy of the resonance found in gap ``g`` at
    detune i (NaN when that copy is buried in a bulk band).
    """

    delta_phi: np.ndarray
    eps_tracked: np.ndarray
    eps_in_gap: np.ndarray
    gap_index: np.ndarray
    gap_fraction: np.ndarray
    ipr: np.ndarray
    flatness: np.ndarray
    loop_weight: np.ndarray
    gaps: list
    eps_copies: np.ndarray | None = None
    params: LatticeParams | None = None

    def copy_fraction(self, i: int, gap: int) -> float:
        """Distance of the gap-``gap`` copy from that gap's upper edge,
        as a fraction of the gap width (NaN when the copy is absent)."""
        e = self.eps_copies[i, gap]
        if np.isnan(e):
            return float("nan")
        lo, hi = self.gaps[gap]
        width = np.mod(hi - lo, 2.0 * np.pi)
        return float(np.mod(hi - e, 2.0 * np.pi) / width)


def _supercell_floquet(params, defect, k, sign):
    """Supercell Floquet operator with the defect as segment phase factors.

    The detuned quarter precedes the corner coupler along the light path, so
    each step unitary is right-multiplied by a diagonal phase acting on the
    defect ring during its detuned steps.  This keeps the segment phase
    exact for every trajectory (an on-site Hamiltonian detune would weight
    it by the transient ring occupancy instead) and reduces to the plain
    step product when no defect is present.
    """
    u_f = None
    for j in (1, 2, 3, 4):
        h = build_supercell_step(params, j, k, None)
        u = step_unitary(h, params.ring_length, sign)
        if defect is not None and j in defect.steps:
            d = np.ones(u.shape[1], dtype=complex)
            d[defect.site.index(params)] = np.exp(
                sign * 1j * defect.phase_per_step())
            u = u * d[np.newaxis, :]
        u_f = u if u_f is None else u @ u_f
    w, v = np.linalg.eig(u_f)
    eps = np.angle(w)
    order = np.argsort(eps, kind="stable")
    return u_f, eps[order], v[:, order]


def _defect_states(params, defect, k_samples, gaps, sign, edge_margin=0.02):
    """In-gap localised states of the defected supercell at several k.

    The detuned half of the defect ring borders two plaquette loops, so each
    gap generically hosts two trapped orbits.  Sampled at period boundaries
    the canonical orbit (the one that idles through the defect ring during
    its first detuned step) occupies a known triple of rings; the weight on
    that triple discriminates it sharply from the secondary orbit, whose
    stroboscopic support is disjoint.

    Returns one (eps, ipr, hood_weight, strobe_weight, gap_idx, k) tuple per
    located in-gap state, over all k samples.
    """
    hood = loop_neighbourhood(params, defect)
    hood_idx = [s.index(params) for s in hood]
    strobe = defect_loop_stroboscopic(params, defect)
    strobe_idx = [s.index(params) for s in strobe]
    found = []
    for k in k_samples:
        _, eps, vecs = _supercell_floquet(params, defect, k, sign)
        p = np.abs(vecs) ** 2
        p /= p.sum(axis=0)
        for gi, (lo, hi) in enumerate(gaps):
            width = np.mod(hi - lo, 2.0 * np.pi)
            margin = edge_margin * width
            rel = np.mod(eps - lo, 2.0 * np.pi)
            inside = (rel > margin) & (rel < width - margin)
            for idx in np.nonzero(inside)[0]:
                w = p[:, idx]
                ipr = float(np.sum(w ** 2))
                loop_w = float(np.sum(w[hood_idx]))
                strobe_w = float(np.sum(w[strobe_idx]))
                found.append((float(eps[idx]), ipr, loop_w, strobe_w, gi,
                              tuple(k)))
    return found


def fdmr_band(params: LatticeParams, delta_phi, defect_site=None,
              k_samples=None, steps=(4, 1), sign: float = EVOLUTION_SIGN,
              n_k_bulk: int = 31) -> FdmrSweep:
    """Track the localised loop resonance of a phase defect over a sweep.

    Parameters
    ----------
    delta_phi : array
        Total round-trip detunes to sweep (radians).
    defect_site : RingSite, optional
        Defaults to the B ring of cell (0, 0) of the supercell.
    k_samples : sequence of (kx, ky), optional
        Supercell momenta used to measure the residual dispersion
        (flatness) of the defect band.  Defaults to the zone corners.

    Raises
    ------
    RuntimeError if no in-gap state is found at some detune (the resonance
    is then inside a bulk band, or the defect is too weak).  A full
    round-trip detune (delta_phi = 2*pi, or 0) is gauge-trivial: every
    closed path picks up a multiple of 2*pi, the spectrum is that of the
    unperturbed lattice, and no in-gap state exists near those values.
    """
    from .lattice import RingSite

    delta_phi = np.atleast_1d(np.asarray(delta_phi, dtype=float))
    if defect_site is None:
        defect_site = RingSite(0, 0, 1)
    bulk = bulk_bands(params, n_k=n_k_bulk, sign=sign)
    gaps = find_gaps(bulk)
    if not gaps:
        raise RuntimeError("bulk spectrum has no gaps; nothing to track")
    if k_samples is None:
        gx = np.pi / (params.nx * params.pitch)
        gy = np.pi / (params.ny * params.pitch)
        k_samples = [(0.0, 0.0), (gx, 0.0), (0.0, gy), (gx, gy)]

    n = delta_phi.size
    eps_in_gap = np.full(n, np.nan)
    eps_tracked = np.full(n, np.nan)
    gap_index = np.full(n, -1, dtype=int)
    gap_fraction = np.full(n, np.nan)
    ipr = np.full(n, np.nan)
    flat = np.full(n, np.nan)
    loop_w = np.full(n, np.nan)
    eps_copies = np.full((n, len(gaps)), np.nan)

    prev = None
    offset = 0.0
    for i, dphi in enumerate(delta_phi):
        defect = PhaseDefect(defect_site, dphi, tuple(steps))
        cand = _defect_states(params, defect, k_samples, gaps, sign)
        if not cand:
            raise RuntimeError(f"no in-gap defect state at delta_phi={dphi:.4f}")
        # per gap keep the state concentrated on the canonical orbit's
        # stroboscopic triple; this rejects the secondary orbit trapped on
        # the far side of the detuned segments, whose support is disjoint
        by_gap = {}
        for e, q, lw, sw, gi, _k in cand:
            by_gap.setdefault(gi, []).append((e, q, lw, sw))
        best = {gi: max(v, key=lambda t: t[3]) for gi, v in by_gap.items()}
        for gi_c, (e_c, _q, _lw, _sw) in best.items():
            eps_copies[i, gi_c] = e_c
        top_sw = max(t[3] for t in best.values())
        eligible = {gi: t for gi, t in best.items() if t[3] >= 0.6 * top_sw}
        if prev is None:
            gi = max(eligible, key=lambda g: eligible[g][3])
        else:
            gi = min(eligible, key=lambda g: abs(
                np.angle(np.exp(1j * (eligible[g][0] - prev)))))
        e0, q0, lw0, sw0 = best[gi]
        members = [e for e, q, lw, sw in by_gap[gi]
                   if abs(np.angle(np.exp(1j * (e - e0)))) < 0.02]
        flat[i] = (max(members) - min(members)) if len(members) > 1 else 0.0
        if prev is not None:
            # the three copies of the loop resonance sit 2*pi/3 apart, so
            # reduce the raw jump modulo the copy spacing to follow one
            # physical resonance through hand-offs between gaps
            jump = np.angle(np.exp(1j * (e0 - prev)))
            spacing = 2.0 * np.pi / 3.0
            jump -= spacing * np.rint(jump / spacing)
            offset += jump
            eps_tracked[i] = eps_tracked[0] + offset
        else:
            eps_tracked[i] = e0
        prev = e0
        eps_in_gap[i] = e0
        gap_index[i] = gi
        lo, hi = gaps[gi]
        width = np.mod(hi - lo, 2.0 * np.pi)
        gap_fraction[i] = np.mod(hi - e0, 2.0 * np.pi) / width
        ipr[i] = q0
        loop_w[i] = lw0
    return FdmrSweep(delta_phi, eps_tracked, eps_in_gap, gap_index,
                     gap_fraction, ipr, flat, loop_w, gaps, eps_copies, params)

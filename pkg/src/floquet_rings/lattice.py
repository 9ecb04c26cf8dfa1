"""Geometry and step-coupling matrices for a square-loop microring lattice.

The lattice is built from three identical square microrings per unit cell
(sublattices A, B, C) placed on the corners of a square with one corner
empty: A at the cell origin, B half a cell to the right, C half a cell up.
Evanescent couplers act in a four-step sequence; during step j only one
class of ring pairs exchanges light:

    step 1:  A(m,n) -- B(m,n)        (intra-cell, horizontal)
    step 2:  A(m,n) -- C(m,n)        (intra-cell, vertical)
    step 3:  A(m,n) -- B(m-1,n)      (inter-cell, horizontal)
    step 4:  A(m,n) -- C(m,n-1)      (inter-cell, vertical)

Each step occupies a quarter of the ring circumference L, so a coupling
strength ``kappa`` acting over L/4 realises a discrete coupler of angle
``theta = kappa * L / 4``.  All lengths are in metres, angles in radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LatticeParams",
    "RingSite",
    "PhaseDefect",
    "StepHamiltonian",
    "FiniteGeometry",
    "Coupler",
    "Port",
    "SUBLATTICES",
    "THETA_STRONG",
    "THETA_ANOMALOUS_MIN",
    "build_bulk_step",
    "build_ribbon_step",
    "build_supercell_step",
    "build_finite_geometry",
    "defect_loop_rings",
    "loop_neighbourhood",
    "ring_positions",
]

SUBLATTICES = "ABC"

#: Coupling angle used in the strong-coupling regime studied throughout:
#: 98 % power transfer per step, theta = arcsin(sqrt(0.98)).
THETA_STRONG = math.asin(math.sqrt(0.98))

#: Above this angle (pi / sqrt(8)) all three quasienergy gaps host edge
#: modes while every band carries zero Chern number.
THETA_ANOMALOUS_MIN = math.pi / math.sqrt(8.0)

# step j -> (sublattice coupled to A, unit-cell offset of that partner)
_STEP_TABLE = {
    1: (1, (0, 0)),
    2: (2, (0, 0)),
    3: (1, (-1, 0)),
    4: (2, (0, -1)),
}


@dataclass(frozen=True)
class LatticeParams:
    """Static description of the lattice and its waveguide dispersion.

    Parameters
    ----------
    theta : float
        Coupling angle per step, radians, in [0, pi/2].
    ring_length : float
        Ring circumference L in metres.
    pitch : float
        Unit-cell period Lambda in metres (A-to-A spacing).
    nx, ny : int
        Number of unit cells along x and y.
    n0 : float
        Effective index at the reference wavelength ``lam0``.
    dn_dlam : float
        First-order dispersion d n_eff / d lambda in 1/m.  The default,
        together with ``n0``, gives a group index ~3.8 and a single-ring
        free spectral range of ~5.3 nm near 1545 nm.
    lam0 : float
        Reference wavelength for the linear dispersion model, metres.
    loss_db_cm : float
        Propagation loss in dB/cm (power).
    """

    theta: float = THETA_STRONG
    ring_length: float = 118.56e-6
    pitch: float = 59.28e-6
    nx: int = 10
    ny: int = 10
    n0: float = 2.35
    dn_dlam: float = -9.385e5
    lam0: float = 1.545e-6
    loss_db_cm: float = 2.6

    def __post_init__(self):
        if not 0.0 <= self.theta <= math.pi / 2:
            raise ValueError(f"theta must lie in [0, pi/2], got {self.theta}")
        if self.ring_length <= 0 or self.pitch <= 0 or self.lam0 <= 0:
            raise ValueError("ring_length, pitch and lam0 must be positive")
        if self.nx < 1 or self.ny < 1:
            raise ValueError("nx and ny must be at least 1")
        if self.loss_db_cm < 0:
            raise ValueError("loss_db_cm must be non-negative")

    # -- derived quantities -------------------------------------------------

    @property
    def kappa(self) -> float:
        """Coupling strength (1/m) acting during each quarter, 4*theta/L."""
        return 4.0 * self.theta / self.ring_length

    @property
    def n_rings(self) -> int:
        return 3 * self.nx * self.ny

    @property
    def is_anomalous(self) -> bool:
        return self.theta >= THETA_ANOMALOUS_MIN

    def n_eff(self, lam):
        """Effective index at wavelength ``lam`` (linear model)."""
        return self.n0 + self.dn_dlam * (lam - self.lam0)

    def n_group(self, lam):
        """Group index n_eff - lam * dn/dlam."""
        return self.n_eff(lam) - lam * self.dn_dlam

    def beta(self, lam):
        """Propagation constant 2*pi*n_eff(lam)/lam in rad/m."""
        return 2.0 * math.pi * self.n_eff(lam) / lam

    def ring_fsr(self, lam=None):
        """Free spectral range of a single ring, metres of wavelength."""
        lam = self.lam0 if lam is None else lam
        return lam * lam / (self.n_group(lam) * self.ring_length)

    @property
    def alpha_amp(self) -> float:
        """Amplitude attenuation coefficient in 1/m."""
        # dB/cm (power) -> nepers/m on the field amplitude
        return self.loss_db_cm * 100.0 * (math.log(10.0) / 20.0)


@dataclass(frozen=True)
class RingSite:
    """One ring, addressed by unit cell (m, n) and sublattice 0/1/2 = A/B/C."""

    m: int
    n: int
    s: int

    def __post_init__(self):
        if self.s not in (0, 1, 2):
            raise ValueError("sublattice index must be 0 (A), 1 (B) or 2 (C)")

    def index(self, params: LatticeParams) -> int:
        """Flat ring index 3*(n*nx + m) + s."""
        if not (0 <= self.m < params.nx and 0 <= self.n < params.ny):
            raise ValueError(f"site {self} outside {params.nx}x{params.ny} lattice")
        return 3 * (self.n * params.nx + self.m) + self.s

    @property
    def sublattice(self) -> str:
        return SUBLATTICES[self.s]


@dataclass(frozen=True)
class PhaseDefect:
    """Round-trip phase detune applied to one B ring during selected steps.

    ``delta_phi`` is the *total* extra round-trip phase (radians); it is
    distributed equally over the listed steps, i.e. the propagation-constant
    offset during step j is ``delta_beta = 4*(delta_phi/len(steps))/L``.
    The canonical choice detunes the two quarters of the bottom half of the
    ring, steps (4, 1).
    """

    site: RingSite
    delta_phi: float
    steps: tuple = (4, 1)

    def __post_init__(self):
        if self.site.s != 1:
            raise ValueError("phase defects act on sublattice B rings")
        if not self.steps or any(j not in (1, 2, 3, 4) for j in self.steps):
            raise ValueError("steps must be a non-empty subset of {1,2,3,4}")
        if len(set(self.steps)) != len(self.steps):
            raise ValueError("steps must not repeat")

    def phase_per_step(self) -> float:
        """Extra phase accumulated in each listed step-quarter, radians."""
        return self.delta_phi / len(self.steps)

    def delta_beta(self, j: int, params: LatticeParams) -> float:
        """Propagation-constant offset (1/m) during step j."""
        if j in self.steps:
            return 4.0 * self.phase_per_step() / params.ring_length
        return 0.0


@dataclass(frozen=True)
class StepHamiltonian:
    """Coupling matrix for one of the four steps.

    ``matrix`` is Hermitian, with off-diagonal coupling entries of magnitude
    ``kappa`` and (optionally) real diagonal detunes from a phase defect.
    """

    j: int
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.j not in (1, 2, 3, 4):
            raise ValueError("step index must be 1..4")
        m = np.asarray(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("step matrix must be square")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


# ---------------------------------------------------------------------------
# Bloch / ribbon / supercell builders
# ---------------------------------------------------------------------------

def build_bulk_step(params: LatticeParams, j: int, k) -> StepHamiltonian:
    """3x3 Bloch Hamiltonian of step j at crystal momentum k = (kx, ky).

    Momenta are in rad/m; the Bloch phase of an inter-cell hop with cell
    offset d is exp(+i k . d * pitch) on the row of sublattice A.
    """
    if j not in _STEP_TABLE:
        raise ValueError("step index must be 1..4")
    kx, ky = float(k[0]), float(k[1])
    s, (dx, dy) = _STEP_TABLE[j]
    phase = np.exp(1j * (kx * dx + ky * dy) * params.pitch)
    h = np.zeros((3, 3), dtype=complex)
    h[0, s] = params.kappa * phase
    h[s, 0] = np.conj(h[0, s])
    return StepHamiltonian(j, h)


def _ribbon_ny(params, ny):
    ny = params.ny if ny is None else int(ny)
    if ny < 2:
        raise ValueError("ribbon needs at least 2 cells across")
    return ny


def build_ribbon_step(params: LatticeParams, j: int, kx: float, ny=None) -> StepHamiltonian:
    """Step Hamiltonian for a ribbon: Bloch-periodic in x, ny cells in y.

    The y edges are open (hops leaving the strip are dropped), which is what
    terminates the lattice and exposes the edge branches.  Basis ordering is
    cell-major: index 3*n + s for cell n in 0..ny-1.
    """
    if j not in _STEP_TABLE:
        raise ValueError("step index must be 1..4")
    ny = _ribbon_ny(params, ny)
    s, (dx, dy) = _STEP_TABLE[j]
    phase = params.kappa * np.exp(1j * kx * dx * params.pitch)
    h = np.zeros((3 * ny, 3 * ny), dtype=complex)
    for n in range(ny):
        np_ = n + dy
        if 0 <= np_ < ny:
            a = 3 * n          # sublattice A of cell n
            b = 3 * np_ + s    # partner in cell n + dy
            h[a, b] = phase
            h[b, a] = np.conj(phase)
    return StepHamiltonian(j, h)


def build_supercell_step(params: LatticeParams, j: int, k=(0.0, 0.0),
                         defect: PhaseDefect | None = None) -> StepHamiltonian:
    """Step Hamiltonian of an nx-by-ny supercell with twisted periodic edges.

    Hops that wrap around the supercell carry the Bloch phase of the full
    supercell vector, exp(+i k . D) with D the wrapped displacement
    (nx*pitch or ny*pitch); interior hops are plain.  An optional
    ``defect`` adds its diagonal detune to the listed steps.
    """
    if j not in _STEP_TABLE:
        raise ValueError("step index must be 1..4")
    nx, ny = params.nx, params.ny
    s, (dx, dy) = _STEP_TABLE[j]
    kx, ky = float(k[0]), float(k[1])
    dim = 3 * nx * ny
    h = np.zeros((dim, dim), dtype=complex)
    kap = params.kappa
    for n in range(ny):
        for m in range(nx):
            mp, wrap_x = (m + dx) % nx, (m + dx) // nx
            np_, wrap_y = (n + dy) % ny, (n + dy) // ny
            bloch = kap * np.exp(1j * (kx * wrap_x * nx + ky * wrap_y * ny)
                                 * params.pitch)
            a = 3 * (n * nx + m)
            b = 3 * (np_ * nx + mp) + s
            h[a, b] += bloch
            h[b, a] += np.conj(bloch)
    if defect is not None:
        db = defect.delta_beta(j, params)
        if db != 0.0:
            h[defect.site.index(params), defect.site.index(params)] += db
    return StepHamiltonian(j, h)


# ---------------------------------------------------------------------------
# Finite geometry for transport
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Coupler:
    """Point coupler between two rings, acting at step slot j."""

    ring_a: int
    ring_b: int
    j: int
    theta: float


@dataclass(frozen=True)
class Port:
    """Bus-waveguide coupler attached to one ring at a given step slot."""

    ring: int
    j: int
    theta: float
    role: str  # "input" or "output"


@dataclass
class FiniteGeometry:
    """Fully open nx-by-ny lattice with bus waveguides, ready for transport.

    ``segment_phase[r, j-1]`` holds any extra phase the field picks up in
    the step-j quarter of ring r (from a defect or from disorder);
    ``coupler_of[r][j]`` maps a ring and step slot to the coupler acting
    there, if any.
    """

    params: LatticeParams
    couplers: list
    ports: list
    segment_phase: np.ndarray
    defect: PhaseDefect | None = None

    @property
    def n_rings(self) -> int:
        return self.params.n_rings

    def port(self, role: str) -> Port:
        for p in self.ports:
            if p.role == role:
                return p
        raise ValueError(f"no port with role {role!r}")


def _site_of(index: int, params: LatticeParams) -> RingSite:
    cell, s = divmod(index, 3)
    n, m = divmod(cell, params.nx)
    return RingSite(m, n, s)


def build_finite_geometry(params: LatticeParams,
                          defect: PhaseDefect | None = None,
                          theta_io: float | None = None,
                          input_site: RingSite | None = None,
                          output_site: RingSite | None = None) -> FiniteGeometry:
    """Enumerate rings, inter-ring couplers and bus ports of the open lattice.

    The input bus couples to the bottom-left A ring and the output bus to
    the bottom-right B ring, both through their free bottom-side slot
    (step 4); ``theta_io`` defaults to the lattice coupling angle.
    """
    nx, ny = params.nx, params.ny
    couplers = []
    for n in range(ny):
        for m in range(nx):
            a = 3 * (n * nx + m)
            for j, (s, (dx, dy)) in _STEP_TABLE.items():
                mp, np_ = m + dx, n + dy
                if 0 <= mp < nx and 0 <= np_ < ny:
                    b = 3 * (np_ * nx + mp) + s
                    couplers.append(Coupler(a, b, j, params.theta))

    theta_io = params.theta if theta_io is None else float(theta_io)
    if not 0.0 <= theta_io <= math.pi / 2:
        raise ValueError("theta_io must lie in [0, pi/2]")
    input_site = RingSite(0, 0, 0) if input_site is None else input_site
    output_site = RingSite(nx - 1, 0, 1) if output_site is None else output_site
    ports = [
        Port(input_site.index(params), 4, theta_io, "input"),
        Port(output_site.index(params), 4, theta_io, "output"),
    ]

    occupied = {(c.ring_a, c.j) for c in couplers} | {(c.ring_b, c.j) for c in couplers}
    for p in ports:
        if (p.ring, p.j) in occupied:
            raise ValueError(f"port slot {(p.ring, p.j)} already holds a coupler")

    segment_phase = np.zeros((3 * nx * ny, 4))
    if defect is not None:
        r = defect.site.index(params)
        for j in defect.steps:
            segment_phase[r, j - 1] += defect.phase_per_step()
    return FiniteGeometry(params, couplers, ports, segment_phase, defect)


def ring_positions(params: LatticeParams) -> np.ndarray:
    """(n_rings, 2) array of ring-centre coordinates in metres."""
    pos = np.zeros((params.n_rings, 2))
    half = 0.5 * params.pitch
    offsets = {0: (0.0, 0.0), 1: (half, 0.0), 2: (0.0, half)}
    for n in range(params.ny):
        for m in range(params.nx):
            for s in range(3):
                ox, oy = offsets[s]
                pos[3 * (n * params.nx + m) + s] = (m * params.pitch + ox,
                                                   n * params.pitch + oy)
    return pos


def _step_partner(site: RingSite, j: int, params: LatticeParams):
    """Ring coupled to ``site`` during step j on the open lattice, or None."""
    s, (dx, dy) = _STEP_TABLE[j]
    if site.s == 0:
        m, n = site.m + dx, site.n + dy
        target = s
    elif site.s == s:
        m, n = site.m - dx, site.n - dy
        target = 0
    else:
        return None
    if 0 <= m < params.nx and 0 <= n < params.ny:
        return RingSite(m, n, target)
    return None


def defect_loop_rings(params: LatticeParams, defect: PhaseDefect):
    """Rings traversed by the closed three-round-trip orbit a defect traps.

    In the full-transfer limit each step swaps the populations of the
    coupled pair, so the orbit through the detuned quarters closes after
    three drive periods.  Starting from the defect ring at the beginning of
    its first detuned step, the walk visits the loop's rings in order;
    the returned list contains each ring once, ordered by first visit.
    """
    site = defect.site
    order = [site]
    j = defect.steps[0]
    for _ in range(12):
        partner = _step_partner(site, j, params)
        if partner is not None:
            site = partner
            if site not in order:
                order.append(site)
        j = j % 4 + 1
    if site != defect.site:
        raise RuntimeError("defect orbit failed to close after three periods")
    return order


def defect_loop_stroboscopic(params: LatticeParams, defect: PhaseDefect):
    """The three rings holding the trapped orbit at drive-period boundaries.

    The loop closes after three periods, so sampled at the period boundary
    (start of step 1) the orbit occupies exactly three rings; quasienergy
    eigenstates of the loop spread their weight evenly over these three.
    """
    site = defect.site
    strobe = []
    j = defect.steps[0]
    for step_count in range(12):
        partner = _step_partner(site, j, params)
        if partner is not None:
            site = partner
        if j == 4:
            strobe.append(site)
        j = j % 4 + 1
    out = []
    for s in strobe:
        if s not in out:
            out.append(s)
    if len(out) != 3:
        raise RuntimeError("defect orbit is not a three-period loop here")
    return out


def loop_neighbourhood(params: LatticeParams, defect: PhaseDefect):
    """Loop rings plus every ring one coupler away from the loop."""
    loop = defect_loop_rings(params, defect)
    out = list(loop)
    for site in loop:
        for j in (1, 2, 3, 4):
            p = _step_partner(site, j, params)
            if p is not None and p not in out:
                out.append(p)
    return out

"""Run configuration: one structured YAML file, strictly validated.

A run is described by a single human-readable file.  The loader checks the
schema version, rejects unknown keys at every nesting level, converts the
human units (nm, um, ps, mW) to SI, and constructs the validated domain
objects, so every physical invariant is enforced before any computation
starts.  ``--seed`` / ``--out`` overrides are applied during loading so the
resulting :class:`RunConfig` is immutable and self-consistent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .biphoton import ModeParams, NonlinearCoupling, PumpDrive
from .constants import C0
from .counts import DetectionChain
from .lattice import LatticeParams, PhaseDefect, RingSite
from .transport import DisorderSpec

__all__ = [
    "SCHEMA_VERSION",
    "ConfigError",
    "SweepGrid",
    "PortConfig",
    "DefectConfig",
    "SfwmConfig",
    "DetectionConfig",
    "RunConfig",
    "load_config",
    "parse_config",
    "default_config_path",
]

SCHEMA_VERSION = 1

_MISSING = object()


class ConfigError(ValueError):
    """A configuration file violates the schema or a physical invariant."""


# ---------------------------------------------------------------------------
# strict mapping walker
# ---------------------------------------------------------------------------

class _Node:
    """One mapping in the config tree; every key must be consumed."""

    def __init__(self, name: str, data):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(f"section {name!r} must be a mapping")
        self.name = name
        self._data = dict(data)

    def take(self, key, default=_MISSING):
        if key in self._data:
            return self._data.pop(key)
        if default is _MISSING:
            raise ConfigError(f"missing required key {key!r} in {self.name!r}")
        return default

    def number(self, key, default=_MISSING) -> float:
        v = self.take(key, default)
        if v is default and default is not _MISSING:
            return v
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{self.name}.{key} must be a number, got {v!r}")
        return float(v)

    def integer(self, key, default=_MISSING) -> int:
        v = self.take(key, default)
        if v is default and default is not _MISSING:
            return v
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{self.name}.{key} must be an integer, got {v!r}")
        return int(v)

    def string(self, key, default=_MISSING) -> str:
        v = self.take(key, default)
        if v is default and default is not _MISSING:
            return v
        if not isinstance(v, str):
            raise ConfigError(f"{self.name}.{key} must be a string, got {v!r}")
        return v

    def pair(self, key, default=_MISSING):
        v = self.take(key, default)
        if v is default and default is not _MISSING:
            return v
        if (not isinstance(v, (list, tuple)) or len(v) != 2
                or any(isinstance(x, bool) or not isinstance(x, (int, float))
                       for x in v)):
            raise ConfigError(f"{self.name}.{key} must be a pair of numbers")
        return (float(v[0]), float(v[1]))

    def int_list(self, key, default=_MISSING):
        v = self.take(key, default)
        if v is default and default is not _MISSING:
            return v
        if (not isinstance(v, (list, tuple))
                or any(isinstance(x, bool) or not isinstance(x, int) for x in v)):
            raise ConfigError(f"{self.name}.{key} must be a list of integers")
        return [int(x) for x in v]

    def child(self, key, required: bool = False):
        if key in self._data:
            return _Node(f"{self.name}.{key}", self._data.pop(key))
        if required:
            raise ConfigError(f"missing required section {key!r} in {self.name!r}")
        return None

    def finish(self) -> None:
        if self._data:
            keys = ", ".join(repr(k) for k in sorted(self._data))
            raise ConfigError(f"unknown key(s) {keys} in {self.name!r}")


def _site(node: _Node, key: str, sublattice: int, nx: int, ny: int) -> RingSite:
    m, n = node.pair(key)
    if m != int(m) or n != int(n):
        raise ConfigError(f"{node.name}.{key} must hold integer cell indices")
    site = RingSite(int(m), int(n), sublattice)
    if not (0 <= site.m < nx and 0 <= site.n < ny):
        raise ConfigError(f"{node.name}.{key} lies outside the {nx}x{ny} lattice")
    return site


def _wrap(build, name: str):
    """Run a domain constructor, re-labelling its ValueError as ConfigError."""
    try:
        return build()
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"invalid {name}: {exc}") from exc


# ---------------------------------------------------------------------------
# config sections
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepGrid:
    """Wavelength scan: [start, stop] nm with a fixed point count."""

    lam_start_nm: float
    lam_stop_nm: float
    points: int

    def __post_init__(self):
        if not (0.0 < self.lam_start_nm < self.lam_stop_nm):
            raise ValueError("sweep needs 0 < start < stop")
        if self.points < 2:
            raise ValueError("sweep needs at least 2 points")

    @property
    def lam_min(self) -> float:
        """Scan start in metres."""
        return self.lam_start_nm * 1e-9

    @property
    def lam_max(self) -> float:
        """Scan stop in metres."""
        return self.lam_stop_nm * 1e-9


@dataclass(frozen=True)
class PortConfig:
    """Bus-waveguide attachment points and coupling angle."""

    input_site: RingSite
    output_site: RingSite
    theta_io: float | None = None


@dataclass(frozen=True)
class DefectConfig:
    """A phase defect plus the detune range its sweep command scans."""

    defect: PhaseDefect
    sweep_phi: tuple
    sweep_points: int

    def __post_init__(self):
        lo, hi = self.sweep_phi
        if not lo < hi:
            raise ValueError("defect sweep needs phi_start < phi_stop")
        if self.sweep_points < 2:
            raise ValueError("defect sweep needs at least 2 points")

    def sweep_grid(self) -> np.ndarray:
        lo, hi = self.sweep_phi
        return np.linspace(lo, hi, self.sweep_points)


@dataclass(frozen=True)
class SfwmConfig:
    """Pumped pair source: mode triplet, coupling strength and drive."""

    modes: ModeParams
    coupling: NonlinearCoupling
    pump: PumpDrive
    power_sweep: tuple
    power_points: int

    def __post_init__(self):
        lo, hi = self.power_sweep
        if not 0.0 < lo < hi:
            raise ValueError("power sweep needs 0 < start < stop")
        if self.power_points < 2:
            raise ValueError("power sweep needs at least 2 points")

    def power_grid(self) -> np.ndarray:
        lo, hi = self.power_sweep
        return np.geomspace(lo, hi, self.power_points)

    @property
    def broken_ratio_signal(self) -> float:
        """Broken-pair signal singles per pair: idler intrinsic/extrinsic."""
        m = self.modes
        return m.kappa_int["idler"] / m.kappa_ext["idler"]

    @property
    def broken_ratio_idler(self) -> float:
        """Broken-pair idler singles per pair: signal intrinsic/extrinsic."""
        m = self.modes
        return m.kappa_int["signal"] / m.kappa_ext["signal"]


@dataclass(frozen=True)
class DetectionConfig:
    """Detector chain plus histogram acquisition settings."""

    chain: DetectionChain
    t_coin: float
    delta_true: float
    window: float
    bin_width: float
    n_bins: int
    acquisition_time: float

    def __post_init__(self):
        for name in ("t_coin", "delta_true", "window", "bin_width",
                     "acquisition_time"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.n_bins < 3:
            raise ValueError("histogram needs at least 3 bins")


@dataclass(frozen=True)
class RunConfig:
    """Everything one command needs: validated domain objects plus run keys."""

    schema_version: int
    lattice: LatticeParams
    ports: PortConfig
    sweep: SweepGrid
    sfwm: SfwmConfig
    detection: DetectionConfig
    seed: int
    output_dir: str
    defect: DefectConfig | None = None
    disorder: DisorderSpec | None = None


# ---------------------------------------------------------------------------
# section parsers
# ---------------------------------------------------------------------------

def _parse_lattice(node: _Node) -> LatticeParams:
    theta = node.number("theta")
    ring_length = node.number("ring_length_um") * 1e-6
    pitch = node.number("pitch_um", None)
    pitch = ring_length / 2.0 if pitch is None else pitch * 1e-6
    kwargs = dict(
        theta=theta,
        ring_length=ring_length,
        pitch=pitch,
        nx=node.integer("nx"),
        ny=node.integer("ny"),
        n0=node.number("n0"),
        dn_dlam=node.number("dn_dlam_per_m"),
        lam0=node.number("lam0_nm") * 1e-9,
        loss_db_cm=node.number("loss_db_cm", 0.0),
    )
    node.finish()
    return _wrap(lambda: LatticeParams(**kwargs), "lattice")


def _parse_ports(node: _Node, lattice: LatticeParams) -> PortConfig:
    theta_io = node.number("theta_io", None)
    inp = _site(node, "input_cell", 0, lattice.nx, lattice.ny)
    out = _site(node, "output_cell", 1, lattice.nx, lattice.ny)
    node.finish()
    if theta_io is not None and not 0.0 <= theta_io <= math.pi / 2:
        raise ConfigError("ports.theta_io must lie in [0, pi/2]")
    return PortConfig(inp, out, theta_io)


def _parse_defect(node: _Node, lattice: LatticeParams) -> DefectConfig:
    site = _site(node, "cell", 1, lattice.nx, lattice.ny)
    delta_phi = node.number("delta_phi_pi") * math.pi
    steps = tuple(node.int_list("steps", [4, 1]))
    sweep_phi = node.pair("sweep_phi_pi", (1.50, 2.65))
    sweep_points = node.integer("sweep_points", 24)
    node.finish()
    defect = _wrap(lambda: PhaseDefect(site, delta_phi, steps), "defect")
    return _wrap(lambda: DefectConfig(
        defect,
        (sweep_phi[0] * math.pi, sweep_phi[1] * math.pi),
        sweep_points), "defect sweep")


def _parse_quality(node: _Node) -> dict:
    out = {}
    for mode in ("pump", "signal", "idler"):
        sub = node.child(mode, required=True)
        loaded = sub.number("loaded")
        extrinsic = sub.number("extrinsic")
        sub.finish()
        if loaded <= 0.0 or extrinsic <= 0.0:
            raise ConfigError(f"quality factors for {mode} must be positive")
        if loaded >= extrinsic:
            raise ConfigError(
                f"loaded Q must lie below extrinsic Q for {mode} "
                "(otherwise the intrinsic rate would be non-positive)")
        out[mode] = (loaded, extrinsic)
    node.finish()
    return out


def _parse_sfwm(node: _Node) -> SfwmConfig:
    lam_p = node.number("pump_wavelength_nm") * 1e-9
    offset = node.number("signal_idler_offset_nm") * 1e-9
    quality = _parse_quality(node.child("quality", required=True))
    g_nl = node.number("g_nl")
    power = node.number("pump_power_w")
    detuning = node.number("pump_detuning", 0.0)
    power_sweep = node.pair("power_sweep_w", (1e-3, 1.0))
    power_points = node.integer("power_points", 73)
    node.finish()

    if lam_p <= 0.0 or offset < 0.0:
        raise ConfigError("pump wavelength must be positive and the "
                          "signal/idler offset non-negative")
    omega_p = 2.0 * math.pi * C0 / lam_p
    spacing = 2.0 * math.pi * C0 * offset / lam_p**2
    omega = {"pump": omega_p,
             "signal": omega_p + spacing,
             "idler": omega_p - spacing}
    kappa_ext = {}
    kappa_int = {}
    for mode, (q_loaded, q_ext) in quality.items():
        kappa_ext[mode] = omega[mode] / q_ext
        kappa_int[mode] = omega[mode] * (1.0 / q_loaded - 1.0 / q_ext)
    modes = _wrap(lambda: ModeParams(omega, kappa_ext, kappa_int),
                  "sfwm mode table")
    coupling = _wrap(lambda: NonlinearCoupling(g_nl), "sfwm coupling")
    pump = _wrap(lambda: PumpDrive(power, omega_p + detuning), "sfwm pump")
    return _wrap(lambda: SfwmConfig(modes, coupling, pump,
                                    power_sweep, power_points), "sfwm")


def _parse_detection(node: _Node) -> DetectionConfig:
    chain_kwargs = dict(
        eta_s=node.number("eta_s"),
        eta_i=node.number("eta_i"),
        dark_s=node.number("dark_s", 0.0),
        dark_i=node.number("dark_i", 0.0),
        leak_s=node.number("leak_s_per_w", 0.0),
        leak_i=node.number("leak_i_per_w", 0.0),
    )
    t_coin = node.number("t_coin_ps") * 1e-12
    delta_true = node.number("delay_spread_ps") * 1e-12
    window = node.number("window_ps", None)
    window = 3.0 * delta_true if window is None else window * 1e-12
    kwargs = dict(
        t_coin=t_coin,
        delta_true=delta_true,
        window=window,
        bin_width=node.number("bin_width_ps", 20.0) * 1e-12,
        n_bins=node.integer("n_bins", 601),
        acquisition_time=node.number("acquisition_s", 300.0),
    )
    node.finish()
    chain = _wrap(lambda: DetectionChain(**chain_kwargs), "detection chain")
    return _wrap(lambda: DetectionConfig(chain, **kwargs), "detection")


def _parse_disorder(node: _Node, seed: int) -> DisorderSpec:
    region = node.int_list("region", None)
    kwargs = dict(
        sigma_g=node.number("sigma_g", 0.10),
        sigma_phi=node.number("sigma_phi", 0.10),
        n_trials=node.integer("n_trials", 50),
        seed=seed,
        region=None if region is None else tuple(region),
    )
    node.finish()
    return _wrap(lambda: DisorderSpec(**kwargs), "disorder")


def parse_config(data: dict, *, seed: int | None = None,
                 output_dir: str | None = None) -> RunConfig:
    """Validate a parsed mapping and build the :class:`RunConfig`.

    ``seed`` and ``output_dir`` override the file's values (command-line
    flags).  Any unknown key anywhere in the tree raises
    :class:`ConfigError`.
    """
    root = _Node("config", data)
    version = root.integer("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}; "
                          f"this tool reads version {SCHEMA_VERSION}")

    file_seed = root.integer("seed", 0)
    final_seed = file_seed if seed is None else int(seed)
    if not 0 <= final_seed < 2**64:
        raise ConfigError("seed must fit an unsigned 64-bit integer")

    file_out = root.string("output_dir", "runs/out")
    final_out = file_out if output_dir is None else str(output_dir)

    lattice = _parse_lattice(root.child("lattice", required=True))
    ports = _parse_ports(root.child("ports", required=True), lattice)

    sweep_node = root.child("sweep", required=True)
    sweep_kwargs = dict(
        lam_start_nm=sweep_node.number("lam_start_nm"),
        lam_stop_nm=sweep_node.number("lam_stop_nm"),
        points=sweep_node.integer("points"),
    )
    sweep_node.finish()
    sweep = _wrap(lambda: SweepGrid(**sweep_kwargs), "sweep")

    sfwm = _parse_sfwm(root.child("sfwm", required=True))
    detection = _parse_detection(root.child("detection", required=True))

    defect_node = root.child("defect")
    defect = None if defect_node is None else _parse_defect(defect_node, lattice)

    disorder_node = root.child("disorder")
    disorder = (None if disorder_node is None
                else _parse_disorder(disorder_node, final_seed))

    root.finish()
    return RunConfig(
        schema_version=version,
        lattice=lattice,
        ports=ports,
        sweep=sweep,
        sfwm=sfwm,
        detection=detection,
        seed=final_seed,
        output_dir=final_out,
        defect=defect,
        disorder=disorder,
    )


def load_config(path, *, seed: int | None = None,
                output_dir: str | None = None) -> RunConfig:
    """Read, schema-check and instantiate a YAML run configuration."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {p}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {p} is not valid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {p} must hold a mapping at top level")
    return parse_config(data, seed=seed, output_dir=output_dir)


def default_config_path() -> Path:
    """The calibrated default configuration shipped with the package."""
    return Path(__file__).resolve().parent / "data" / "default.yaml"

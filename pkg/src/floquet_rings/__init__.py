"""Simulator for anomalous-Floquet microring lattices.

A lattice of evanescently coupled square microrings realises a periodically
driven (Floquet) band structure: three bulk bands, all with zero Chern
number, separated by three quasienergy gaps that each host chiral edge
states.  Detuning the round-trip phase of a single ring pulls a flat,
localised resonance into the gaps; coupled to bus waveguides, the lattice
becomes a transmission device, and when pumped, a photon-pair source.

The package covers that whole chain:

- :mod:`~floquet_rings.lattice` — geometry, coupling steps, defects;
- :mod:`~floquet_rings.bands` — bulk/ribbon quasienergy spectra, gap and
  invariant analysis, defect-band sweeps;
- :mod:`~floquet_rings.transport` — steady-state bus-to-bus transmission,
  resonance extraction, disorder ensembles;
- :mod:`~floquet_rings.biphoton` — spontaneous four-wave-mixing pair
  amplitudes and rates;
- :mod:`~floquet_rings.counts` — detection chains, coincidence histograms,
  g2/CAR statistics;
- :mod:`~floquet_rings.resonance` — Kerr-shifted resonance line shapes,
  facet etalons, dip fitting, tuning calibration;
- :mod:`~floquet_rings.config` / :mod:`~floquet_rings.cli` — reproducible,
  file-driven experiment recipes.
"""

__version__ = "0.1.0"

from .bands import (
    EVOLUTION_SIGN,
    FdmrSweep,
    FloquetSpectrum,
    GapReport,
    RibbonSpectrum,
    bulk_bands,
    chern_number,
    edge_branch_count,
    fdmr_band,
    find_gaps,
    flat_band_index,
    gap_report,
    ribbon_spectrum,
)
from .biphoton import (
    BiphotonAmplitudes,
    ModeParams,
    NonlinearCoupling,
    PumpDrive,
    ThresholdError,
    effective_coupling,
    pair_rate_closed_form,
    pair_rate_numeric,
    q_enhancement,
    single_rates,
    symmetric_critical_modes,
    zeta_amplitudes,
)
from .config import (
    ConfigError,
    RunConfig,
    default_config_path,
    load_config,
    parse_config,
)
from .constants import C0, HBAR
from .counts import (
    CoincidenceHistogram,
    CorrelationResult,
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
from .lattice import (
    THETA_ANOMALOUS_MIN,
    THETA_STRONG,
    FiniteGeometry,
    LatticeParams,
    PhaseDefect,
    RingSite,
    build_finite_geometry,
    defect_loop_rings,
    ring_positions,
)
from .resonance import (
    CalibrationMap,
    FacetParams,
    FitResult,
    ResonanceParams,
    calibrate_phase,
    facet_transmission,
    fit_resonance,
    kerr_occupation,
    kerr_t0,
    q_compose,
)
from .transport import (
    DisorderSpec,
    DisorderSummary,
    FieldState,
    Resonance,
    TransmissionSpectrum,
    disorder_ensemble,
    find_resonances,
    locate_dip,
    steady_state,
    transmission_spectrum,
    with_defect,
)

__all__ = [
    "__version__",
    # constants
    "C0", "HBAR", "THETA_STRONG", "THETA_ANOMALOUS_MIN", "EVOLUTION_SIGN",
    # lattice
    "LatticeParams", "RingSite", "PhaseDefect", "FiniteGeometry",
    "build_finite_geometry", "defect_loop_rings", "ring_positions",
    # bands
    "FloquetSpectrum", "RibbonSpectrum", "GapReport", "FdmrSweep",
    "bulk_bands", "flat_band_index", "chern_number", "ribbon_spectrum",
    "edge_branch_count", "find_gaps", "gap_report", "fdmr_band",
    # transport
    "FieldState", "TransmissionSpectrum", "Resonance", "DisorderSpec",
    "DisorderSummary", "with_defect", "steady_state",
    "transmission_spectrum", "find_resonances", "locate_dip",
    "disorder_ensemble",
    # biphoton
    "ModeParams", "NonlinearCoupling", "PumpDrive", "BiphotonAmplitudes",
    "ThresholdError", "effective_coupling", "zeta_amplitudes",
    "pair_rate_numeric", "pair_rate_closed_form", "single_rates",
    "q_enhancement", "symmetric_critical_modes",
    # counts
    "DetectionChain", "PairSourceModel", "CoincidenceHistogram",
    "CorrelationResult", "detected_rates", "g2_cross_zero",
    "nonclassicality_gamma", "expected_g2_zero", "expected_car",
    "synthetic_histogram", "fit_peak_and_car",
    # resonance
    "FacetParams", "ResonanceParams", "CalibrationMap", "FitResult",
    "kerr_occupation", "kerr_t0", "facet_transmission", "q_compose",
    "fit_resonance", "calibrate_phase",
    # config
    "ConfigError", "RunConfig", "load_config", "parse_config",
    "default_config_path",
]

"""Simulation and analysis of NV-centre NMR beat-note protocols."""

from .config import PRESETS, ConfigError, ExperimentConfig, validate_config
from .estimators import BeatNoteEstimator, MacroscopicAverager, SpectrumTransformer
from .fisher import (
    FisherResult,
    FisherScenario,
    Readout,
    f_c_integral,
    fisher_information_sum,
    fisher_matrix_numeric,
    fisher_matrix_two_params,
    fit_scaling,
)
from .noise import (
    EnsembleSpec,
    GaussianMacroscopic,
    NoisePath,
    NoNoise,
    OrnsteinUhlenbeck,
    UniformMacroscopic,
    UniformOffset,
    average_over_macroscopic,
    beat_amplitude_decay_prediction,
    evolve_time_dependent,
    ou_ensemble_trace,
    sample_ou_path,
)
from .quantum import (
    NucleusSpec,
    SpinEnsembleState,
    coherence_closed_form,
    evolve_exact,
    multinucleus_readout,
    twospin_probabilities,
)
from .runner import run_experiment
from .signal import (
    MicroNoise,
    ProtocolParams,
    RegimeWarning,
    accumulated_phase,
    classical_coil_signal,
    hartmann_hahn_probability,
    measurement_probability,
    strong_coupling_probability,
    weak_coupling_probability,
)
from .spectral import PeakReport, Spectrum, beat_amplitude, compute_spectrum, detect_harmonics
from .trace import ProbabilityTrace

__version__ = "0.1.0"

"""Simulation toolkit for carbon-13 memories next to an optically reset
electron spin: attempt-level Monte Carlo, closed-form decay models, an
optical reinitialisation simulator and the fitting glue between them."""

from .analytic import (
    BlokParams,
    binomial_sigma,
    blok_coherence,
    blok_decay_constant,
    revival_curve,
    tau_from_decay,
)
from .attempt import (
    AttemptSequence,
    NoiseModel,
    RunContext,
    attempt_phase_branches,
    detuning_width_from_t2_star,
    realize_attempt,
)
from .errors import (
    BudgetExceededError,
    ConfigError,
    FitDataError,
    InconsistentInputsError,
    InvalidStateError,
    MissingHyperfineError,
    NonphysicalInputError,
    PhaseMatchingError,
    StepSizeError,
)
from .fitting import FitResult, fit_exponential, fit_saturation, fit_stretched_exp
from .optical import (
    OpticalLevelModel,
    PulseEnvelope,
    PumpProbeCurve,
    TrajectoryPath,
    branching_from_measurement,
    isc_rate_from_lifetimes,
    jump_trajectory,
    pump_probe_curve,
    symmetric_branching,
)
from .montecarlo import (
    CoherenceCurve,
    PowerMap,
    RunSpec,
    SweepPoint,
    apply_axis,
    blok_estimate,
    decay_envelope,
    geometric_grid,
    power_to_tau,
    simulate_curve,
    sweep,
)
from .physics import (
    GAMMA_C13_HZ_PER_GAUSS,
    ElectronState,
    ElectronTrajectory,
    FieldParams,
    NuclearSpinParams,
    accumulate_phase,
    delta_omega,
    phase_match_delay,
    precession_frequency,
)

from . import config, datasets, units  # noqa: E402  (re-exported namespaces)

__version__ = "0.1.0"

"""Stochastic model of one entangling attempt.

An attempt is the unit the remote-entanglement protocol repeats: optional
idle padding, a microwave rotation R_x(alpha) on the electron, an optional
refocusing pi pulse after an inter-pulse delay t, a repump window that
optically reinitialises the electron into ms = 0, and a trailing delay T.
The nuclear memory only cares about which ground-triplet state the
electron occupies for how long, so realising an attempt means realising a
piecewise-constant electron trajectory.

Error channels:

* microwave skips: with probability ``p_mw`` a pulse acts as the identity
  (mixture p_mw * R_x(0) + (1 - p_mw) * R_x(alpha)); applied to every
  pulse including the initial pi/2,
* stochastic reinitialisation: an electron entering the repump window in
  ms = +/-1 stays there for an exponential time of mean tau (plus any
  quasi-static offset), truncated at the window length,
* initialisation failures: if the exponential draw overruns the window,
  or an independent floor of probability ``p_init`` fires, the next
  attempt starts in ms = +1 or ms = -1 with equal odds.

Draw order per attempt is part of this module's contract: the Monte-Carlo
kernel consumes the identical uniform-variate sequence, so the two
implementations can be compared bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InvalidStateError, NonphysicalInputError
from .physics import (
    TWO_PI,
    ElectronState,
    ElectronTrajectory,
    FieldParams,
    NuclearSpinParams,
    precession_frequency,
)

# Lower clamp for the effective reset time when a quasi-static excursion
# would push tau negative; 1 ps is far below any physical reset time.
TAU_FLOOR = 1e-12

HALF_PI = 0.5 * math.pi
_ALPHA_TOL = 1e-9


@dataclass(frozen=True)
class AttemptSequence:
    """Timing and pulse layout of one attempt.

    ``attempt_duration`` must cover the pulse schedule; any surplus is idle
    padding at the start of the attempt (the electron simply keeps its
    entry state).  Durations in seconds, ``alpha`` in radians.
    """

    alpha: float
    has_middle_pi: bool
    inter_pulse_delay: float
    post_repump_delay: float
    repump_duration: float
    attempt_duration: float
    allow_generic_alpha: bool = False

    def __post_init__(self):
        if not 0.0 < self.alpha <= math.pi + _ALPHA_TOL:
            raise NonphysicalInputError(f"alpha must be in (0, pi], got {self.alpha}")
        if not self.allow_generic_alpha and not (
            math.isclose(self.alpha, HALF_PI, rel_tol=0.0, abs_tol=_ALPHA_TOL)
            or math.isclose(self.alpha, math.pi, rel_tol=0.0, abs_tol=_ALPHA_TOL)
        ):
            raise NonphysicalInputError(
                f"alpha = {self.alpha} is neither pi/2 nor pi; "
                "set allow_generic_alpha=True for arbitrary rotations"
            )
        for name in ("inter_pulse_delay", "post_repump_delay", "repump_duration"):
            if getattr(self, name) < 0.0:
                raise NonphysicalInputError(f"{name} must be >= 0")
        if self.attempt_duration < self.min_duration * (1.0 - 1e-12):
            raise NonphysicalInputError(
                f"attempt_duration {self.attempt_duration} shorter than the "
                f"pulse schedule requires ({self.min_duration})"
            )

    @property
    def min_duration(self) -> float:
        pulses = 2 if self.has_middle_pi else 1
        return (
            pulses * self.inter_pulse_delay
            + self.repump_duration
            + self.post_repump_delay
        )

    @property
    def slack(self) -> float:
        """Idle padding before the first pulse."""
        return self.attempt_duration - self.min_duration

    @property
    def flip_probability(self) -> float:
        """Population transfer of R_x(alpha) acting on a basis state."""
        return math.sin(0.5 * self.alpha) ** 2

    @classmethod
    def standard(
        cls,
        inter_pulse_delay: float,
        *,
        alpha: float = HALF_PI,
        has_middle_pi: bool = True,
        post_repump_delay: float = 0.0,
        repump_duration: float = 2e-6,
        attempt_duration: float | None = 7e-6,
        allow_generic_alpha: bool = False,
    ) -> "AttemptSequence":
        """Common attempt layout; ``attempt_duration=None`` packs it tight."""
        self = cls(
            alpha=alpha,
            has_middle_pi=has_middle_pi,
            inter_pulse_delay=inter_pulse_delay,
            post_repump_delay=post_repump_delay,
            repump_duration=repump_duration,
            attempt_duration=math.inf,
            allow_generic_alpha=allow_generic_alpha,
        )
        duration = self.min_duration if attempt_duration is None else attempt_duration
        return cls(
            alpha=alpha,
            has_middle_pi=has_middle_pi,
            inter_pulse_delay=inter_pulse_delay,
            post_repump_delay=post_repump_delay,
            repump_duration=repump_duration,
            attempt_duration=duration,
            allow_generic_alpha=allow_generic_alpha,
        )


@dataclass(frozen=True)
class NoiseModel:
    """Error-channel strengths for attempt realisation.

    ``sigma_tau_qs`` is an absolute quasi-static spread of the reset time;
    ``sigma_tau_qs_relative`` adds a component proportional to tau, which
    models slow repump-laser intensity fluctuations.  ``sigma_detuning_qs``
    is a quasi-static nuclear detuning width in rad/s (sqrt(2)/T2* makes
    the no-echo envelope reproduce a given T2*).  ``center_pump_phase``
    keeps the deterministic part of the reset phase calibrated away: the
    phase contributed by a repump event is measured relative to the
    nominal mean reset time, as an experiment tunes its timing to the
    coherence maximum.  Disabling it leaves the raw trajectory phase.
    """

    tau: float
    p_mw: float = 0.0
    p_init: float = 0.0
    sigma_tau_qs: float = 0.0
    sigma_tau_qs_relative: float = 0.0
    sigma_detuning_qs: float = 0.0
    p_depol: float = 0.0
    center_pump_phase: bool = True

    def __post_init__(self):
        if not self.tau > 0.0:
            raise NonphysicalInputError(f"tau must be positive, got {self.tau}")
        for name in ("p_mw", "p_init", "p_depol"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise NonphysicalInputError(f"{name} must be in [0, 1], got {value}")
        for name in ("sigma_tau_qs", "sigma_tau_qs_relative", "sigma_detuning_qs"):
            if getattr(self, name) < 0.0:
                raise NonphysicalInputError(f"{name} must be >= 0")

    @property
    def sigma_tau_total(self) -> float:
        return self.sigma_tau_qs + self.sigma_tau_qs_relative * self.tau


def detuning_width_from_t2_star(t2_star: float) -> float:
    """Quasi-static detuning width reproducing a Gaussian T2* envelope."""
    if t2_star <= 0.0:
        raise NonphysicalInputError(f"t2_star must be positive, got {t2_star}")
    return math.sqrt(2.0) / t2_star


@dataclass(frozen=True)
class RunContext:
    """Quasi-static offsets drawn once per run and held fixed."""

    delta_tau: float = 0.0
    delta_detuning: float = 0.0

    @classmethod
    def draw(cls, noise: NoiseModel, rng) -> "RunContext":
        sigma_tau = noise.sigma_tau_total
        delta_tau = sigma_tau * rng.standard_normal() if sigma_tau > 0.0 else 0.0
        delta_det = (
            noise.sigma_detuning_qs * rng.standard_normal()
            if noise.sigma_detuning_qs > 0.0
            else 0.0
        )
        return cls(delta_tau=delta_tau, delta_detuning=delta_det)


@dataclass(frozen=True)
class AttemptOutcome:
    """Realised attempt: trajectory plus bookkeeping flags."""

    trajectory: ElectronTrajectory
    ended_in_ms0: bool
    init_failed: bool
    mw_failed: bool
    pumped: bool
    pump_state: ElectronState | None
    pump_duration: float


_PULSE_ACTIVE = (ElectronState.MS0, ElectronState.MS_MINUS1)


def _apply_pulse(state: ElectronState, flip_probability: float, p_mw: float, rng):
    """One microwave rotation under the skip-failure model.

    Pulses drive the ms0 <-> ms-1 transition only; ms+1 is far detuned and
    untouched.  Returns (new_state, failed).
    """
    if state not in _PULSE_ACTIVE:
        return state, False
    if p_mw > 0.0 and rng.random() < p_mw:
        return state, True
    if flip_probability >= 1.0:
        flipped = (
            ElectronState.MS_MINUS1 if state is ElectronState.MS0 else ElectronState.MS0
        )
        return flipped, False
    # A partial rotation projects on the optical readout that follows; the
    # branch is drawn immediately with the transfer probability.
    if rng.random() < flip_probability:
        flipped = (
            ElectronState.MS_MINUS1 if state is ElectronState.MS0 else ElectronState.MS0
        )
        return flipped, False
    return state, False


def realize_attempt(
    seq: AttemptSequence,
    noise: NoiseModel,
    entry_state: ElectronState,
    rng,
    context: RunContext | None = None,
) -> AttemptOutcome:
    """Realise one attempt starting from ``entry_state``.

    Parameters
    ----------
    seq, noise
        Attempt layout and error-channel strengths.
    entry_state : ElectronState
        Ground-triplet state left over from the previous attempt.
    rng
        Generator with a ``random()`` method (numpy Generator or
        RandomState).  Uniform variates are consumed in a fixed,
        documented order.
    context : RunContext, optional
        Quasi-static offsets for the run this attempt belongs to.

    Returns
    -------
    AttemptOutcome
        The trajectory spans exactly ``seq.attempt_duration``; echo marks
        are not set here (they are a property of the run, not of a single
        attempt).
    """
    if entry_state not in _PULSE_ACTIVE and entry_state is not ElectronState.MS_PLUS1:
        raise InvalidStateError(f"attempt must start in the ground triplet, got {entry_state}")
    if context is None:
        context = RunContext()

    segments: list[tuple[ElectronState, float]] = []
    state = entry_state
    if seq.slack > 0.0:
        segments.append((state, seq.slack))

    state, mw1_failed = _apply_pulse(state, seq.flip_probability, noise.p_mw, rng)
    segments.append((state, seq.inter_pulse_delay))
    mw2_failed = False
    if seq.has_middle_pi:
        state, mw2_failed = _apply_pulse(state, 1.0, noise.p_mw, rng)
        segments.append((state, seq.inter_pulse_delay))

    pumped = state is not ElectronState.MS0
    pump_state = state if pumped else None
    pump_duration = 0.0
    overran = False
    if pumped:
        tau_eff = max(noise.tau + context.delta_tau, TAU_FLOOR)
        draw = -tau_eff * math.log(1.0 - rng.random())
        if draw < seq.repump_duration:
            pump_duration = draw
            segments.append((state, draw))
            segments.append((ElectronState.MS0, seq.repump_duration - draw))
            state = ElectronState.MS0
        else:
            pump_duration = seq.repump_duration
            segments.append((state, seq.repump_duration))
            overran = True
    else:
        segments.append((state, seq.repump_duration))

    floor_failed = noise.p_init > 0.0 and rng.random() < noise.p_init
    init_failed = overran or floor_failed
    if init_failed:
        state = (
            ElectronState.MS_MINUS1 if rng.random() < 0.5 else ElectronState.MS_PLUS1
        )
    segments.append((state, seq.post_repump_delay))

    return AttemptOutcome(
        trajectory=ElectronTrajectory(segments=tuple(segments)),
        ended_in_ms0=state is ElectronState.MS0,
        init_failed=init_failed,
        mw_failed=mw1_failed or mw2_failed,
        pumped=pumped,
        pump_state=pump_state,
        pump_duration=pump_duration,
    )


def attempt_phase_branches(
    seq: AttemptSequence,
    spin: NuclearSpinParams,
    field_params: FieldParams,
    p_mw: float,
) -> list[tuple[float, float]]:
    """Analytic phase branches of a pi/2 -- t -- pi -- t attempt.

    With an ideal initial pi/2 the nuclear spin acquires, per attempt,

        phi_bar = (omega_0 + omega_m1) * t     with prob 1 - p_mw,
        phi_0   = 2 omega_0  * t               with prob p_mw / 2,
        phi_1   = 2 omega_m1 * t               with prob p_mw / 2,

    the failure branches coming from a skipped refocusing pi pulse that
    leaves the electron parked in ms = 0 or ms = -1 for both delays.
    Zero-probability branches are omitted, so p_mw = 0 returns the single
    deterministic branch.
    """
    if not seq.has_middle_pi:
        raise NonphysicalInputError("phase branches require the refocusing pi pulse")
    if not math.isclose(seq.alpha, HALF_PI, rel_tol=0.0, abs_tol=_ALPHA_TOL):
        raise NonphysicalInputError("phase branches are defined for alpha = pi/2 attempts")
    if not 0.0 <= p_mw <= 1.0:
        raise NonphysicalInputError(f"p_mw must be in [0, 1], got {p_mw}")
    t = seq.inter_pulse_delay
    omega_0 = field_params.omega_larmor
    omega_m1 = precession_frequency(ElectronState.MS_MINUS1, spin, field_params)
    branches = [
        (0.5 * p_mw, 2.0 * omega_0 * t),
        (0.5 * p_mw, 2.0 * omega_m1 * t),
        (1.0 - p_mw, (omega_0 + omega_m1) * t),
    ]
    return [(prob, phase) for prob, phase in branches if prob > 0.0]

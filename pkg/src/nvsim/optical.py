"""Quantum-jump model of the optical reset cycle.

The simulated manifold is {ms0, ms-1, ms+1, E', S}.  A resonant pulse
excites the ms = +/-1 ground states to the effective excited level E'
(shorthand for the two nearly degenerate excited states that connect to
ms = +/-1); ms0 is dark to it.  E' decays radiatively back to the state it
came from, or crosses to the metastable singlet S at the ISC rate; S
relaxes into the ground triplet with fixed branching odds.  Reaching ms0
is absorbing for a single pump pulse, which is what pump-probe occupancy
measurements rely on.

Excitation is an incoherent rate following the pulse intensity envelope,
normalized so a lone calibrated pulse transfers a two-level system with
probability about 0.95; coherent Rabi dynamics are out of scope.  While a
pulse is on, propagation is stepped with every rate times the step kept at
or below 0.05 (first-order jump probabilities then stay good to a few
permille); once the pulse is off, waiting times are drawn exactly.

The stepped/exact split and the uniform-draw order per trajectory are a
contract shared with the compiled kernel so the two can be compared bit
for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .errors import (
    InconsistentInputsError,
    InvalidStateError,
    NonphysicalInputError,
    StepSizeError,
)
from .physics import ElectronState

# max(rate) * dt for stepped propagation; 0.1 is the hard rejection limit
STEP_SAFETY = 0.05
STEP_LIMIT = 0.1

# Gaussian envelopes are truncated at +/- 4 sigma.
GAUSSIAN_SUPPORT_SIGMAS = 4.0

# Area ~0.95 two-level transfer.  The calibrated default is rectangular:
# carved pulses have steep edges, and a long envelope tail would let the
# electron decay and absorb again, overstating double excitation.  The
# 2 ns duration is short against the excited-state lifetime and puts the
# simulated double-excitation odds at the few-percent level observed.
DEFAULT_PULSE_AREA = 3.0
DEFAULT_PI_DURATION = 2.0e-9

_STATE_CODE = {
    ElectronState.MS0: 0,
    ElectronState.MS_MINUS1: 1,
    ElectronState.MS_PLUS1: 2,
}
_CODE_STATE = {
    0: ElectronState.MS0,
    1: ElectronState.MS_MINUS1,
    2: ElectronState.MS_PLUS1,
}


def isc_rate_from_lifetimes(t_ex: float, t_eprime: float) -> float:
    """Intersystem-crossing rate 1/t_E' - 1/t_Ex, in 1/s.

    Assumes the spin-conserving radiative rate is common to both excited
    manifolds and that the crossing out of Ex is negligible, so the whole
    lifetime difference is attributed to the E' -> S channel.

    Raises
    ------
    NonphysicalInputError
        If ``t_eprime >= t_ex`` (the subtraction would be <= 0).
    """
    if t_ex <= 0.0 or t_eprime <= 0.0:
        raise NonphysicalInputError("lifetimes must be positive")
    if t_eprime >= t_ex:
        raise NonphysicalInputError(
            f"t_eprime = {t_eprime} must be shorter than t_ex = {t_ex}"
        )
    return 1.0 / t_eprime - 1.0 / t_ex


def symmetric_branching(b0: float) -> tuple[float, float, float]:
    """Branching triple (b0, b+, b-) with the +/-1 channels equal."""
    if not 0.0 <= b0 <= 1.0:
        raise NonphysicalInputError(f"b0 must be in [0, 1], got {b0}")
    rest = 0.5 * (1.0 - b0)
    return (b0, rest, rest)


@dataclass(frozen=True)
class OpticalLevelModel:
    """Rates and branching of the optical cycle.

    ``branching`` orders the singlet decay channels as (to ms0, to ms+1,
    to ms-1) and must sum to one.  ``gamma_xs`` (crossing out of the ms0
    excited state) is carried for completeness but the pump dynamics never
    populate that manifold.  ``strain_shift`` is per-sample metadata in Hz
    and does not enter the dynamics.
    """

    t_ex: float
    t_eprime: float
    gamma_es: float
    t_singlet: float
    branching: tuple[float, float, float]
    gamma_xs: float = 0.0
    strain_shift: float | None = None

    def __post_init__(self):
        for name in ("t_ex", "t_eprime", "t_singlet"):
            if getattr(self, name) <= 0.0:
                raise NonphysicalInputError(f"{name} must be positive")
        if self.gamma_es < 0.0 or self.gamma_xs < 0.0:
            raise NonphysicalInputError("crossing rates must be >= 0")
        if self.gamma_es * self.t_eprime > 1.0 + 1e-12:
            raise NonphysicalInputError(
                "gamma_es exceeds the total E' decay rate 1/t_eprime"
            )
        triple = tuple(float(b) for b in self.branching)
        if len(triple) != 3 or any(b < 0.0 for b in triple):
            raise NonphysicalInputError(
                f"branching must be three ratios >= 0, got {self.branching}"
            )
        total = sum(triple)
        if not math.isclose(total, 1.0, rel_tol=0.0, abs_tol=1e-6):
            raise NonphysicalInputError(
                f"branching must sum to 1, got {total}; normalize ratios first"
            )
        object.__setattr__(self, "branching", (triple[0] / total, triple[1] / total, triple[2] / total))

    @classmethod
    def from_lifetimes(
        cls,
        t_ex: float,
        t_eprime: float,
        t_singlet: float,
        *,
        branching: tuple[float, float, float] = (0.8, 0.1, 0.1),
        gamma_xs: float = 0.0,
        strain_shift: float | None = None,
    ) -> "OpticalLevelModel":
        """ISC rate from the lifetime difference; see isc_rate_from_lifetimes."""
        total = sum(branching)
        if total <= 0.0:
            raise NonphysicalInputError(f"branching ratios sum to {total}")
        normalized = tuple(b / total for b in branching)
        return cls(
            t_ex=t_ex,
            t_eprime=t_eprime,
            gamma_es=isc_rate_from_lifetimes(t_ex, t_eprime),
            t_singlet=t_singlet,
            branching=normalized,
            gamma_xs=gamma_xs,
            strain_shift=strain_shift,
        )

    @property
    def isc_probability(self) -> float:
        """Chance that one E' visit ends in the singlet."""
        return self.gamma_es * self.t_eprime

    @property
    def max_decay_rate(self) -> float:
        return max(1.0 / self.t_eprime, 1.0 / self.t_singlet)


@dataclass(frozen=True)
class PulseEnvelope:
    """Intensity envelope of one excitation pulse.

    ``width`` is the FWHM for a gaussian and the full duration for a
    square pulse; ``start`` is where the support begins (a gaussian is
    centred 4 sigma after it and cut off 4 sigma past the centre).
    ``peak_rate`` is the excitation rate at the envelope maximum, in 1/s.
    """

    shape: str
    width: float
    peak_rate: float
    start: float = 0.0

    def __post_init__(self):
        if self.shape not in ("gaussian", "square"):
            raise NonphysicalInputError(
                f"shape must be 'gaussian' or 'square', got {self.shape!r}"
            )
        if self.width <= 0.0:
            raise NonphysicalInputError(f"width must be positive, got {self.width}")
        if self.peak_rate < 0.0:
            raise NonphysicalInputError(f"peak_rate must be >= 0, got {self.peak_rate}")

    @property
    def sigma(self) -> float:
        if self.shape != "gaussian":
            raise NonphysicalInputError("sigma is defined for gaussian pulses only")
        return self.width / (2.0 * math.sqrt(2.0 * math.log(2.0)))

    @property
    def support(self) -> tuple[float, float]:
        if self.shape == "square":
            return (self.start, self.start + self.width)
        half = GAUSSIAN_SUPPORT_SIGMAS * self.sigma
        return (self.start, self.start + 2.0 * half)

    @property
    def center(self) -> float:
        lo, hi = self.support
        return 0.5 * (lo + hi)

    @property
    def area(self) -> float:
        """Time integral of the rate over the support (~ pulse area)."""
        if self.shape == "square":
            return self.peak_rate * self.width
        coverage = math.erf(GAUSSIAN_SUPPORT_SIGMAS / math.sqrt(2.0))
        return self.peak_rate * self.sigma * math.sqrt(2.0 * math.pi) * coverage

    @property
    def transfer_probability(self) -> float:
        """Two-level estimate 1 - exp(-area) of the population transfer."""
        return 1.0 - math.exp(-self.area)

    def rate(self, t: float) -> float:
        lo, hi = self.support
        if not lo <= t <= hi:
            return 0.0
        if self.shape == "square":
            return self.peak_rate
        arg = (t - self.center) / self.sigma
        return self.peak_rate * math.exp(-0.5 * arg * arg)

    @classmethod
    def calibrated_pi(
        cls,
        width: float | None = None,
        *,
        area: float = DEFAULT_PULSE_AREA,
        shape: str = "square",
        start: float = 0.0,
    ) -> "PulseEnvelope":
        """Excitation pulse whose rate integral over the support is ``area``.

        The default is the calibrated reset pulse: rectangular, 2 ns, 0.95
        two-level transfer.  ``shape="gaussian"`` reads ``width`` as the
        FWHM instead and normalizes the truncated integral.
        """
        if area <= 0.0:
            raise NonphysicalInputError(f"area must be positive, got {area}")
        if shape == "square":
            width = DEFAULT_PI_DURATION if width is None else width
            return cls(shape="square", width=width, peak_rate=area / width, start=start)
        if shape != "gaussian":
            raise NonphysicalInputError(
                f"shape must be 'gaussian' or 'square', got {shape!r}"
            )
        width = 2.6e-9 if width is None else width
        sigma = width / (2.0 * math.sqrt(2.0 * math.log(2.0)))
        coverage = math.erf(GAUSSIAN_SUPPORT_SIGMAS / math.sqrt(2.0))
        peak = area / (sigma * math.sqrt(2.0 * math.pi) * coverage)
        return cls(shape="gaussian", width=width, peak_rate=peak, start=start)


def _step_plan(pulse: PulseEnvelope, model: OpticalLevelModel, dt: float | None):
    lo, hi = pulse.support
    span = hi - lo
    max_rate = max(pulse.peak_rate, model.max_decay_rate)
    if dt is None:
        if max_rate <= 0.0:
            return 1, span
        n_steps = max(int(math.ceil(span * max_rate / STEP_SAFETY)), 1)
    else:
        if dt <= 0.0:
            raise StepSizeError(f"dt must be positive, got {dt}")
        if dt * max_rate > STEP_LIMIT:
            raise StepSizeError(
                f"dt = {dt} gives rate*dt = {dt * max_rate:.3f} > {STEP_LIMIT}; "
                "first-order jump probabilities would be unreliable"
            )
        n_steps = max(int(math.ceil(span / dt)), 1)
    return n_steps, span / n_steps


@dataclass(frozen=True, eq=False)
class TrajectoryPath:
    """Time-stamped state path of one trajectory.

    ``events`` holds (time, state-entered) pairs starting at time zero;
    the path is settled (ground state) after the last event.
    """

    events: tuple
    n_excitations: int
    n_singlet: int
    t_enter_ms0: float
    t_first_eprime: float
    first_eprime_dwell: float
    end_time: float

    @property
    def final_state(self) -> ElectronState:
        return self.events[-1][1]

    def state_at(self, t: float) -> ElectronState:
        current = self.events[0][1]
        for when, state in self.events:
            if when > t:
                break
            current = state
        return current


def jump_trajectory(
    model: OpticalLevelModel,
    pulses,
    initial: ElectronState = ElectronState.MS_MINUS1,
    horizon: float | None = None,
    rng=None,
    dt: float | None = None,
) -> TrajectoryPath:
    """Realise one stochastic path through the optical cycle.

    Parameters
    ----------
    model, pulses
        Level model and one PulseEnvelope or a non-overlapping sequence.
    initial : ElectronState
        ms0 or ms-1 (the states a pump-probe run starts from).
    horizon : float, optional
        Must cover every pulse support; the path itself always runs until
        the trajectory settles in the ground triplet.
    rng
        Generator with a ``random()`` method; a fresh RandomState when
        omitted.
    dt : float, optional
        Step override for the pulsed windows (guarded by the rate*dt
        limit).

    Returns
    -------
    TrajectoryPath
    """
    if initial not in (ElectronState.MS0, ElectronState.MS_MINUS1):
        raise InvalidStateError(f"pump trajectories start in ms0 or ms-1, got {initial}")
    if isinstance(pulses, PulseEnvelope):
        pulses = [pulses]
    pulses = sorted(pulses, key=lambda p: p.support[0])
    if not pulses:
        raise NonphysicalInputError("at least one pulse is required")
    for first, second in zip(pulses, pulses[1:]):
        if second.support[0] < first.support[1]:
            raise NonphysicalInputError("overlapping pulse supports are not supported")
    if horizon is not None and horizon < pulses[-1].support[1]:
        raise NonphysicalInputError(
            f"horizon {horizon} ends before the last pulse ({pulses[-1].support[1]})"
        )
    if rng is None:
        rng = np.random.RandomState()

    state = _STATE_CODE[initial]
    origin = 1
    events = [(0.0, initial)]
    n_exc = 0
    n_singlet = 0
    t_enter_ms0 = 0.0 if state == 0 else math.inf
    t_ep_entry = math.inf
    ep_dwell = math.inf
    first_visit_open = False
    p_isc = model.isc_probability
    b0, bp, _ = model.branching
    cum_b0 = b0
    cum_b01 = b0 + bp
    t_now = 0.0

    def relax(limit: float) -> float:
        # exact waiting times; a draw that overshoots the limit leaves the
        # state untouched there (memorylessness makes this exact)
        nonlocal state, origin, n_singlet, t_enter_ms0, ep_dwell, first_visit_open
        t = t_now
        while state in (3, 4):
            mean = model.t_eprime if state == 3 else model.t_singlet
            t_jump = t + -mean * math.log(1.0 - rng.random())
            if t_jump >= limit:
                return limit
            t = t_jump
            if state == 3:
                if first_visit_open:
                    ep_dwell = t - t_ep_entry
                    first_visit_open = False
                if rng.random() < p_isc:
                    state = 4
                    n_singlet += 1
                else:
                    state = origin
                events.append((t, ElectronState.SINGLET if state == 4 else _CODE_STATE[state]))
            else:
                u = rng.random()
                if u < cum_b0:
                    state = 0
                    t_enter_ms0 = t
                elif u < cum_b01:
                    state = 2
                else:
                    state = 1
                events.append((t, _CODE_STATE[state]))
        return max(t, limit) if limit != math.inf else t

    for pulse in pulses:
        support_start, support_end = pulse.support
        t_now = relax(support_start)
        n_steps, step = _step_plan(pulse, model, dt)
        is_square = pulse.shape == "square"
        center = 0.0 if is_square else pulse.center
        sigma = 1.0 if is_square else pulse.sigma
        peak = pulse.peak_rate
        inv_te = 1.0 / model.t_eprime
        inv_ts = 1.0 / model.t_singlet
        for i in range(n_steps):
            t_mid = support_start + (i + 0.5) * step
            t_event = support_start + (i + 1.0) * step
            if state == 1 or state == 2:
                if is_square:
                    rate = peak
                else:
                    arg = (t_mid - center) / sigma
                    rate = peak * math.exp(-0.5 * arg * arg)
                if rng.random() < rate * step:
                    origin = state
                    state = 3
                    n_exc += 1
                    if t_ep_entry == math.inf:
                        t_ep_entry = t_event
                        first_visit_open = True
                    events.append((t_event, ElectronState.EXCITED_E_PRIME))
            elif state == 3:
                if rng.random() < inv_te * step:
                    if first_visit_open:
                        ep_dwell = t_event - t_ep_entry
                        first_visit_open = False
                    if rng.random() < p_isc:
                        state = 4
                        n_singlet += 1
                        events.append((t_event, ElectronState.SINGLET))
                    else:
                        state = origin
                        events.append((t_event, _CODE_STATE[state]))
            elif state == 4:
                if rng.random() < inv_ts * step:
                    u = rng.random()
                    if u < cum_b0:
                        state = 0
                        t_enter_ms0 = t_event
                    elif u < cum_b01:
                        state = 2
                    else:
                        state = 1
                    events.append((t_event, _CODE_STATE[state]))
        t_now = support_end
    settle = relax(math.inf)
    end_time = max(settle, pulses[-1].support[1], horizon or 0.0)

    return TrajectoryPath(
        events=tuple(events),
        n_excitations=n_exc,
        n_singlet=n_singlet,
        t_enter_ms0=t_enter_ms0,
        t_first_eprime=t_ep_entry,
        first_eprime_dwell=ep_dwell,
        end_time=end_time,
    )


@dataclass(frozen=True, eq=False)
class PumpProbeCurve:
    """ms0 occupancy versus pump-probe delay."""

    delay: np.ndarray
    f0: np.ndarray
    std_err: np.ndarray
    metadata: dict


def _ensemble_columns(model, pulse, trials, master_seed, initial, dt, engine):
    support_start, support_end = pulse.support
    n_steps, _ = _step_plan(pulse, model, dt)
    seeds = np.random.SeedSequence(master_seed).generate_state(trials, np.uint32)
    if engine == "kernel":
        out = np.empty((trials, 6))
        _kernels.optical_paths(
            seeds,
            pulse.shape == "square",
            support_start,
            support_end,
            n_steps,
            0.0 if pulse.shape == "square" else pulse.center,
            1.0 if pulse.shape == "square" else pulse.sigma,
            pulse.peak_rate,
            model.t_eprime,
            model.isc_probability,
            model.t_singlet,
            model.branching[0],
            model.branching[0] + model.branching[1],
            _STATE_CODE[initial],
            out,
        )
        return out
    if engine != "reference":
        raise NonphysicalInputError(
            f"engine must be 'kernel' or 'reference', got {engine!r}"
        )
    out = np.empty((trials, 6))
    for k, seed in enumerate(seeds):
        rng = np.random.RandomState(int(seed))
        path = jump_trajectory(model, pulse, initial=initial, rng=rng, dt=dt)
        out[k] = (
            path.t_enter_ms0,
            path.n_excitations,
            path.n_singlet,
            _STATE_CODE[path.final_state],
            path.t_first_eprime,
            path.first_eprime_dwell,
        )
    return out


def pump_probe_curve(
    model: OpticalLevelModel,
    pulse: PulseEnvelope,
    delays,
    *,
    trials: int = 20000,
    master_seed: int = 0,
    probe_window: float = 40e-9,
    window_average: bool = False,
    initial: ElectronState = ElectronState.MS_MINUS1,
    dt: float | None = None,
    engine: str = "kernel",
) -> PumpProbeCurve:
    """ms0 occupancy after one pump pulse, versus probe delay.

    Delays are measured from the end of the pump envelope to the start of
    the probe window, and the occupancy is evaluated at the window start
    (``window_average=True`` averages the absorbing-state occupancy over
    the 40 ns window instead; with the singlet relaxation almost an order
    of magnitude slower, the difference is a small smoothing).

    Returns
    -------
    PumpProbeCurve
        With metadata: per-pulse singlet probability ``p_singlet``, double
        excitation probability ``p_double``, the settled ``asymptote`` and
        the zero-delay occupancy ``f_zero``.
    """
    delays = np.asarray(delays, dtype=float).ravel()
    if delays.size == 0 or np.any(delays < 0.0) or not np.all(np.isfinite(delays)):
        raise NonphysicalInputError("delays must be finite and >= 0")
    if probe_window <= 0.0:
        raise NonphysicalInputError(f"probe_window must be positive, got {probe_window}")
    if trials < 1:
        raise NonphysicalInputError(f"trials must be >= 1, got {trials}")
    if initial not in (ElectronState.MS0, ElectronState.MS_MINUS1):
        raise InvalidStateError(f"pump trajectories start in ms0 or ms-1, got {initial}")

    columns = _ensemble_columns(model, pulse, trials, master_seed, initial, dt, engine)
    t_enter = columns[:, 0]
    t_ref = pulse.support[1]
    f0 = np.empty_like(delays)
    err = np.empty_like(delays)
    for j, d in enumerate(delays):
        if window_average:
            filled = np.clip((t_ref + d + probe_window - t_enter) / probe_window, 0.0, 1.0)
            f0[j] = filled.mean()
            err[j] = filled.std(ddof=1) / math.sqrt(trials) if trials > 1 else 0.0
        else:
            hit = float(np.count_nonzero(t_enter <= t_ref + d)) / trials
            f0[j] = hit
            err[j] = math.sqrt(hit * (1.0 - hit) / trials)
    asymptote = float(np.count_nonzero(np.isfinite(t_enter))) / trials
    f_zero = float(np.count_nonzero(t_enter <= t_ref)) / trials
    metadata = {
        "p_singlet": float(np.count_nonzero(columns[:, 2] >= 1.0)) / trials,
        "p_double": float(np.count_nonzero(columns[:, 1] >= 2.0)) / trials,
        "mean_excitations": float(columns[:, 1].mean()),
        "asymptote": asymptote,
        "f_zero": f_zero,
        "trials": trials,
        "master_seed": master_seed,
        "engine": engine,
    }
    return PumpProbeCurve(delay=delays, f0=f0, std_err=err, metadata=metadata)


def branching_from_measurement(
    p_s: float,
    f0_asymptote: float,
    symmetric: bool = True,
    mode: str = "single",
    *,
    model: OpticalLevelModel | None = None,
    pulse: PulseEnvelope | None = None,
    trials: int = 20000,
    master_seed: int = 0,
    tol: float = 1e-3,
    max_iter: int = 60,
) -> tuple[float, float, float]:
    """Invert a pump-probe asymptote to singlet branching ratios.

    ``mode="single"`` uses the one-excitation relation F0 = p_s * b0 (the
    probe sees ms0 only if the one singlet visit relaxed there).
    ``mode="jump"`` instead bisects b0 against the full jump-simulated
    asymptote with common random numbers, accounting for double
    excitation; it needs ``model`` and ``pulse`` templates.  Both
    inversions assume the +/-1 channels are symmetric, which is the only
    identifiable split given a single measured number.
    """
    if not symmetric:
        raise InconsistentInputsError(
            "a single asymptote cannot split b+ from b-; symmetric=False is underdetermined"
        )
    if mode == "single":
        if not 0.0 < p_s <= 1.0:
            raise NonphysicalInputError(f"p_s must be in (0, 1], got {p_s}")
        if not 0.0 < f0_asymptote:
            raise InconsistentInputsError(
                f"asymptote must be positive, got {f0_asymptote}"
            )
        b0 = f0_asymptote / p_s
        if b0 > 1.0 + 1e-9:
            raise InconsistentInputsError(
                f"asymptote {f0_asymptote} exceeds p_s = {p_s}; no branching solves it"
            )
        return symmetric_branching(min(b0, 1.0))
    if mode != "jump":
        raise NonphysicalInputError(f"mode must be 'single' or 'jump', got {mode!r}")
    if model is None or pulse is None:
        raise InconsistentInputsError("mode='jump' needs model and pulse templates")

    def asymptote(b0: float) -> float:
        candidate = replace(model, branching=symmetric_branching(b0))
        columns = _ensemble_columns(
            candidate, pulse, trials, master_seed, ElectronState.MS_MINUS1, None, "kernel"
        )
        return float(np.count_nonzero(np.isfinite(columns[:, 0]))) / trials

    lo, hi = 0.0, 1.0
    # asymptote(b0) is monotone here: common seeds keep the set of singlet
    # visits fixed and each one relaxes to ms0 iff its branch draw falls
    # below b0
    f_hi = asymptote(hi)
    if f0_asymptote > f_hi + tol:
        raise InconsistentInputsError(
            f"asymptote {f0_asymptote} exceeds the b0 = 1 ceiling {f_hi:.4f}"
        )
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if asymptote(mid) < f0_asymptote:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return symmetric_branching(0.5 * (lo + hi))

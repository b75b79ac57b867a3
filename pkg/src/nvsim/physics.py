"""Electron-state-dependent nuclear precession.

A weakly coupled carbon-13 spin precesses at the bare Larmor frequency
omega_0 while the electron sits in ms = 0.  In ms = -1 or ms = +1 the
hyperfine interaction shifts and tilts the quantisation axis, giving

    omega_{+/-1} = sqrt((omega_0 +/- A_par)**2 + A_perp**2).

The effective splitting Delta_omega = |omega_0 - omega_{-1}| is the figure
of merit for dephasing: every interval the electron spends out of ms = 0
winds an extra phase Delta_omega * t onto the nuclear superposition.  For
spins characterised only by a measured Delta_omega (no published hyperfine
split) the shift approximation omega_{-1} = omega_0 + Delta_omega,
omega_{+1} = omega_0 - Delta_omega is used instead.

All frequencies in this package are angular (rad/s) unless a name says
otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .errors import (
    InvalidStateError,
    MissingHyperfineError,
    NonphysicalInputError,
    PhaseMatchingError,
)

TWO_PI = 2.0 * math.pi

# Implied by the calibrated nuclear Larmor frequency of 443.275 kHz at the
# 414 G working point; agrees with the carbon-13 literature value to 0.02%.
GAMMA_C13_HZ_PER_GAUSS = 443_275.0 / 414.0


class ElectronState(Enum):
    """Electron levels tracked by the simulators.

    The ground-state triplet drives nuclear precession; the two excited
    orbital branches and the singlet only appear in the optical module.
    """

    MS0 = "ms0"
    MS_MINUS1 = "ms-1"
    MS_PLUS1 = "ms+1"
    EXCITED_E_PRIME = "eprime"
    EXCITED_EX = "ex"
    SINGLET = "singlet"


GROUND_TRIPLET = frozenset(
    {ElectronState.MS0, ElectronState.MS_MINUS1, ElectronState.MS_PLUS1}
)


@dataclass(frozen=True)
class FieldParams:
    """Static magnetic-field working point.

    Parameters
    ----------
    omega_larmor : float
        Bare nuclear Larmor frequency omega_0 in rad/s.
    """

    omega_larmor: float

    def __post_init__(self):
        if not (self.omega_larmor > 0.0) or not math.isfinite(self.omega_larmor):
            raise NonphysicalInputError(
                f"omega_larmor must be finite and positive, got {self.omega_larmor}"
            )

    @classmethod
    def from_gauss(cls, b_gauss: float, gamma_hz_per_gauss: float = GAMMA_C13_HZ_PER_GAUSS) -> "FieldParams":
        """Build from a field magnitude in gauss, omega_0 = 2 pi gamma |B|."""
        if b_gauss <= 0.0:
            raise NonphysicalInputError(f"field must be positive, got {b_gauss} G")
        return cls(omega_larmor=TWO_PI * gamma_hz_per_gauss * b_gauss)

    @property
    def larmor_period(self) -> float:
        """Bare precession period 2 pi / omega_0 in seconds."""
        return TWO_PI / self.omega_larmor


@dataclass(frozen=True)
class NuclearSpinParams:
    """Hyperfine and coherence parameters of one carbon-13 spin.

    Exactly one coupling description must be supplied: either the parallel
    and perpendicular hyperfine components ``a_par``/``a_perp`` or the
    effective splitting ``delta_omega`` (all rad/s).  ``shift_approximation``
    controls whether a splitting-only spin may be queried for ms = +/-1
    frequencies via omega_{-/+1} = omega_0 +/- Delta_omega.

    ``t2_hahn`` defaults to the echo-protected coherence time of the
    working sample (60 ms); ``t2_star`` has no sensible default and must
    be given.
    """

    label: str
    t2_star: float
    t2_hahn: float = 60e-3
    a_par: float | None = None
    a_perp: float | None = None
    delta_omega: float | None = None
    shift_approximation: bool = True

    def __post_init__(self):
        has_hyperfine = self.a_par is not None or self.a_perp is not None
        if has_hyperfine and (self.a_par is None or self.a_perp is None):
            raise NonphysicalInputError(
                f"spin {self.label!r}: a_par and a_perp must be given together"
            )
        if has_hyperfine and self.delta_omega is not None:
            raise NonphysicalInputError(
                f"spin {self.label!r}: give either (a_par, a_perp) or delta_omega, not both"
            )
        if not has_hyperfine and self.delta_omega is None:
            raise NonphysicalInputError(
                f"spin {self.label!r}: one of (a_par, a_perp) or delta_omega is required"
            )
        if self.delta_omega is not None and self.delta_omega <= 0.0:
            raise NonphysicalInputError(
                f"spin {self.label!r}: delta_omega must be positive, got {self.delta_omega}"
            )
        for name in ("t2_star", "t2_hahn"):
            value = getattr(self, name)
            if not (value > 0.0):
                raise NonphysicalInputError(
                    f"spin {self.label!r}: {name} must be positive, got {value}"
                )

    @property
    def has_hyperfine(self) -> bool:
        return self.a_par is not None

    @classmethod
    def from_hyperfine(cls, label: str, a_par: float, a_perp: float, t2_star: float, **kw) -> "NuclearSpinParams":
        return cls(label=label, t2_star=t2_star, a_par=a_par, a_perp=a_perp, **kw)

    @classmethod
    def from_delta_omega(cls, label: str, delta_omega: float, t2_star: float, **kw) -> "NuclearSpinParams":
        return cls(label=label, t2_star=t2_star, delta_omega=delta_omega, **kw)


@dataclass(frozen=True)
class ElectronTrajectory:
    """Piecewise-constant electron state history over one or more attempts.

    ``segments`` is a sequence of (state, duration) pairs played back to
    back starting at time zero.  ``echo_marks`` are absolute times at which
    a nuclear pi pulse inverts the sense of subsequent phase accumulation;
    they must be strictly increasing and lie within the total duration.
    """

    segments: tuple[tuple[ElectronState, float], ...]
    echo_marks: tuple[float, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple((s, float(d)) for s, d in self.segments))
        object.__setattr__(self, "echo_marks", tuple(float(t) for t in self.echo_marks))
        for state, duration in self.segments:
            if not isinstance(state, ElectronState):
                raise InvalidStateError(f"not an ElectronState: {state!r}")
            if duration < 0.0 or not math.isfinite(duration):
                raise NonphysicalInputError(f"segment duration must be >= 0, got {duration}")
        total = self.duration
        previous = -math.inf
        for mark in self.echo_marks:
            if mark <= previous:
                raise NonphysicalInputError(f"echo marks must be strictly increasing, got {self.echo_marks}")
            if mark < 0.0 or mark > total:
                raise NonphysicalInputError(
                    f"echo mark {mark} outside trajectory of duration {total}"
                )
            previous = mark

    @property
    def duration(self) -> float:
        return sum(d for _, d in self.segments)


# ---------------------------------------------------------------------------
# frequency map
# ---------------------------------------------------------------------------

def precession_frequency(state: ElectronState, spin: NuclearSpinParams, field_params: FieldParams) -> float:
    """Nuclear precession frequency conditioned on the electron state.

    Parameters
    ----------
    state : ElectronState
        Must belong to the ground-state triplet.
    spin, field_params
        Coupling description and working point.

    Returns
    -------
    float
        Angular frequency in rad/s.

    Raises
    ------
    InvalidStateError
        If ``state`` is not a ground-triplet level.
    MissingHyperfineError
        If the spin carries only ``delta_omega`` and the shift
        approximation is disabled.
    """
    if state not in GROUND_TRIPLET:
        raise InvalidStateError(f"no nuclear precession frequency for electron state {state}")
    omega0 = field_params.omega_larmor
    if state is ElectronState.MS0:
        return omega0
    if spin.has_hyperfine:
        sign = -1.0 if state is ElectronState.MS_MINUS1 else 1.0
        # omega_{-1} uses omega_0 + A_par under the sign convention where a
        # positive A_par pushes the ms = -1 manifold up in frequency.
        return math.hypot(omega0 - sign * spin.a_par, spin.a_perp)
    if not spin.shift_approximation:
        raise MissingHyperfineError(
            f"spin {spin.label!r} has no hyperfine components and the shift approximation is disabled"
        )
    shift = spin.delta_omega if state is ElectronState.MS_MINUS1 else -spin.delta_omega
    omega = omega0 + shift
    if omega <= 0.0:
        raise NonphysicalInputError(
            f"spin {spin.label!r}: shift approximation gives non-positive frequency for {state}"
        )
    return omega


def delta_omega(spin: NuclearSpinParams, field_params: FieldParams) -> float:
    """Effective splitting |omega_0 - omega_{-1}| in rad/s."""
    if not spin.has_hyperfine:
        return spin.delta_omega
    return abs(
        field_params.omega_larmor
        - precession_frequency(ElectronState.MS_MINUS1, spin, field_params)
    )


def phase_match_delay(spin: NuclearSpinParams, field_params: FieldParams, k: int = 1) -> float:
    """Inter-pulse delay k * 2 pi / Delta_omega that closes the phase slip.

    At this delay the conditional phase acquired in ms = -1 relative to
    ms = 0 is a multiple of 2 pi, so microwave-error branches rephase.
    """
    if k < 1:
        raise NonphysicalInputError(f"k must be a positive integer, got {k}")
    split = delta_omega(spin, field_params)
    if split == 0.0:
        raise PhaseMatchingError(f"spin {spin.label!r} has zero effective splitting")
    return k * TWO_PI / split


def accumulate_phase(traj: ElectronTrajectory, spin: NuclearSpinParams, field_params: FieldParams) -> float:
    """Signed nuclear phase over a trajectory, in the omega_0 rotating frame.

    Each segment contributes sign * (omega(state) - omega_0) * duration,
    where the sign starts at +1 and flips at every echo mark.  Segments are
    split internally at echo marks, so the result is invariant under any
    subdivision of the segment list.

    Returns
    -------
    float
        Accumulated phase in radians (not reduced modulo 2 pi).
    """
    omega0 = field_params.omega_larmor
    marks = list(traj.echo_marks)
    phase = 0.0
    sign = 1.0
    now = 0.0
    mark_index = 0
    for state, duration in traj.segments:
        rate = precession_frequency(state, spin, field_params) - omega0
        remaining = duration
        while mark_index < len(marks) and marks[mark_index] <= now + remaining:
            slice_duration = marks[mark_index] - now
            phase += sign * rate * slice_duration
            now += slice_duration
            remaining -= slice_duration
            sign = -sign
            mark_index += 1
        phase += sign * rate * remaining
        now += remaining
    return phase

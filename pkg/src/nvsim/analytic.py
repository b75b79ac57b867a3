"""Closed-form dephasing models for repeated entangling attempts.

Two mechanisms have tractable expressions:

* stochastic electron reinitialisation: an attempt that leaves the
  electron in ms = +/-1 exposes the nucleus to the shifted frequency for
  a random reset time of spread tau, giving the per-attempt coherence
  factor 1 - p + p * exp(-(Delta_omega * tau)**2 / 2) and a plain
  exponential decay in the attempt number N;

* rare initialisation failures: with per-attempt probability p_init the
  electron starts an attempt in ms = +1 or ms = -1 (equal odds) instead
  of ms = 0, so the transverse nuclear components are a binomial average
  over per-attempt phase classes (phi_0, phi_p1, phi_m1).  The average
  collapses to a power of a three-term complex sum, which is what
  ``binomial_sigma`` evaluates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InconsistentInputsError, NonphysicalInputError
from .physics import (
    ElectronState,
    FieldParams,
    NuclearSpinParams,
    precession_frequency,
)


@dataclass(frozen=True)
class BlokParams:
    """Inputs of the reinitialisation dephasing model.

    Parameters
    ----------
    tau : float
        Mean electron reset time in seconds.
    delta_omega : float
        Effective splitting in rad/s.
    p_one : float
        Probability that an attempt leaves the electron exposed to the
        shifted frequency (1/2 for a pi/2 attempt, 1 for a pi attempt).
    """

    tau: float
    delta_omega: float
    p_one: float

    def __post_init__(self):
        if self.tau <= 0.0:
            raise NonphysicalInputError(f"tau must be positive, got {self.tau}")
        if self.delta_omega <= 0.0:
            raise NonphysicalInputError(f"delta_omega must be positive, got {self.delta_omega}")
        if not 0.0 < self.p_one <= 1.0:
            raise NonphysicalInputError(f"p_one must be in (0, 1], got {self.p_one}")

    @property
    def per_attempt_factor(self) -> float:
        """Coherence retained per attempt, in (0, 1]."""
        x = self.delta_omega * self.tau
        return 1.0 - self.p_one + self.p_one * math.exp(-0.5 * x * x)


def blok_coherence(params: BlokParams, n_attempts) -> np.ndarray:
    """Coherence after ``n_attempts`` entangling attempts.

    Evaluates (1 - p + p * exp(-Delta_omega**2 tau**2 / 2))**N elementwise;
    ``n_attempts`` may be a scalar or array.
    """
    n = np.asarray(n_attempts, dtype=float)
    if np.any(n < 0):
        raise NonphysicalInputError("attempt counts must be non-negative")
    return params.per_attempt_factor ** n


def blok_decay_constant(params: BlokParams) -> float:
    """Number of attempts at which the coherence has fallen to 1/e."""
    return -1.0 / math.log(params.per_attempt_factor)


def tau_from_decay(n_one_over_e: float, delta_omega: float, p_one: float) -> float:
    """Invert the reinitialisation model for the mean reset time.

    Parameters
    ----------
    n_one_over_e : float
        Measured 1/e decay constant in attempts.
    delta_omega : float
        Effective splitting in rad/s.
    p_one : float
        Exposure probability per attempt.

    Returns
    -------
    float
        tau in seconds such that ``blok_decay_constant`` reproduces
        ``n_one_over_e``.

    Raises
    ------
    InconsistentInputsError
        If the decay is too fast to be explained at the given ``p_one``
        (the per-attempt factor would have to be negative).
    """
    if n_one_over_e <= 0.0:
        raise InconsistentInputsError(f"n_one_over_e must be positive, got {n_one_over_e}")
    if delta_omega <= 0.0:
        raise NonphysicalInputError(f"delta_omega must be positive, got {delta_omega}")
    if not 0.0 < p_one <= 1.0:
        raise NonphysicalInputError(f"p_one must be in (0, 1], got {p_one}")
    argument = 1.0 + (math.exp(-1.0 / n_one_over_e) - 1.0) / p_one
    if argument <= 0.0:
        raise InconsistentInputsError(
            f"decay constant {n_one_over_e} is unreachable with p_one = {p_one}"
        )
    return math.sqrt(-2.0 * math.log(argument)) / delta_omega


# ---------------------------------------------------------------------------
# initialisation-failure model
# ---------------------------------------------------------------------------

def binomial_sigma(
    n_attempts: int,
    p_init: float,
    phases: tuple[float, float, float],
    amplitude: float = 1.0,
) -> tuple[float, float]:
    """Transverse nuclear components after N attempts with rare failures.

    Each attempt contributes phase ``phi_0`` when initialisation worked
    and ``phi_p1`` or ``phi_m1`` (equal odds) when it failed; failures are
    independent with probability ``p_init``.  Averaging the resulting
    binomial mixture of phase sums factorises into

        amplitude * ((1 - p) e^{i phi_0}
                     + p/2 e^{i phi_p1} + p/2 e^{i phi_m1})**N.

    Parameters
    ----------
    n_attempts : int
        Number of attempts N >= 0.
    p_init : float
        Per-attempt failure probability in [0, 1].
    phases : tuple of float
        (phi_0, phi_p1, phi_m1) in radians.
    amplitude : float
        Overall scale absorbing unrelated infidelities.

    Returns
    -------
    (float, float)
        Expected (sigma_x, sigma_y) components.
    """
    if n_attempts < 0:
        raise NonphysicalInputError(f"n_attempts must be >= 0, got {n_attempts}")
    if not 0.0 <= p_init <= 1.0:
        raise NonphysicalInputError(f"p_init must be in [0, 1], got {p_init}")
    phi_0, phi_p1, phi_m1 = phases
    base = (1.0 - p_init) * np.exp(1j * phi_0) + 0.5 * p_init * (
        np.exp(1j * phi_p1) + np.exp(1j * phi_m1)
    )
    z = amplitude * base ** n_attempts
    return float(z.real), float(z.imag)


def revival_curve(
    spin: NuclearSpinParams,
    field_params: FieldParams,
    seq,
    post_repump_delays,
    n_attempts: int = 700,
    p_init: float = 7.1e-4,
    amplitude: float = 1.0,
) -> np.ndarray:
    """Coherence versus the delay between reinitialisation and microwaves.

    The per-attempt phase classes are reconstructed from the attempt
    timing: a failed attempt leaves the electron in ms = +/-1 for the
    whole stretch from the end of one repump window to the start of the
    next, i.e. for

        exposure = attempt_duration - repump_duration - T_seq + T,

    where ``T_seq`` is the sequence's own post-repump delay, replaced here
    by each grid value ``T``.  The classes are then phi_s = omega_s *
    exposure evaluated with the spin's frequency map, and the coherence is
    the modulus of ``binomial_sigma``.  Successful attempts rephase exactly
    when the inter-pulse delay is phase matched, so only the exposure
    stretch matters; at T such that Delta_omega * exposure is a multiple
    of 2 pi all classes coincide and the signal revives.

    Returns
    -------
    numpy.ndarray
        Coherence sqrt(sigma_x**2 + sigma_y**2) per delay value.
    """
    delays = np.asarray(post_repump_delays, dtype=float)
    if np.any(delays < 0.0):
        raise NonphysicalInputError("post-repump delays must be non-negative")
    base_exposure = seq.attempt_duration - seq.repump_duration - seq.post_repump_delay
    omega_0 = field_params.omega_larmor
    omega_m1 = precession_frequency(ElectronState.MS_MINUS1, spin, field_params)
    omega_p1 = precession_frequency(ElectronState.MS_PLUS1, spin, field_params)
    out = np.empty_like(delays)
    for i, t_delay in enumerate(delays):
        exposure = base_exposure + t_delay
        sx, sy = binomial_sigma(
            n_attempts,
            p_init,
            (omega_0 * exposure, omega_p1 * exposure, omega_m1 * exposure),
            amplitude,
        )
        out[i] = math.hypot(sx, sy)
    return out

"""Attempt-chain Monte Carlo for nuclear-memory coherence.

A run realises ``n_trials`` independent chains of entangling attempts and
tracks the nuclear phase of each chain in the rotating frame of the bare
Larmor precession.  The coherence after N attempts is the modulus of the
trial average of exp(i phi_N); refocusing pulses on the nucleus enter as
sign flips between prefix sums of the per-attempt phases, so a single pass
per trial serves every requested N and every echo layout.

Quasi-static noise (reset-time and detuning offsets) is drawn once per
trial and held fixed, which is what makes echoes effective against it.
Fast per-attempt randomness comes from the stochastic reinitialisation
itself.  Intrinsic dephasing of the memory and per-attempt depolarisation
are multiplied on analytically for superposition runs; eigenstate runs
instead simulate depolarisation survival directly.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import _kernels
from .analytic import BlokParams, blok_decay_constant
from .attempt import AttemptSequence, NoiseModel
from .errors import (
    BudgetExceededError,
    ConfigError,
    InconsistentInputsError,
    NonphysicalInputError,
)
from .fitting import fit_stretched_exp
from .physics import (
    ElectronState,
    FieldParams,
    NuclearSpinParams,
    accumulate_phase,
    delta_omega,
    precession_frequency,
)

# One attempt realisation is ~30 ns of kernel time; the default budget caps
# a single call at around five minutes of compute.
DEFAULT_ATTEMPT_BUDGET = 10_000_000_000
BUDGET_ENV_VAR = "NVSIM_BUDGET"

SWEEP_AXES = ("tau", "p_mw", "p_init", "power", "field", "delta_omega")

NUCLEAR_STATES = ("superposition", "eigenstate")


def resolve_budget(budget: int | None = None) -> int:
    """Effective attempt budget: explicit argument, else environment, else default."""
    if budget is not None:
        return int(budget)
    raw = os.environ.get(BUDGET_ENV_VAR)
    if raw is None:
        return DEFAULT_ATTEMPT_BUDGET
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"must be an integer, got {raw!r}", path=BUDGET_ENV_VAR) from None


def attempt_phase(outcome, spin, field_params, seq, noise, context) -> float:
    """Nuclear phase contributed by one realised attempt.

    Trajectory phase in the omega_0 frame, minus the calibrated-away mean
    reset phase when ``noise.center_pump_phase`` is set, plus the
    quasi-static detuning of this trial integrated over the attempt.
    """
    phase = accumulate_phase(outcome.trajectory, spin, field_params)
    if outcome.pumped and noise.center_pump_phase:
        pump_rate = (
            precession_frequency(outcome.pump_state, spin, field_params)
            - field_params.omega_larmor
        )
        phase -= pump_rate * noise.tau
    phase += context.delta_detuning * seq.attempt_duration
    return phase


@dataclass(frozen=True)
class RunSpec:
    """Complete description of one Monte-Carlo run.

    ``n_attempts`` is the grid of attempt counts at which coherence is
    reported (strictly increasing, all >= 1).  ``echo_count`` selects how
    many refocusing pulses partition the chain: 0 none, 1 at N/2, 2 at N/4
    and 3N/4 (attempt boundaries, rounded up).  ``initial_nuclear_state``
    picks between a phase-sensitive superposition run and an eigenstate
    population run.
    """

    spin: NuclearSpinParams
    field: FieldParams
    sequence: AttemptSequence
    noise: NoiseModel
    n_attempts: tuple[int, ...]
    n_trials: int = 2000
    echo_count: int = 0
    master_seed: int = 0
    initial_nuclear_state: str = "superposition"
    include_intrinsic_decay: bool = True

    def __post_init__(self):
        grid = tuple(int(n) for n in self.n_attempts)
        object.__setattr__(self, "n_attempts", grid)
        if len(grid) == 0:
            raise NonphysicalInputError("n_attempts grid is empty")
        previous = 0
        for n in grid:
            if n <= previous:
                raise NonphysicalInputError(
                    "n_attempts must be strictly increasing and >= 1"
                )
            previous = n
        if self.n_trials < 1:
            raise NonphysicalInputError(f"n_trials must be >= 1, got {self.n_trials}")
        if self.echo_count not in (0, 1, 2):
            raise NonphysicalInputError(
                f"echo_count must be 0, 1 or 2, got {self.echo_count}"
            )
        if self.initial_nuclear_state not in NUCLEAR_STATES:
            raise NonphysicalInputError(
                f"initial_nuclear_state must be one of {NUCLEAR_STATES}, "
                f"got {self.initial_nuclear_state!r}"
            )
        if self.master_seed < 0:
            raise NonphysicalInputError("master_seed must be >= 0")

    @property
    def max_attempts(self) -> int:
        return self.n_attempts[-1]

    def digest(self) -> str:
        """Stable hash of every model parameter, for output provenance."""
        payload = json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("ascii")).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class CoherenceCurve:
    """Coherence versus attempt count, with one-sigma errors."""

    n: np.ndarray
    coherence: np.ndarray
    std_err: np.ndarray
    metadata: dict = field(default_factory=dict)


def decay_envelope(spec: RunSpec, n_attempts) -> np.ndarray:
    """Analytic multipliers applied on top of the sampled phase average.

    Intrinsic memory dephasing contributes exp(-(N * t_att / T2)^2) with T2
    the echo-protected time when the run contains refocusing pulses and
    T2* otherwise; per-attempt depolarisation contributes (1 - p)^N.
    """
    n = np.asarray(n_attempts, dtype=float)
    envelope = np.ones_like(n)
    if spec.include_intrinsic_decay:
        t2 = spec.spin.t2_hahn if spec.echo_count > 0 else spec.spin.t2_star
        elapsed = n * spec.sequence.attempt_duration
        envelope = envelope * np.exp(-((elapsed / t2) ** 2))
    if spec.noise.p_depol > 0.0:
        envelope = envelope * (1.0 - spec.noise.p_depol) ** n
    return envelope


def _echo_recipe(n: int, echo_count: int) -> tuple[tuple[int, float], ...]:
    # Prefix-sum composition: a refocusing pulse after attempt m turns
    # Phi(N) into 2 Phi(m) - Phi(N); two pulses nest the same way.
    if echo_count == 0:
        return ((n, 1.0),)
    if echo_count == 1:
        return (((n + 1) // 2, 2.0), (n, -1.0))
    return (((n + 3) // 4, 2.0), ((3 * n + 3) // 4, -2.0), (n, 1.0))


def _trial_seeds(spec: RunSpec) -> np.ndarray:
    return np.random.SeedSequence(spec.master_seed).generate_state(
        spec.n_trials, np.uint32
    )


def _superposition_run(spec: RunSpec, engine: str) -> tuple[np.ndarray, np.ndarray]:
    recipes = [_echo_recipe(n, spec.echo_count) for n in spec.n_attempts]
    checkpoint_set = sorted({m for recipe in recipes for m, _ in recipe})
    checkpoints = np.array(checkpoint_set, dtype=np.int64)
    column = {m: i for i, m in enumerate(checkpoint_set)}

    spin, fld, seq, noise = spec.spin, spec.field, spec.sequence, spec.noise
    seeds = _trial_seeds(spec)
    phases = np.empty((spec.n_trials, len(checkpoint_set)))
    if engine == "kernel":
        omega0 = fld.omega_larmor
        rate_m1 = precession_frequency(ElectronState.MS_MINUS1, spin, fld) - omega0
        rate_p1 = precession_frequency(ElectronState.MS_PLUS1, spin, fld) - omega0
        slack = seq.slack if seq.slack > 0.0 else 0.0
        _kernels.chain_phases(
            seeds,
            checkpoints,
            rate_m1,
            rate_p1,
            slack,
            seq.inter_pulse_delay,
            seq.repump_duration,
            seq.post_repump_delay,
            seq.attempt_duration,
            seq.flip_probability,
            seq.has_middle_pi,
            noise.p_mw,
            noise.p_init,
            noise.tau,
            noise.sigma_tau_total,
            noise.sigma_detuning_qs,
            noise.center_pump_phase,
            phases,
        )
    elif engine == "reference":
        for k, seed in enumerate(seeds):
            phases[k] = _kernels.reference_trial_phases(
                int(seed), checkpoints, spin, fld, seq, noise
            )
    else:
        raise NonphysicalInputError(
            f"engine must be 'kernel' or 'reference', got {engine!r}"
        )

    raw = np.empty(len(spec.n_attempts))
    err = np.empty(len(spec.n_attempts))
    for j, recipe in enumerate(recipes):
        phi = np.zeros(spec.n_trials)
        for m, coeff in recipe:
            phi = phi + coeff * phases[:, column[m]]
        cos_phi = np.cos(phi)
        sin_phi = np.sin(phi)
        mx = cos_phi.mean()
        my = sin_phi.mean()
        raw[j] = math.hypot(mx, my)
        if spec.n_trials < 2:
            err[j] = 0.0
            continue
        var_x = cos_phi.var(ddof=1) / spec.n_trials
        var_y = sin_phi.var(ddof=1) / spec.n_trials
        cov_xy = float((cos_phi - mx) @ (sin_phi - my)) / (
            (spec.n_trials - 1) * spec.n_trials
        )
        if raw[j] > 1e-12:
            # first-order propagation of |mean vector| in the mean direction
            quad = mx * mx * var_x + 2.0 * mx * my * cov_xy + my * my * var_y
            err[j] = math.sqrt(max(quad, 0.0)) / raw[j]
        else:
            err[j] = math.sqrt(var_x + var_y)
    return raw, err


def _eigenstate_run(spec: RunSpec) -> tuple[np.ndarray, np.ndarray]:
    # Population decay: the only sampled channel is depolarisation, realised
    # as one survival threshold per trial (chains are memoryless).
    seeds = _trial_seeds(spec)
    n = np.asarray(spec.n_attempts, dtype=float)
    p = spec.noise.p_depol
    if p <= 0.0:
        return np.ones_like(n), np.zeros_like(n)
    uniforms = np.array(
        [np.random.RandomState(int(s)).random_sample() for s in seeds]
    )
    if p >= 1.0:
        survival = np.zeros_like(n)
        return survival, np.zeros_like(n)
    threshold = np.log(uniforms) / math.log1p(-p)
    raw = np.empty_like(n)
    err = np.empty_like(n)
    for j, n_j in enumerate(n):
        alive = float(np.count_nonzero(n_j < threshold)) / spec.n_trials
        raw[j] = alive
        err[j] = math.sqrt(alive * (1.0 - alive) / spec.n_trials)
    return raw, err


def simulate_curve(
    spec: RunSpec, *, engine: str = "kernel", budget: int | None = None
) -> CoherenceCurve:
    """Run the Monte Carlo described by ``spec``.

    Parameters
    ----------
    spec : RunSpec
        Model, grid and trial count.
    engine : str
        ``"kernel"`` for the compiled hot loop, ``"reference"`` for the
        slow trajectory-building path.  Both consume identical random
        streams and give bit-identical curves; the reference exists to pin
        the kernel down in tests.  Ignored for eigenstate runs.
    budget : int, optional
        Cap on ``n_trials * max(n_attempts)``.  Defaults to the
        ``NVSIM_BUDGET`` environment variable or 1e10.

    Returns
    -------
    CoherenceCurve
        Results are deterministic in ``spec.master_seed`` and independent
        of thread count.

    Raises
    ------
    BudgetExceededError
        If the request is larger than the attempt budget.
    """
    cost = spec.n_trials * spec.max_attempts
    allowance = resolve_budget(budget)
    if cost > allowance:
        raise BudgetExceededError(
            f"run needs {cost} attempt realisations, budget is {allowance}; "
            f"raise {BUDGET_ENV_VAR} or thin the run"
        )
    if spec.initial_nuclear_state == "eigenstate":
        raw, err = _eigenstate_run(spec)
        envelope = np.ones_like(raw)
    else:
        raw, err = _superposition_run(spec, engine)
        envelope = decay_envelope(spec, spec.n_attempts)
    metadata = {
        "digest": spec.digest(),
        "engine": "direct" if spec.initial_nuclear_state == "eigenstate" else engine,
        "mode": spec.initial_nuclear_state,
        "echo_count": spec.echo_count,
        "n_trials": spec.n_trials,
        "master_seed": spec.master_seed,
    }
    return CoherenceCurve(
        n=np.asarray(spec.n_attempts, dtype=np.int64),
        coherence=raw * envelope,
        std_err=err * envelope,
        metadata=metadata,
    )


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PowerMap:
    """Repump power to mean reset time: tau(P) = tau_min * (P + P_sat) / P."""

    tau_min: float
    p_sat: float

    def __post_init__(self):
        if self.tau_min <= 0.0:
            raise NonphysicalInputError(f"tau_min must be positive, got {self.tau_min}")
        if self.p_sat <= 0.0:
            raise NonphysicalInputError(f"p_sat must be positive, got {self.p_sat}")

    def tau(self, power: float) -> float:
        if power <= 0.0:
            raise NonphysicalInputError(f"power must be positive, got {power}")
        return self.tau_min * (power + self.p_sat) / power


def power_to_tau(power: float, tau_min: float, p_sat: float) -> float:
    """Saturation model of the optical reset: see ``PowerMap``."""
    return PowerMap(tau_min=tau_min, p_sat=p_sat).tau(power)


@dataclass(frozen=True)
class SweepPoint:
    """Stretched-exponential summary of one sweep setting."""

    value: float
    n_one_over_e: float
    n_err: float
    exponent: float
    exponent_err: float
    amplitude: float
    converged: bool


def apply_axis(
    spec: RunSpec, axis: str, value: float, *, power_map: PowerMap | None = None
) -> RunSpec:
    """Return ``spec`` moved to ``value`` along a sweep axis.

    The ``"field"`` axis (value in gauss) rescales the Larmor frequency and
    keeps the inter-pulse delay locked to the same number of Larmor
    periods; the attempt keeps its idle padding, so its total duration
    shrinks or grows with the delays.
    """
    if axis == "tau":
        return replace(spec, noise=replace(spec.noise, tau=float(value)))
    if axis == "p_mw":
        return replace(spec, noise=replace(spec.noise, p_mw=float(value)))
    if axis == "p_init":
        return replace(spec, noise=replace(spec.noise, p_init=float(value)))
    if axis == "power":
        if power_map is None:
            raise InconsistentInputsError("the power axis requires a PowerMap")
        return replace(spec, noise=replace(spec.noise, tau=power_map.tau(float(value))))
    if axis == "field":
        new_field = FieldParams.from_gauss(float(value))
        scale = spec.field.omega_larmor / new_field.omega_larmor
        seq = spec.sequence
        scaled = AttemptSequence(
            alpha=seq.alpha,
            has_middle_pi=seq.has_middle_pi,
            inter_pulse_delay=seq.inter_pulse_delay * scale,
            post_repump_delay=seq.post_repump_delay,
            repump_duration=seq.repump_duration,
            attempt_duration=math.inf,
            allow_generic_alpha=seq.allow_generic_alpha,
        )
        scaled = replace(
            scaled, attempt_duration=scaled.min_duration + max(seq.slack, 0.0)
        )
        return replace(spec, field=new_field, sequence=scaled)
    if axis == "delta_omega":
        if spec.spin.has_hyperfine:
            raise InconsistentInputsError(
                "the delta_omega axis applies to splitting-only spins; "
                f"{spec.spin.label!r} carries explicit hyperfine components"
            )
        return replace(spec, spin=replace(spec.spin, delta_omega=float(value)))
    raise InconsistentInputsError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


def sweep(
    spec: RunSpec,
    axis: str,
    values,
    *,
    power_map: PowerMap | None = None,
    grid_fn=None,
    engine: str = "kernel",
    budget: int | None = None,
) -> list[SweepPoint]:
    """Simulate and fit a coherence curve at each setting of one axis.

    ``grid_fn(value, spec)`` may supply a per-point attempt grid; without
    it every point reuses ``spec.n_attempts``.  Every point runs from the
    same master seed, so sweeps are reproducible and neighbouring points
    share their quasi-static noise draws.
    """
    points = []
    for value in values:
        moved = apply_axis(spec, axis, float(value), power_map=power_map)
        if grid_fn is not None:
            moved = replace(moved, n_attempts=tuple(int(n) for n in grid_fn(float(value), moved)))
        curve = simulate_curve(moved, engine=engine, budget=budget)
        fit = fit_stretched_exp(curve.n, curve.coherence, curve.std_err)
        points.append(
            SweepPoint(
                value=float(value),
                n_one_over_e=fit.params["n_1e"],
                n_err=fit.errors["n_1e"],
                exponent=fit.params["exponent"],
                exponent_err=fit.errors["exponent"],
                amplitude=fit.params["amplitude"],
                converged=fit.converged,
            )
        )
    return points


def blok_estimate(spec: RunSpec) -> float:
    """Closed-form 1/e attempt count ignoring everything but reset timing.

    Useful for sizing attempt grids before running.  The pump probability
    per attempt follows from the pulse layout: with a refocusing pi pulse
    only attempts whose first rotation left ms = 0 end up pumped.
    """
    flip = spec.sequence.flip_probability
    p_one = (1.0 - flip) if spec.sequence.has_middle_pi else flip
    if p_one <= 0.0:
        return math.inf
    split = delta_omega(spec.spin, spec.field)
    return blok_decay_constant(
        BlokParams(tau=spec.noise.tau, delta_omega=split, p_one=p_one)
    )


def geometric_grid(n_max: int, n_points: int = 24) -> tuple[int, ...]:
    """Integer grid from 1 to ``n_max``, geometrically spaced, deduplicated."""
    if n_max < 1:
        raise NonphysicalInputError(f"n_max must be >= 1, got {n_max}")
    raw = np.geomspace(1.0, float(n_max), num=max(int(n_points), 2))
    grid = sorted({int(round(x)) for x in raw})
    return tuple(max(n, 1) for n in grid)

"""Hot loop of the attempt-chain Monte Carlo.

The kernel realises, per trial, a chain of entangling attempts and records
the cumulative nuclear phase at a set of checkpoint attempt counts.  Echo
composition, envelopes and averaging happen outside; the kernel is echo
agnostic because a mid-run nuclear pi only changes the sign with which
prefix sums are combined.

Reproducibility contract: trial k seeds the generator with seeds[k] and
consumes uniform/normal variates in the exact order written here, which is
also the order ``attempt.realize_attempt`` uses.  numba's in-jit generator
produces the same stream as ``numpy.random.RandomState`` seeded alike, so
``reference_trial_phases`` reproduces the kernel bit for bit; tests assert
that.  Results are therefore independent of the number of threads:
every trial re-seeds the state of whichever thread picks it up.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

# State encoding inside the kernel: 0 = ms0, 1 = ms-1, 2 = ms+1.


@njit(parallel=True, cache=True)
def chain_phases(
    seeds,
    checkpoints,
    rate_m1,
    rate_p1,
    slack,
    inter_pulse_delay,
    repump_duration,
    post_repump_delay,
    attempt_duration,
    flip_probability,
    has_middle_pi,
    p_mw,
    p_init,
    tau,
    sigma_tau,
    sigma_detuning,
    center_pump_phase,
    out,
):
    n_trials = seeds.shape[0]
    n_checkpoints = checkpoints.shape[0]
    max_n = checkpoints[n_checkpoints - 1]
    for k in prange(n_trials):
        np.random.seed(seeds[k])
        delta_tau = sigma_tau * np.random.standard_normal() if sigma_tau > 0.0 else 0.0
        delta_det = (
            sigma_detuning * np.random.standard_normal() if sigma_detuning > 0.0 else 0.0
        )
        tau_eff = tau + delta_tau
        if tau_eff < 1e-12:
            tau_eff = 1e-12
        state = 0
        cumulative = 0.0
        cp = 0
        for attempt_index in range(1, max_n + 1):
            rate_entry = 0.0
            if state == 1:
                rate_entry = rate_m1
            elif state == 2:
                rate_entry = rate_p1
            phase = rate_entry * slack

            # first rotation, ms+1 is out of band
            if state != 2:
                failed = p_mw > 0.0 and np.random.random() < p_mw
                if not failed:
                    if flip_probability >= 1.0:
                        state = 1 - state
                    elif np.random.random() < flip_probability:
                        state = 1 - state
            rate = 0.0
            if state == 1:
                rate = rate_m1
            elif state == 2:
                rate = rate_p1
            phase += rate * inter_pulse_delay

            if has_middle_pi:
                if state != 2:
                    failed = p_mw > 0.0 and np.random.random() < p_mw
                    if not failed:
                        state = 1 - state
                rate = 0.0
                if state == 1:
                    rate = rate_m1
                elif state == 2:
                    rate = rate_p1
                phase += rate * inter_pulse_delay

            overran = False
            pumped = state != 0
            pump_rate = 0.0
            if pumped:
                pump_rate = rate_m1 if state == 1 else rate_p1
                draw = -tau_eff * math.log(1.0 - np.random.random())
                if draw < repump_duration:
                    phase += pump_rate * draw
                    state = 0
                else:
                    phase += pump_rate * repump_duration
                    overran = True

            floor_failed = p_init > 0.0 and np.random.random() < p_init
            if overran or floor_failed:
                state = 1 if np.random.random() < 0.5 else 2
            rate = 0.0
            if state == 1:
                rate = rate_m1
            elif state == 2:
                rate = rate_p1
            phase += rate * post_repump_delay
            # Same operation order as the trajectory-summing reference:
            # segment phases first, then the centering correction, then the
            # quasi-static detuning, so the two paths agree bit for bit.
            if pumped and center_pump_phase:
                phase -= pump_rate * tau
            phase += delta_det * attempt_duration

            cumulative += phase
            if attempt_index == checkpoints[cp]:
                out[k, cp] = cumulative
                cp += 1
    return out


# Optical state encoding: 0 = ms0, 1 = ms-1, 2 = ms+1, 3 = E', 4 = S.


@njit(parallel=True, cache=True)
def optical_paths(
    seeds,
    shape_square,
    support_start,
    support_end,
    n_steps,
    center,
    sigma,
    peak_rate,
    t_eprime,
    p_isc,
    t_singlet,
    cum_b0,
    cum_b01,
    initial_state,
    out,
):
    """One pump pulse per trajectory: stepped jumps while the pulse is on,
    exact exponential waiting times once it is off.

    Output columns: 0 time of (permanent) ms0 entry or inf, 1 excitation
    count, 2 singlet entries, 3 final ground state, 4 first excited-state
    entry time or inf, 5 dwell time of that first visit or inf.  Event
    times during the pulse are assigned to the end of the step in which
    the jump fired.  Draw order per trajectory is a contract shared with
    the pure-Python path builder.
    """
    n_trials = seeds.shape[0]
    inv_te = 1.0 / t_eprime
    inv_ts = 1.0 / t_singlet
    dt = (support_end - support_start) / n_steps
    for k in prange(n_trials):
        np.random.seed(seeds[k])
        state = initial_state
        origin = 1
        t_enter_ms0 = np.inf
        n_exc = 0.0
        n_singlet = 0.0
        t_ep_entry = np.inf
        ep_dwell = np.inf
        first_visit_open = False
        if state == 0:
            t_enter_ms0 = 0.0
        for i in range(n_steps):
            t_mid = support_start + (i + 0.5) * dt
            t_event = support_start + (i + 1.0) * dt
            if state == 1 or state == 2:
                if shape_square:
                    rate = peak_rate
                else:
                    arg = (t_mid - center) / sigma
                    rate = peak_rate * math.exp(-0.5 * arg * arg)
                if np.random.random() < rate * dt:
                    origin = state
                    state = 3
                    n_exc += 1.0
                    if t_ep_entry == np.inf:
                        t_ep_entry = t_event
                        first_visit_open = True
            elif state == 3:
                if np.random.random() < inv_te * dt:
                    if first_visit_open:
                        ep_dwell = t_event - t_ep_entry
                        first_visit_open = False
                    if np.random.random() < p_isc:
                        state = 4
                        n_singlet += 1.0
                    else:
                        state = origin
            elif state == 4:
                if np.random.random() < inv_ts * dt:
                    u = np.random.random()
                    if u < cum_b0:
                        state = 0
                        t_enter_ms0 = t_event
                    elif u < cum_b01:
                        state = 2
                    else:
                        state = 1
        t = support_end
        while state == 3 or state == 4:
            if state == 3:
                t += -t_eprime * math.log(1.0 - np.random.random())
                if first_visit_open:
                    ep_dwell = t - t_ep_entry
                    first_visit_open = False
                if np.random.random() < p_isc:
                    state = 4
                    n_singlet += 1.0
                else:
                    state = origin
            else:
                t += -t_singlet * math.log(1.0 - np.random.random())
                u = np.random.random()
                if u < cum_b0:
                    state = 0
                    t_enter_ms0 = t
                elif u < cum_b01:
                    state = 2
                else:
                    state = 1
        out[k, 0] = t_enter_ms0
        out[k, 1] = n_exc
        out[k, 2] = n_singlet
        out[k, 3] = state
        out[k, 4] = t_ep_entry
        out[k, 5] = ep_dwell
    return out


def reference_trial_phases(
    seed,
    checkpoints,
    spin,
    field_params,
    seq,
    noise,
):
    """Pure-Python mirror of one kernel trial, built on realize_attempt.

    Returns the cumulative phase at each checkpoint.  Used by tests to pin
    the kernel semantics; too slow for production trial counts.
    """
    from .attempt import RunContext, realize_attempt
    from .montecarlo import attempt_phase
    from .physics import ElectronState

    rng = np.random.RandomState(seed)
    context = RunContext.draw(noise, rng)
    out = np.empty(len(checkpoints))
    state = ElectronState.MS0
    cumulative = 0.0
    cp = 0
    for attempt_index in range(1, int(checkpoints[-1]) + 1):
        outcome = realize_attempt(seq, noise, state, rng, context)
        cumulative += attempt_phase(outcome, spin, field_params, seq, noise, context)
        state = outcome.trajectory.segments[-1][0]
        if attempt_index == checkpoints[cp]:
            out[cp] = cumulative
            cp += 1
    return out

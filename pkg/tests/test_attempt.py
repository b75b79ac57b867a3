"""Attempt schedule layout, noise model bookkeeping, and single-attempt sampling."""

import math

import numpy as np
import pytest

from nvsim.attempt import (
    AttemptSequence,
    NoiseModel,
    attempt_phase_branches,
    detuning_width_from_t2_star,
    realize_attempt,
)
from nvsim.errors import NonphysicalInputError
from nvsim.physics import ElectronState, FieldParams, NuclearSpinParams, precession_frequency

TWO_PI = 2.0 * math.pi


def spin_and_field():
    spin = NuclearSpinParams.from_delta_omega("S", TWO_PI * 62.4e3, 9.9e-3)
    return spin, FieldParams.from_gauss(414.0)


def test_flip_probability_from_alpha():
    assert AttemptSequence.standard(1e-6).flip_probability == pytest.approx(0.5)
    assert AttemptSequence.standard(1e-6, alpha=math.pi, has_middle_pi=False).flip_probability == pytest.approx(1.0)
    generic = AttemptSequence.standard(1e-6, alpha=0.3, allow_generic_alpha=True)
    assert generic.flip_probability == pytest.approx(math.sin(0.15) ** 2)


def test_generic_alpha_needs_opt_in():
    with pytest.raises(NonphysicalInputError, match="allow_generic_alpha"):
        AttemptSequence.standard(1e-6, alpha=0.3)


def test_packed_duration_counts_pulse_gaps():
    packed = AttemptSequence.standard(1e-6, attempt_duration=None)
    assert packed.attempt_duration == pytest.approx(2e-6 + 2 * 1e-6)
    assert packed.slack == pytest.approx(0.0)
    single = AttemptSequence.standard(1e-6, has_middle_pi=False, attempt_duration=None)
    assert single.attempt_duration == pytest.approx(2e-6 + 1e-6)
    padded = AttemptSequence.standard(1e-6, post_repump_delay=5e-7, attempt_duration=None)
    assert padded.attempt_duration == pytest.approx(4.5e-6)


def test_slack_fills_fixed_duration():
    seq = AttemptSequence.standard(1e-6)
    assert seq.attempt_duration == 7e-6
    assert seq.slack == pytest.approx(3e-6)


def test_too_short_attempt_rejected():
    with pytest.raises(NonphysicalInputError, match="shorter than the pulse schedule"):
        AttemptSequence(
            alpha=math.pi / 2,
            has_middle_pi=True,
            inter_pulse_delay=1e-6,
            post_repump_delay=0.0,
            repump_duration=2e-6,
            attempt_duration=1e-6,
        )


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel(tau=-1e-9)
    with pytest.raises(ValueError):
        NoiseModel(tau=52e-9, p_mw=1.5)
    with pytest.raises(ValueError):
        NoiseModel(tau=52e-9, p_init=-0.1)


def test_quasi_static_tau_widths_add():
    noise = NoiseModel(tau=100e-9, sigma_tau_qs=30e-9, sigma_tau_qs_relative=0.2)
    assert noise.sigma_tau_total == pytest.approx(50e-9)


def test_detuning_width_from_t2_star():
    assert detuning_width_from_t2_star(9.9e-3) == pytest.approx(math.sqrt(2.0) / 9.9e-3)


def test_realized_attempt_is_deterministic_per_seed():
    seq = AttemptSequence.standard(1e-6)
    noise = NoiseModel(tau=52e-9, p_mw=0.05, p_init=1e-3)
    a = realize_attempt(seq, noise, ElectronState.MS0, np.random.RandomState(42))
    b = realize_attempt(seq, noise, ElectronState.MS0, np.random.RandomState(42))
    assert a == b
    c = realize_attempt(seq, noise, ElectronState.MS0, np.random.RandomState(43))
    assert a != c


def test_trajectory_spans_full_attempt():
    seq = AttemptSequence.standard(1e-6, post_repump_delay=3e-7)
    noise = NoiseModel(tau=52e-9, p_mw=0.05, p_init=1e-2)
    for seed in range(100):
        out = realize_attempt(seq, noise, ElectronState.MS0, np.random.RandomState(seed))
        assert out.trajectory.duration == pytest.approx(seq.attempt_duration)
        assert out.pumped == (out.pump_duration > 0.0)
        if out.init_failed:
            assert not out.ended_in_ms0


def test_clean_attempt_always_resets():
    # instantaneous pumping and no error channels: every attempt ends in ms0
    seq = AttemptSequence.standard(1e-6)
    noise = NoiseModel(tau=1e-12)
    for seed in range(30):
        out = realize_attempt(seq, noise, ElectronState.MS0, np.random.RandomState(seed))
        assert out.ended_in_ms0
        assert not out.init_failed


def test_forced_failure_channels():
    seq = AttemptSequence.standard(1e-6)
    rng = np.random.RandomState(7)
    out = realize_attempt(seq, NoiseModel(tau=52e-9, p_init=1.0), ElectronState.MS0, rng)
    assert out.init_failed
    out = realize_attempt(seq, NoiseModel(tau=52e-9, p_mw=1.0), ElectronState.MS0, rng)
    assert out.mw_failed


def test_phase_branches_partition_probability():
    spin, field = spin_and_field()
    seq = AttemptSequence.standard(math.pi * 2 / spin.delta_omega, attempt_duration=None)
    t = seq.inter_pulse_delay
    w0 = field.omega_larmor
    wm = precession_frequency(ElectronState.MS_MINUS1, spin, field)

    branches = attempt_phase_branches(seq, spin, field, 0.01)
    probs = [p for p, _ in branches]
    assert sum(probs) == pytest.approx(1.0)
    assert sorted(probs) == pytest.approx([0.005, 0.005, 0.99])
    phases = {round(ph, 6) for _, ph in branches}
    assert phases == {
        round(2 * w0 * t, 6),
        round(2 * wm * t, 6),
        round((w0 + wm) * t, 6),
    }


def test_phase_branches_drop_empty_outcomes():
    spin, field = spin_and_field()
    seq = AttemptSequence.standard(1e-6)
    assert len(attempt_phase_branches(seq, spin, field, 0.0)) == 1
    assert len(attempt_phase_branches(seq, spin, field, 1.0)) == 2


def test_phase_branches_require_refocused_half_pulse():
    spin, field = spin_and_field()
    no_middle = AttemptSequence.standard(1e-6, has_middle_pi=False)
    with pytest.raises(NonphysicalInputError):
        attempt_phase_branches(no_middle, spin, field, 0.01)
    full_flip = AttemptSequence.standard(1e-6, alpha=math.pi)
    with pytest.raises(NonphysicalInputError):
        attempt_phase_branches(full_flip, spin, field, 0.01)

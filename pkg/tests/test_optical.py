"""Level model validation, pulse envelopes, and jump trajectories."""

import math

import numpy as np
import pytest

from nvsim.errors import (
    InconsistentInputsError,
    InvalidStateError,
    NonphysicalInputError,
    StepSizeError,
)
from nvsim.optical import (
    OpticalLevelModel,
    PulseEnvelope,
    branching_from_measurement,
    isc_rate_from_lifetimes,
    jump_trajectory,
    pump_probe_curve,
    symmetric_branching,
)
from nvsim.physics import ElectronState

TWO_PI = 2.0 * math.pi


def bundled_model():
    return OpticalLevelModel.from_lifetimes(
        12.3e-9, 7.4e-9, 368e-9, branching=(8.0, 1.0, 1.0)
    )


def test_isc_rate_is_lifetime_difference():
    rate = isc_rate_from_lifetimes(12.3e-9, 7.4e-9)
    assert rate == pytest.approx(1.0 / 7.4e-9 - 1.0 / 12.3e-9, rel=1e-12)
    with pytest.raises(NonphysicalInputError):
        isc_rate_from_lifetimes(7.4e-9, 12.3e-9)
    with pytest.raises(NonphysicalInputError):
        isc_rate_from_lifetimes(12.3e-9, 12.3e-9)


def test_symmetric_branching():
    assert symmetric_branching(0.8) == pytest.approx((0.8, 0.1, 0.1))
    assert sum(symmetric_branching(0.62)) == pytest.approx(1.0)


def test_model_normalizes_branching_ratios():
    model = bundled_model()
    assert model.branching == pytest.approx((0.8, 0.1, 0.1))
    assert model.gamma_es == pytest.approx(isc_rate_from_lifetimes(12.3e-9, 7.4e-9))
    assert model.isc_probability == pytest.approx(model.gamma_es * 7.4e-9)


def test_model_validation():
    with pytest.raises(NonphysicalInputError):
        # crossing probability above one
        OpticalLevelModel(
            t_ex=12.3e-9, t_eprime=7.4e-9, gamma_es=2e8, t_singlet=368e-9,
            branching=(0.8, 0.1, 0.1),
        )
    with pytest.raises(NonphysicalInputError):
        OpticalLevelModel(
            t_ex=12.3e-9, t_eprime=7.4e-9, gamma_es=5e7, t_singlet=368e-9,
            branching=(0.5, 0.2, 0.2),
        )
    with pytest.raises(NonphysicalInputError):
        OpticalLevelModel.from_lifetimes(12.3e-9, 7.4e-9, 368e-9, branching=(0.0, 0.0, 0.0))


def test_square_pulse_geometry():
    pulse = PulseEnvelope("square", width=2e-9, peak_rate=1.5e9)
    assert pulse.area == pytest.approx(3.0)
    assert pulse.transfer_probability == pytest.approx(1.0 - math.exp(-3.0))
    assert pulse.rate(1e-9) == 1.5e9
    assert pulse.rate(-1e-12) == 0.0
    assert pulse.rate(2.1e-9) == 0.0


def test_gaussian_pulse_geometry():
    pulse = PulseEnvelope("gaussian", width=2e-9, peak_rate=1.5e9)
    sigma = 2e-9 / (2.0 * math.sqrt(2.0 * math.log(2.0)))
    # support is clipped at four standard deviations around the centre
    assert pulse.rate(pulse.start - 1e-15) == 0.0
    coverage = math.erf(4.0 / math.sqrt(2.0))
    assert pulse.area == pytest.approx(1.5e9 * sigma * math.sqrt(TWO_PI) * coverage, rel=1e-9)


def test_calibrated_pi_pulse():
    pulse = PulseEnvelope.calibrated_pi()
    assert pulse.shape == "square"
    assert pulse.width == 2e-9
    assert pulse.area == pytest.approx(3.0)
    wider = PulseEnvelope.calibrated_pi(width=4e-9)
    assert wider.area == pytest.approx(3.0)
    with pytest.raises(NonphysicalInputError):
        PulseEnvelope("square", width=-1e-9, peak_rate=1e9)


def test_ms0_is_dark():
    path = jump_trajectory(bundled_model(), [PulseEnvelope.calibrated_pi()],
                           initial=ElectronState.MS0, rng=np.random.RandomState(3))
    assert path.final_state == ElectronState.MS0
    assert path.n_excitations == 0
    assert path.t_enter_ms0 == 0.0


def test_initial_state_must_be_ground():
    with pytest.raises(InvalidStateError):
        jump_trajectory(bundled_model(), [PulseEnvelope.calibrated_pi()],
                        initial=ElectronState.EXCITED_E_PRIME, rng=np.random.RandomState(0))


def test_oversized_step_is_refused():
    with pytest.raises(StepSizeError):
        jump_trajectory(bundled_model(), [PulseEnvelope.calibrated_pi()],
                        rng=np.random.RandomState(0), dt=1e-9)


def test_trajectory_sampling_is_deterministic():
    model = bundled_model()
    pulse = PulseEnvelope.calibrated_pi()
    a = jump_trajectory(model, [pulse], rng=np.random.RandomState(11))
    b = jump_trajectory(model, [pulse], rng=np.random.RandomState(11))
    assert a == b


def test_trajectory_bookkeeping():
    model = bundled_model()
    pulse = PulseEnvelope.calibrated_pi()
    saw_singlet = False
    for seed in range(60):
        path = jump_trajectory(model, [pulse], rng=np.random.RandomState(seed))
        assert path.state_at(0.0) == ElectronState.MS_MINUS1
        assert path.n_excitations >= path.n_singlet
        if path.n_singlet:
            saw_singlet = True
            assert path.t_first_eprime < path.end_time
        if path.final_state == ElectronState.MS0:
            assert path.t_enter_ms0 <= path.end_time
    assert saw_singlet  # isc probability is ~0.4, sixty shots cannot all miss


def test_pump_probe_engines_are_lockstep():
    model = bundled_model()
    pulse = PulseEnvelope.calibrated_pi()
    delays = np.linspace(0.0, 1.2e-6, 9)
    fast = pump_probe_curve(model, pulse, delays, trials=2000, master_seed=4)
    slow = pump_probe_curve(model, pulse, delays, trials=2000, master_seed=4, engine="reference")
    assert np.array_equal(fast.f0, slow.f0)
    assert fast.metadata["p_singlet"] == slow.metadata["p_singlet"]


def test_pump_probe_population_transfer():
    model = bundled_model()
    pulse = PulseEnvelope.calibrated_pi()
    delays = np.linspace(0.0, 1.6e-6, 17)
    curve = pump_probe_curve(model, pulse, delays, trials=10_000, master_seed=2)
    meta = curve.metadata
    # shelving through the singlet feeds ms0 at the branching fraction
    assert meta["asymptote"] / meta["p_singlet"] == pytest.approx(0.8, abs=0.05)
    assert meta["f_zero"] <= 0.01
    assert curve.f0[-1] > curve.f0[1]
    with pytest.raises(ValueError):
        pump_probe_curve(model, pulse, np.array([-1e-9]), trials=100)


def test_no_crossing_means_no_reset():
    dark = OpticalLevelModel(
        t_ex=12.3e-9, t_eprime=7.4e-9, gamma_es=0.0, t_singlet=368e-9,
        branching=(0.8, 0.1, 0.1),
    )
    delays = np.linspace(0.0, 1.6e-6, 9)
    curve = pump_probe_curve(dark, PulseEnvelope.calibrated_pi(), delays, trials=2000,
                             master_seed=1)
    assert curve.metadata["p_singlet"] == 0.0
    assert np.all(curve.f0 == 0.0)


def test_branching_inversion_single_pulse():
    b0, bp, bm = branching_from_measurement(0.41, 0.328)
    assert b0 == pytest.approx(0.8)
    assert bp == bm == pytest.approx(0.1)
    with pytest.raises(InconsistentInputsError):
        branching_from_measurement(0.41, 0.328, symmetric=False)
    with pytest.raises(InconsistentInputsError):
        # more ms0 population than singlet passages cannot happen
        branching_from_measurement(0.2, 0.5)


def test_branching_inversion_jump_mode():
    model = bundled_model()
    pulse = PulseEnvelope.calibrated_pi()
    delays = np.linspace(0.0, 1.6e-6, 9)
    curve = pump_probe_curve(model, pulse, delays, trials=8000, master_seed=6)
    meta = curve.metadata
    b0, _, _ = branching_from_measurement(
        meta["p_singlet"], meta["asymptote"], mode="jump",
        model=model, pulse=pulse, trials=8000, master_seed=6,
    )
    assert b0 == pytest.approx(0.8, abs=0.06)
    with pytest.raises((InconsistentInputsError, ValueError)):
        branching_from_measurement(0.41, 0.328, mode="jump")

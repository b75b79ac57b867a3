"""Fit forms: exact recovery, weighting, and failure modes."""

import math

import numpy as np
import pytest

from nvsim.errors import FitDataError
from nvsim.fitting import fit_exponential, fit_saturation, fit_stretched_exp


def stretched(n, amplitude, n_1e, exponent):
    return amplitude * np.exp(-((n / n_1e) ** exponent))


def test_stretched_exact_on_noiseless_data():
    n = np.array(sorted(set(np.geomspace(1, 900, 14).astype(int))), dtype=float)
    y = stretched(n, 0.9, 300.0, 1.3)
    fit = fit_stretched_exp(n, y)
    assert fit.converged
    assert fit.params["amplitude"] == pytest.approx(0.9, rel=1e-6)
    assert fit.params["n_1e"] == pytest.approx(300.0, rel=1e-6)
    assert fit.params["exponent"] == pytest.approx(1.3, rel=1e-6)
    resid = y - stretched(n, **fit.params)
    assert np.max(np.abs(resid)) < 1e-8
    assert fit.n_points == n.size
    assert fit.model == "stretched_exp"


def test_stretched_input_order_is_irrelevant():
    n = np.array(sorted(set(np.geomspace(1, 900, 14).astype(int))), dtype=float)
    y = stretched(n, 0.9, 300.0, 1.3)
    perm = np.random.RandomState(0).permutation(n.size)
    fit = fit_stretched_exp(n[perm], y[perm])
    assert fit.params["n_1e"] == pytest.approx(300.0, rel=1e-6)


def test_fixed_exponent():
    n = np.geomspace(1, 900, 10)
    y = stretched(n, 1.0, 250.0, 1.0)
    fit = fit_stretched_exp(n, y, fix_m=1.0)
    assert fit.params["exponent"] == 1.0
    assert fit.errors["exponent"] == 0.0
    assert fit.params["n_1e"] == pytest.approx(250.0, rel=1e-6)


def test_minimum_point_counts():
    n = np.array([1.0, 10.0, 100.0])
    y = stretched(n, 1.0, 50.0, 1.0)
    with pytest.raises(FitDataError):
        fit_stretched_exp(n, y)
    assert fit_stretched_exp(n, y, fix_m=1.0).converged
    with pytest.raises(FitDataError):
        fit_stretched_exp(n[:2], y[:2], fix_m=1.0)


def test_flat_curve_reports_infinite_constant():
    n = np.array([1.0, 2.0, 4.0, 8.0, 16.0])
    fit = fit_stretched_exp(n, np.full(5, 0.8), np.full(5, 0.01))
    assert fit.converged
    assert math.isinf(fit.params["n_1e"])
    assert fit.params["amplitude"] == pytest.approx(0.8)
    assert math.isinf(fit.errors["n_1e"])


def test_zero_sigma_entries_are_floored():
    n = np.geomspace(1, 900, 10)
    y = stretched(n, 0.9, 300.0, 1.2)
    sigma = np.full(n.size, 0.01)
    sigma[0] = 0.0
    fit = fit_stretched_exp(n, y, sigma)
    assert fit.converged
    assert fit.params["n_1e"] == pytest.approx(300.0, rel=1e-3)
    assert np.isfinite(fit.errors["n_1e"])


def test_nonpositive_attempt_counts_rejected():
    with pytest.raises(FitDataError):
        fit_stretched_exp(np.array([0.0, 1.0, 2.0, 3.0]), np.ones(4))
    with pytest.raises(FitDataError):
        fit_stretched_exp(np.array([1.0, 2.0, 3.0, 4.0]), np.array([1.0, np.nan, 0.5, 0.2]))


def test_curve_object_unpacks_directly():
    from nvsim.attempt import AttemptSequence, NoiseModel
    from nvsim.montecarlo import RunSpec, geometric_grid, simulate_curve
    from nvsim.physics import FieldParams, NuclearSpinParams, phase_match_delay

    spin = NuclearSpinParams.from_delta_omega("S", 2 * math.pi * 376.5e3, 9.9e-3)
    field = FieldParams.from_gauss(414.0)
    seq = AttemptSequence.standard(phase_match_delay(spin, field), attempt_duration=None)
    spec = RunSpec(
        spin, field, seq, NoiseModel(tau=52e-9),
        n_attempts=geometric_grid(800, 10), n_trials=800,
        include_intrinsic_decay=False,
    )
    curve = simulate_curve(spec)
    direct = fit_stretched_exp(curve)
    arrays = fit_stretched_exp(curve.n.astype(float), curve.coherence, curve.std_err)
    assert direct.params == arrays.params


def test_saturation_exact_on_noiseless_data():
    p = np.geomspace(30e-9, 6e-6, 9)
    y = 800.0 * p / (p + 366e-9)
    fit = fit_saturation(p, y)
    assert fit.converged
    assert fit.params["n_sat"] == pytest.approx(800.0, rel=1e-6)
    assert fit.params["p_sat"] == pytest.approx(366e-9, rel=1e-6)


def test_saturation_input_validation():
    with pytest.raises(FitDataError):
        fit_saturation(np.array([0.0, 1e-6, 2e-6]), np.array([1.0, 2.0, 3.0]))
    with pytest.raises(FitDataError):
        fit_saturation(np.array([1e-6, 2e-6]), np.array([1.0, 2.0]))


def test_exponential_rise_and_decay():
    t = np.linspace(0.0, 1.6e-6, 41)
    rise = 0.02 + 0.33 * (1.0 - np.exp(-t / 368e-9))
    fit = fit_exponential(t, rise, direction="rise")
    assert fit.params["timescale"] == pytest.approx(368e-9, rel=1e-6)
    assert fit.params["amplitude"] == pytest.approx(0.33, rel=1e-6)
    assert fit.params["offset"] == pytest.approx(0.02, abs=1e-6)

    decay = 0.1 + 0.7 * np.exp(-t / 250e-9)
    fit = fit_exponential(t, decay, direction="decay")
    assert fit.params["timescale"] == pytest.approx(250e-9, rel=1e-6)
    assert fit.params["amplitude"] == pytest.approx(0.7, rel=1e-6)


def test_exponential_direction_is_checked():
    with pytest.raises(ValueError):
        fit_exponential(np.linspace(0, 1, 8), np.linspace(0, 1, 8), direction="sideways")


def test_error_bars_shrink_with_replication():
    rng = np.random.RandomState(3)
    n = np.array(sorted(set(np.geomspace(1, 900, 12).astype(int))), dtype=float)
    y = stretched(n, 0.9, 300.0, 1.0)
    noisy = y + rng.normal(0.0, 0.01, n.size)
    sigma = np.full(n.size, 0.01)
    one = fit_stretched_exp(n, noisy, sigma)
    reps = 4
    n4 = np.tile(n, reps)
    y4 = np.concatenate([y + rng.normal(0.0, 0.01, n.size) for _ in range(reps)])
    four = fit_stretched_exp(n4, np.asarray(y4), np.full(n4.size, 0.01))
    ratio = one.errors["n_1e"] / four.errors["n_1e"]
    assert ratio == pytest.approx(2.0, rel=0.2)


def test_bootstrap_errors_agree_with_covariance():
    rng = np.random.RandomState(5)
    n = np.array(sorted(set(np.geomspace(1, 900, 14).astype(int))), dtype=float)
    y = stretched(n, 0.9, 300.0, 1.0) + rng.normal(0.0, 0.01, n.size)
    sigma = np.full(n.size, 0.01)
    plain = fit_stretched_exp(n, y, sigma)
    boot = fit_stretched_exp(n, y, sigma, bootstrap=64, seed=9)
    again = fit_stretched_exp(n, y, sigma, bootstrap=64, seed=9)
    assert boot.errors == again.errors
    for key in ("amplitude", "n_1e"):
        assert boot.errors[key] == pytest.approx(plain.errors[key], rel=1.0)

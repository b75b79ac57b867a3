"""Weighted least-squares fits for the curve shapes this package produces.

Three fixed model forms cover the analysis pipeline: stretched
exponentials for coherence decay, a saturation law for repump sweeps, and
a single exponential (rise or decay) for optical population transients.
Each fit runs Levenberg-Marquardt from a few heuristic starting points
with an analytic Jacobian; positive-definite parameters are fitted in log
space so no explicit bounds are needed.  Stretched exponentials are
ill-conditioned in (N_1e, m), hence the multi-start.

Parameter errors come from the Gauss-Newton covariance at the optimum.
When per-point sigmas are supplied they are taken at face value, which is
what makes pull distributions of repeated synthetic fits come out with
unit width; without sigmas the covariance is rescaled by the reduced
chi-square.  A parametric bootstrap is available as an option for the
cases where the quadratic approximation is suspect.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .errors import FitDataError

# Fitted 1/e constants beyond this multiple of the observed grid are not
# constrained by the data; they are reported as infinite.
FLAT_SENTINEL_FACTOR = 100.0


@dataclass(frozen=True, eq=False)
class FitResult:
    """Converged parameters of one model fit.

    ``params`` and ``errors`` are keyed by parameter name; ``covariance``
    is ordered like ``param_names``.  ``cost`` is half the sum of squared
    weighted residuals at the optimum.  ``converged`` False means the
    parameters are best-effort and should not be trusted.
    """

    model: str
    param_names: tuple[str, ...]
    params: dict
    errors: dict
    covariance: np.ndarray
    cost: float
    n_points: int
    converged: bool


@dataclass(frozen=True, eq=False)
class _RawFit:
    z: np.ndarray
    physical: np.ndarray
    errors: np.ndarray
    covariance: np.ndarray
    cost: float
    converged: bool


def _validate_xy(x, y, sigma, min_points: int, model: str):
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise FitDataError(f"{model}: x and y lengths differ ({x.size} vs {y.size})")
    if x.size < min_points:
        raise FitDataError(f"{model}: need at least {min_points} points, got {x.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise FitDataError(f"{model}: non-finite values in fit data")
    if sigma is None:
        weights = np.ones_like(y)
        provided = False
    else:
        weights = np.broadcast_to(np.asarray(sigma, dtype=float), y.shape).copy()
        if not np.all(np.isfinite(weights)):
            raise FitDataError(f"{model}: non-finite values in sigma")
        positive = weights[weights > 0.0]
        if positive.size == 0:
            weights = np.ones_like(y)
            provided = False
        else:
            # zero-sigma points (e.g. exactly deterministic simulator output)
            # get the smallest honest weight instead of an infinite one
            weights[weights <= 0.0] = positive.min()
            provided = True
    order = np.argsort(x, kind="stable")
    return x[order], y[order], weights[order], provided


def _solve(predict, jacobian, x, y, weights, starts):
    def residuals(z):
        return (predict(z, x) - y) / weights

    def jac(z):
        return jacobian(z, x) / weights[:, None]

    best = None
    for z0 in starts:
        z0 = np.asarray(z0, dtype=float)
        with np.errstate(all="ignore"):
            if not np.all(np.isfinite(residuals(z0))):
                continue
            try:
                res = least_squares(
                    residuals,
                    z0,
                    jac=jac,
                    method="lm",
                    xtol=1e-12,
                    ftol=1e-12,
                    gtol=1e-10,
                    max_nfev=400 * z0.size,
                )
            except (ValueError, np.linalg.LinAlgError):
                continue
        if not np.all(np.isfinite(res.x)):
            continue
        if best is None or res.cost < best.cost:
            best = res
    return best


def _run_fit(predict, jacobian, kinds, x, y, weights, sigma_provided, starts) -> _RawFit:
    n_params = len(kinds)
    best = _solve(predict, jacobian, x, y, weights, starts)
    if best is None:
        nan = np.full(n_params, np.nan)
        return _RawFit(nan, nan.copy(), nan.copy(), np.full((n_params, n_params), np.nan), math.nan, False)

    jtj = best.jac.T @ best.jac
    cov_z = np.linalg.pinv(jtj)
    if not sigma_provided:
        dof = x.size - n_params
        cov_z = cov_z * (2.0 * best.cost / dof if dof > 0 else math.nan)
    physical = np.array(
        [math.exp(v) if kind == "log" else v for v, kind in zip(best.x, kinds)]
    )
    gradient = np.array(
        [p if kind == "log" else 1.0 for p, kind in zip(physical, kinds)]
    )
    cov = gradient[:, None] * cov_z * gradient[None, :]
    with np.errstate(invalid="ignore"):
        errors = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    # A parameter the data does not touch (zero Jacobian column, e.g. the
    # timescale of a flat transient) is unidentifiable, not exactly known;
    # the pseudo-inverse would otherwise report zero variance for it.
    column_norms = np.linalg.norm(best.jac, axis=0)
    scale = column_norms.max()
    if scale > 0.0:
        errors = errors.copy()
        errors[column_norms < 1e-12 * scale] = math.inf
    return _RawFit(best.x, physical, errors, cov, float(best.cost), bool(best.success))


def _bootstrap_errors(
    predict, jacobian, kinds, x, weights, sigma_provided, raw: _RawFit, n_boot, seed
):
    if not raw.converged or not np.all(np.isfinite(raw.z)):
        return raw.errors
    model_y = predict(raw.z, x)
    if sigma_provided:
        scale = weights
    else:
        dof = x.size - len(kinds)
        scatter = math.sqrt(2.0 * raw.cost / dof) if dof > 0 else 1.0
        scale = scatter * weights
    rng = np.random.RandomState(seed)
    samples = []
    for _ in range(int(n_boot)):
        resampled = model_y + scale * rng.standard_normal(x.size)
        best = _solve(predict, jacobian, x, resampled, weights, [raw.z])
        if best is None or not np.all(np.isfinite(best.x)):
            continue
        samples.append(
            [math.exp(v) if kind == "log" else v for v, kind in zip(best.x, kinds)]
        )
    if len(samples) < 2:
        return raw.errors
    return np.asarray(samples).std(axis=0, ddof=1)


def _package(model, names, physical, errors, cov, cost, converged, n_points):
    return FitResult(
        model=model,
        param_names=tuple(names),
        params={name: float(v) for name, v in zip(names, physical)},
        errors={name: float(e) for name, e in zip(names, errors)},
        covariance=cov,
        cost=cost,
        n_points=int(n_points),
        converged=converged,
    )


def _unpack_curve(x, y, sigma):
    # convenience: a CoherenceCurve (or anything shaped like one) can be
    # passed as the single data argument
    if y is None and hasattr(x, "coherence"):
        curve = x
        return curve.n, curve.coherence, curve.std_err if sigma is None else sigma
    if y is None:
        raise FitDataError("y data is required when x is a plain array")
    return x, y, sigma


# ---------------------------------------------------------------------------
# stretched exponential
# ---------------------------------------------------------------------------

def fit_stretched_exp(n, coherence=None, sigma=None, *, fix_m=None, bootstrap=0, seed=0) -> FitResult:
    """Fit C(N) = A exp(-(N / N_1e)^m).

    Parameters are ``amplitude``, ``n_1e`` and ``exponent``, all positive.
    Accepts either (n, coherence, sigma) arrays or a single CoherenceCurve
    argument.  ``fix_m`` freezes the exponent instead of fitting it (its
    reported error is then zero).  A curve that never decays inside the
    grid cannot pin down ``n_1e``; when the fitted value exceeds 100 x the
    largest N it is reported as ``inf`` (with an infinite error) rather
    than as a spurious number.  ``bootstrap`` > 0 replaces the covariance
    errors with a parametric bootstrap of that many refits.

    Raises
    ------
    FitDataError
        On non-finite input, too few points, or N <= 0.
    """
    n, coherence, sigma = _unpack_curve(n, coherence, sigma)
    names = ("amplitude", "n_1e", "exponent")
    min_points = 3 if fix_m is not None else 4
    x, y, weights, provided = _validate_xy(n, coherence, sigma, min_points, "stretched_exp")
    if np.any(x <= 0.0):
        raise FitDataError("stretched_exp: attempt counts must be positive")
    if fix_m is not None and not fix_m > 0.0:
        raise FitDataError(f"stretched_exp: fix_m must be positive, got {fix_m}")

    if fix_m is None:
        kinds = ("log", "log", "log")

        def predict(z, xs):
            amp, n1e, m = np.exp(z)
            return amp * np.exp(-((xs / n1e) ** m))

        def jacobian(z, xs):
            amp, n1e, m = np.exp(z)
            u = (xs / n1e) ** m
            f = amp * np.exp(-u)
            return np.stack([f, f * m * u, -f * u * np.log(xs / n1e) * m], axis=1)

    else:
        kinds = ("log", "log")
        m_fixed = float(fix_m)

        def predict(z, xs):
            amp, n1e = np.exp(z)
            return amp * np.exp(-((xs / n1e) ** m_fixed))

        def jacobian(z, xs):
            amp, n1e = np.exp(z)
            u = (xs / n1e) ** m_fixed
            f = amp * np.exp(-u)
            return np.stack([f, f * m_fixed * u], axis=1)

    amp0 = float(y[0]) if y[0] > 0 else float(np.max(y))
    amp0 = max(amp0, 1e-6)
    below = np.nonzero(y < amp0 / math.e)[0]
    if below.size and below[0] > 0:
        # linear interpolation of the 1/e crossing
        i = below[0]
        y_hi, y_lo = y[i - 1], y[i]
        frac = (y_hi - amp0 / math.e) / (y_hi - y_lo) if y_hi > y_lo else 0.5
        n1e0 = float(x[i - 1] + frac * (x[i] - x[i - 1]))
    elif below.size:
        n1e0 = float(x[0])
    else:
        n1e0 = 2.0 * float(x[-1])
    n1e0 = max(n1e0, float(x[0]))
    if fix_m is None:
        starts = [
            np.log([amp0, n1e0, 1.0]),
            np.log([amp0, n1e0, 2.0]),
            np.log([amp0, max(n1e0 / 3.0, float(x[0])), 1.0]),
        ]
    else:
        starts = [
            np.log([amp0, n1e0]),
            np.log([amp0, max(n1e0 / 3.0, float(x[0]))]),
            np.log([amp0, 3.0 * n1e0]),
        ]
    raw = _run_fit(predict, jacobian, kinds, x, y, weights, provided, starts)
    if bootstrap:
        raw = _RawFit(
            raw.z,
            raw.physical,
            _bootstrap_errors(predict, jacobian, kinds, x, weights, provided, raw, bootstrap, seed),
            raw.covariance,
            raw.cost,
            raw.converged,
        )

    physical = raw.physical
    errors = raw.errors
    cov = raw.covariance
    if fix_m is not None:
        physical = np.append(physical, m_fixed)
        errors = np.append(errors, 0.0)
        padded = np.zeros((3, 3))
        padded[:2, :2] = cov
        cov = padded
    if np.isfinite(physical[1]) and physical[1] > FLAT_SENTINEL_FACTOR * x[-1]:
        physical = physical.copy()
        errors = errors.copy()
        physical[1] = math.inf
        errors[1] = math.inf
    return _package(
        "stretched_exp", names, physical, errors, cov, raw.cost, raw.converged, x.size
    )


# ---------------------------------------------------------------------------
# saturation law
# ---------------------------------------------------------------------------

def fit_saturation(power, n_one_over_e=None, sigma=None, *, bootstrap=0, seed=0) -> FitResult:
    """Fit N(P) = N_sat * P / (P + P_sat).

    Parameters are ``n_sat`` and ``p_sat``, both positive.  ``power`` must
    be positive and in the same unit as the fitted ``p_sat``.
    """
    power, n_one_over_e, sigma = _unpack_curve(power, n_one_over_e, sigma)
    names = ("n_sat", "p_sat")
    kinds = ("log", "log")
    x, y, weights, provided = _validate_xy(power, n_one_over_e, sigma, 3, "saturation")
    if np.any(x <= 0.0):
        raise FitDataError("saturation: powers must be positive")
    if np.any(y < 0.0):
        raise FitDataError("saturation: negative decay constants")

    def predict(z, xs):
        n_sat, p_sat = np.exp(z)
        return n_sat * xs / (xs + p_sat)

    def jacobian(z, xs):
        n_sat, p_sat = np.exp(z)
        f = n_sat * xs / (xs + p_sat)
        return np.stack([f, -f * p_sat / (xs + p_sat)], axis=1)

    nsat0 = max(1.05 * float(np.max(y)), 1e-12)
    above = np.nonzero(y >= 0.5 * nsat0)[0]
    psat0 = float(x[above[0]]) if above.size else float(np.median(x))
    starts = [
        np.log([nsat0, psat0]),
        np.log([nsat0, float(np.median(x))]),
        np.log([1.5 * nsat0, float(x[-1])]),
    ]
    raw = _run_fit(predict, jacobian, kinds, x, y, weights, provided, starts)
    errors = raw.errors
    if bootstrap:
        errors = _bootstrap_errors(
            predict, jacobian, kinds, x, weights, provided, raw, bootstrap, seed
        )
    return _package(
        "saturation", names, raw.physical, errors, raw.covariance, raw.cost, raw.converged, x.size
    )


# ---------------------------------------------------------------------------
# exponential transient
# ---------------------------------------------------------------------------

def fit_exponential(t, y=None, sigma=None, *, direction="decay", bootstrap=0, seed=0) -> FitResult:
    """Fit an exponential transient.

    ``direction="decay"`` fits y = offset + amplitude * exp(-t/timescale),
    ``direction="rise"`` fits y = offset + amplitude * (1 - exp(-t/timescale)).
    ``amplitude`` and ``offset`` are free in sign, ``timescale`` is
    positive.  On flat data the timescale is unidentifiable and its error
    is reported as ``inf``.
    """
    t, y, sigma = _unpack_curve(t, y, sigma)
    if direction not in ("rise", "decay"):
        raise FitDataError(f"exponential: direction must be 'rise' or 'decay', got {direction!r}")
    names = ("amplitude", "timescale", "offset")
    kinds = ("lin", "log", "lin")
    x, yv, weights, provided = _validate_xy(t, y, sigma, 3, "exponential")
    rising = direction == "rise"

    def predict(z, xs):
        amp, off = z[0], z[2]
        timescale = math.exp(z[1])
        decay = np.exp(-xs / timescale)
        return off + amp * ((1.0 - decay) if rising else decay)

    def jacobian(z, xs):
        amp = z[0]
        timescale = math.exp(z[1])
        decay = np.exp(-xs / timescale)
        scaled = amp * decay * (xs / timescale)
        if rising:
            return np.stack([1.0 - decay, -scaled, np.ones_like(xs)], axis=1)
        return np.stack([decay, scaled, np.ones_like(xs)], axis=1)

    span = float(x[-1] - x[0])
    if span <= 0.0:
        raise FitDataError("exponential: time axis has zero span")
    asymptote = float(yv[-1])
    initial = float(yv[0])
    amp0 = (asymptote - initial) if rising else (initial - asymptote)
    off0 = initial if rising else asymptote
    settled = np.nonzero(np.abs(yv - asymptote) <= abs(initial - asymptote) / math.e)[0]
    tc0 = float(x[settled[0]] - x[0]) if settled.size else span / 3.0
    tc0 = max(tc0, 1e-3 * span)
    starts = [
        np.array([amp0, math.log(tc0), off0]),
        np.array([amp0, math.log(tc0 * 4.0), off0]),
        np.array([amp0, math.log(tc0 / 4.0), off0]),
    ]
    raw = _run_fit(predict, jacobian, kinds, x, yv, weights, provided, starts)
    errors = raw.errors
    if bootstrap:
        errors = _bootstrap_errors(
            predict, jacobian, kinds, x, weights, provided, raw, bootstrap, seed
        )
    return _package(
        "exponential", names, raw.physical, errors, raw.covariance, raw.cost, raw.converged, x.size
    )

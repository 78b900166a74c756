"""Full-covariance estimators driven by the stochastic integration rule.

Default moment path: a single pass of the rule computes the raw moments
E[g], E[g g^T] and E[x g^T] on shared points, and the central moments are
formed afterwards. ``moment_path="central"`` instead runs one dedicated
pass per central moment, each on an identical copy of the random stream.
"""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .exceptions import (
    CovarianceNotPD,
    InnovationCovSingular,
    MissingCrossCov,
    NotPositiveDefinite,
)
from .linalg import factor_psd, symmetrize
from .models import GaussianState
from .sir import SirConfig, sir_pass

__all__ = [
    "PredictionResult",
    "UpdateResult",
    "predict",
    "update",
    "smooth",
    "cross_covariance",
    "state_factor",
]

_DEFAULT_CONFIG = SirConfig()


@dataclass
class PredictionResult:
    """Predicted state; ``cross_cov`` is Cov(x_k, x_{k+1}) of the last step."""

    predicted: GaussianState
    cross_cov: np.ndarray = None
    source: GaussianState = None


@dataclass
class UpdateResult:
    filtered: GaussianState
    innovation: np.ndarray
    gain: np.ndarray
    predicted_measurement: tuple
    cross_cov: np.ndarray = None
    measurement_error_cov: np.ndarray = None


def state_factor(P):
    """Factor of a state covariance, tolerating rank deficiency."""
    try:
        return factor_psd(P)
    except NotPositiveDefinite as exc:
        raise CovarianceNotPD(str(exc)) from None


def _outer_rows(A, B):
    """Row-wise outer products, flattened: (p, a), (p, b) -> (p, a*b)."""
    return (A[:, :, None] * B[:, None, :]).reshape(A.shape[0], -1)


def _run_central(mean, factor, evaluate_list, config, rng):
    """Run several dedicated passes on identical copies of ``rng``.

    ``evaluate_list[j]`` may depend on results of earlier passes, so each
    entry is a factory ``f(previous_estimates) -> evaluate``. The caller's
    stream ends up where a single pass would have left it.
    """
    start = rng.clone()
    first = sir_pass(mean, factor, evaluate_list[0]([]), config, rng)
    results = [first.estimates[0]]
    fixed = SirConfig(max_iterations=first.estimates[0].iterations, error_tolerance=0.0)
    for make in evaluate_list[1:]:
        results.append(sir_pass(mean, factor, make(results), fixed, start.clone()).estimates[0])
    return results


def _predict_step(state, model, config, rng, want_cross_cov, moment_path, k):
    mean = state.mean
    S = state_factor(state.cov)
    n = mean.shape[0]
    if moment_path == "raw":
        def evaluate(X):
            Fx = model.f(X, k)
            out = [Fx, _outer_rows(Fx, Fx)]
            if want_cross_cov:
                out.append(_outer_rows(X, Fx))
            return out

        est = sir_pass(mean, S, evaluate, config, rng).estimates
        xp = est[0].value
        P = est[1].value.reshape(n, n) - np.outer(xp, xp) + model.Q
        cross = est[2].value.reshape(n, n) - np.outer(mean, xp) if want_cross_cov else None
    elif moment_path == "central":
        makers = [
            lambda prev: (lambda X: [model.f(X, k)]),
            lambda prev: (lambda X: [_outer_rows(*(model.f(X, k) - prev[0].value,) * 2)]),
        ]
        if want_cross_cov:
            makers.append(lambda prev: (lambda X: [_outer_rows(X - mean, model.f(X, k) - prev[0].value)]))
        est = _run_central(mean, S, makers, config, rng)
        xp = est[0].value
        P = est[1].value.reshape(n, n) + model.Q
        cross = est[2].value.reshape(n, n) if want_cross_cov else None
    else:
        raise ValueError(f"unknown moment path {moment_path!r}")
    return GaussianState(xp, symmetrize(P), state.timestamp + 1), cross


def predict(state, model, m=1, config=_DEFAULT_CONFIG, rng=None, want_cross_cov=False, moment_path="raw"):
    """``m``-step prediction by repeated one-step prediction.

    Parameters
    ----------
    state : GaussianState
        Estimate at time ``state.timestamp``.
    model : StateSpaceModel
    m : int
        Number of steps, at least 1.
    config : SirConfig
    rng : RngStream
    want_cross_cov : bool
        Also return Cov(x_{k+m-1}, x_{k+m}) for smoothing.
    moment_path : {"raw", "central"}

    Returns
    -------
    PredictionResult
    """
    if m < 1:
        raise ValueError("number of prediction steps must be at least 1")
    current = state
    cross = None
    for step in range(m):
        last = step == m - 1
        source = current
        current, cross = _predict_step(
            current, model, config, rng, want_cross_cov and last, moment_path, current.timestamp
        )
    return PredictionResult(current, cross, source)


def cross_covariance(source, predicted_mean, model, config, rng):
    """Cov(x_k, f(x_k)) by a fresh pass of the rule around ``source``."""
    S = state_factor(source.cov)
    k = source.timestamp
    n = source.ndim
    est = sir_pass(
        source.mean,
        S,
        lambda X: [_outer_rows(X - source.mean, model.f(X, k) - predicted_mean)],
        config,
        rng,
    ).estimates[0]
    return est.value.reshape(n, n)


def _gain(Pxz, Pzz):
    try:
        c = cho_factor(Pzz, lower=True)
    except np.linalg.LinAlgError as exc:
        raise InnovationCovSingular(str(exc)) from None
    return cho_solve(c, Pxz.T).T


def update(predicted, z, model, config=_DEFAULT_CONFIG, rng=None, inflate_mean_error=False, moment_path="raw"):
    """Measurement update of a predicted Gaussian state.

    Parameters
    ----------
    predicted : GaussianState
    z : array_like, shape (n_z,)
    model : StateSpaceModel
    config : SirConfig
    rng : RngStream
    inflate_mean_error : bool
        Add the rule's error covariance of the predicted measurement to the
        innovation covariance.
    moment_path : {"raw", "central"}

    Returns
    -------
    UpdateResult
    """
    z = np.asarray(z, dtype=float).ravel()
    mean = predicted.mean
    n, nz = mean.shape[0], model.n_z
    k = predicted.timestamp
    S = state_factor(predicted.cov)
    href = model.h(mean, k)[0]

    def hx(X):
        return model.unwrap_about(model.h(X, k), href)

    if moment_path == "raw":
        def evaluate(X):
            Hx = hx(X)
            return [Hx, _outer_rows(Hx, Hx), _outer_rows(X, Hx)]

        est = sir_pass(mean, S, evaluate, config, rng).estimates
        zhat = est[0].value
        Pzz = est[1].value.reshape(nz, nz) - np.outer(zhat, zhat) + model.R
        Pxz = est[2].value.reshape(n, nz) - np.outer(mean, zhat)
    elif moment_path == "central":
        makers = [
            lambda prev: (lambda X: [hx(X)]),
            lambda prev: (lambda X: [_outer_rows(*(hx(X) - prev[0].value,) * 2)]),
            lambda prev: (lambda X: [_outer_rows(X - mean, hx(X) - prev[0].value)]),
        ]
        est = _run_central(mean, S, makers, config, rng)
        zhat = est[0].value
        Pzz = est[1].value.reshape(nz, nz) + model.R
        Pxz = est[2].value.reshape(n, nz)
    else:
        raise ValueError(f"unknown moment path {moment_path!r}")
    zerr = est[0].error_cov
    if inflate_mean_error:
        Pzz = Pzz + zerr
    Pzz = symmetrize(Pzz)
    K = _gain(Pxz, Pzz)
    nu = model.measurement_residual(z, zhat)
    x = mean + K @ nu
    P = symmetrize(predicted.cov - K @ Pzz @ K.T)
    return UpdateResult(
        GaussianState(x, P, k),
        nu,
        K,
        (zhat, Pzz),
        Pxz,
        zerr,
    )


def smooth(filtered, predicted, model=None, config=_DEFAULT_CONFIG, rng=None):
    """Rauch-Tung-Striebel backward pass over a filtered trajectory.

    Parameters
    ----------
    filtered : list of GaussianState
        Filtered estimates for times ``0..K``.
    predicted : list of PredictionResult
        ``predicted[i]`` is the one-step prediction made from
        ``filtered[i]``. Entries lacking ``cross_cov`` are recomputed by a
        fresh pass of the rule when ``model`` and ``rng`` are given.

    Returns
    -------
    list of GaussianState
        Smoothed estimates; the last one equals the last filtered estimate.
    """
    K = len(filtered)
    if len(predicted) < K - 1:
        raise ValueError(f"need {K - 1} predictions for {K} filtered states, got {len(predicted)}")
    out = [None] * K
    out[-1] = filtered[-1]
    for i in range(K - 2, -1, -1):
        pr = predicted[i]
        C = pr.cross_cov
        if C is None:
            if model is None or rng is None:
                raise MissingCrossCov(f"prediction {i} carries no cross-covariance")
            C = cross_covariance(filtered[i], pr.predicted.mean, model, config, rng)
        Pp = pr.predicted.cov
        try:
            L = cho_solve(cho_factor(Pp, lower=True), C.T).T
        except np.linalg.LinAlgError as exc:
            raise CovarianceNotPD(str(exc)) from None
        nxt = out[i + 1]
        f = filtered[i]
        x = f.mean + L @ (nxt.mean - pr.predicted.mean)
        P = symmetrize(f.cov - L @ (Pp - nxt.cov) @ L.T)
        out[i] = GaussianState(x, P, f.timestamp)
    return out

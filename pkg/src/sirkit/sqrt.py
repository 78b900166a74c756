"""Square-root predictor, filter and smoother.

Covariances are carried as lower-triangular factors. Each step stacks the
weighted point deviations of one pass of the rule into a wide matrix and
compresses it with :func:`~sirkit.linalg.triangularize`. Point weights can be
negative (the averaged central weight), so every deviation matrix carries a
sign per column; negative columns are removed by Cholesky downdates.
"""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .exceptions import (
    DowndateFailure,
    InnovationCovSingular,
    MissingForwardData,
)
from .linalg import factor_psd, signed_triangularize
from .models import SqrtGaussianState
from .sir import SirConfig, sir_pass

__all__ = [
    "WeightedDeviationMatrix",
    "SqrtPredictionResult",
    "SqrtUpdateResult",
    "predict_sqrt",
    "update_sqrt",
    "smooth_sqrt",
]

_DEFAULT_CONFIG = SirConfig()


@dataclass
class WeightedDeviationMatrix:
    """Columns ``sqrt(|w_i|) * (value_i - center)`` with the signs of ``w_i``.

    The signed Gram ``sum_i sign_i c_i c_i^T`` equals the weighted scatter of
    the values about ``center``.
    """

    columns: np.ndarray
    signs: np.ndarray

    @classmethod
    def build(cls, values, center, weights):
        values = np.asarray(values, dtype=float)
        weights = np.asarray(weights, dtype=float)
        cols = (np.sqrt(np.abs(weights))[:, None] * (values - center)).T
        return cls(cols, np.where(weights < 0.0, -1.0, 1.0))

    def gram(self):
        return (self.columns * self.signs) @ self.columns.T

    def cross(self, other):
        """Signed cross product ``sum_i sign_i a_i b_i^T``."""
        return (self.columns * self.signs) @ other.columns.T


@dataclass
class SqrtPredictionResult:
    """Predicted factor state plus what the square-root smoother needs.

    ``deviations`` holds the point deviations around the source state and
    their transformed counterparts around the prediction. When they are not
    stored, ``stream_state`` allows the smoother to regenerate them.
    """

    predicted: SqrtGaussianState
    cross_cov: np.ndarray = None
    source: SqrtGaussianState = None
    deviations: tuple = None
    stream_state: object = None
    config: SirConfig = None


@dataclass
class SqrtUpdateResult:
    filtered: SqrtGaussianState
    innovation: np.ndarray
    gain: np.ndarray
    predicted_measurement: tuple
    cross_cov: np.ndarray = None


def _prediction_deviations(state, model, config, rng, k):
    run = sir_pass(state.mean, state.factor, lambda X: [model.f(X, k)], config, rng, keep_points=True)
    xp = run.estimates[0].value
    ps = run.point_set()
    dev_from = WeightedDeviationMatrix.build(ps.points, state.mean, ps.weights)
    dev_to = WeightedDeviationMatrix.build(run.values[0], xp, ps.weights)
    return xp, dev_from, dev_to


def predict_sqrt(
    state,
    model,
    m=1,
    config=_DEFAULT_CONFIG,
    rng=None,
    want_cross_cov=False,
    store_deviations=True,
):
    """``m``-step square-root prediction.

    Parameters
    ----------
    state : SqrtGaussianState
    model : StateSpaceModel
    m : int
    config : SirConfig
    rng : RngStream
    want_cross_cov : bool
        Also return the full cross-covariance of the last step.
    store_deviations : bool
        Keep the last step's deviation matrices for :func:`smooth_sqrt`;
        otherwise keep a copy of the stream so they can be regenerated.

    Returns
    -------
    SqrtPredictionResult

    Raises
    ------
    DowndateFailure
        If a negative-weight column cannot be removed from the factor.
    """
    if m < 1:
        raise ValueError("number of prediction steps must be at least 1")
    current = state
    for step in range(m):
        source = current
        snapshot = rng.clone() if step == m - 1 and not store_deviations else None
        xp, dev_from, dev_to = _prediction_deviations(current, model, config, rng, current.timestamp)
        S = signed_triangularize(dev_to.columns, dev_to.signs, extra=model.Q_factor)
        current = SqrtGaussianState(xp, S, current.timestamp + 1)
    cross = dev_from.cross(dev_to) if want_cross_cov else None
    return SqrtPredictionResult(
        current,
        cross,
        source,
        (dev_from, dev_to) if store_deviations else None,
        snapshot,
        config,
    )


def _solve_gain(Pxz, Szz):
    """``Pxz @ inv(Szz @ Szz.T)`` by two triangular solves."""
    if np.any(np.diag(Szz) <= 0.0):
        raise InnovationCovSingular("innovation covariance factor is singular")
    Y = solve_triangular(Szz, Pxz.T, lower=True)
    return solve_triangular(Szz.T, Y, lower=False).T


def update_sqrt(predicted, z, model, config=_DEFAULT_CONFIG, rng=None, inflate_mean_error=False):
    """Square-root measurement update.

    Parameters
    ----------
    predicted : SqrtGaussianState
    z : array_like, shape (n_z,)
    model : StateSpaceModel
    config : SirConfig
    rng : RngStream
    inflate_mean_error : bool
        Add the rule's error covariance of the predicted measurement to the
        innovation covariance.

    Returns
    -------
    SqrtUpdateResult
        ``predicted_measurement`` is ``(zhat, Szz)`` with ``Szz`` the
        innovation covariance factor.
    """
    z = np.asarray(z, dtype=float).ravel()
    mean = predicted.mean
    k = predicted.timestamp
    href = model.h(mean, k)[0]
    run = sir_pass(
        mean,
        predicted.factor,
        lambda X: [model.unwrap_about(model.h(X, k), href)],
        config,
        rng,
        keep_points=True,
    )
    est = run.estimates[0]
    zhat = est.value
    ps = run.point_set()
    dx = WeightedDeviationMatrix.build(ps.points, mean, ps.weights)
    dz = WeightedDeviationMatrix.build(run.values[0], zhat, ps.weights)
    Pxz = dx.cross(dz)
    noise = [model.R_factor]
    if inflate_mean_error:
        noise.append(factor_psd(est.error_cov))
    noise = np.hstack(noise)
    try:
        Szz = signed_triangularize(dz.columns, dz.signs, extra=noise)
    except DowndateFailure as exc:
        raise InnovationCovSingular(str(exc)) from None
    K = _solve_gain(Pxz, Szz)
    nu = model.measurement_residual(z, zhat)
    S = signed_triangularize(dx.columns - K @ dz.columns, dx.signs, extra=K @ noise)
    return SqrtUpdateResult(SqrtGaussianState(mean + K @ nu, S, k), nu, K, (zhat, Szz), Pxz)


def _forward_data(pr, model):
    if pr.deviations is not None:
        return pr.deviations
    if pr.stream_state is None or pr.source is None or model is None:
        raise MissingForwardData("prediction stores neither deviations nor a stream snapshot")
    _, dev_from, dev_to = _prediction_deviations(
        pr.source, model, pr.config, pr.stream_state.clone(), pr.source.timestamp
    )
    return dev_from, dev_to


def smooth_sqrt(filtered, predicted, model):
    """Square-root Rauch-Tung-Striebel backward pass.

    Parameters
    ----------
    filtered : list of SqrtGaussianState
        Filtered estimates for times ``0..K``.
    predicted : list of SqrtPredictionResult
        ``predicted[i]`` is the one-step prediction made from
        ``filtered[i]``, with stored deviations or a stream snapshot.
    model : StateSpaceModel

    Returns
    -------
    list of SqrtGaussianState
    """
    K = len(filtered)
    if len(predicted) < K - 1:
        raise MissingForwardData(f"need {K - 1} predictions for {K} filtered states, got {len(predicted)}")
    out = [None] * K
    out[-1] = filtered[-1]
    SQ = model.Q_factor
    for i in range(K - 2, -1, -1):
        pr = predicted[i]
        dev_from, dev_to = _forward_data(pr, model)
        C = dev_from.cross(dev_to)
        L = _solve_gain(C, pr.predicted.factor)
        nxt = out[i + 1]
        f = filtered[i]
        x = f.mean + L @ (nxt.mean - pr.predicted.mean)
        S = signed_triangularize(
            dev_from.columns - L @ dev_to.columns,
            dev_from.signs,
            extra=np.hstack([L @ SQ, L @ nxt.factor]),
        )
        out[i] = SqrtGaussianState(x, S, f.timestamp)
    return out

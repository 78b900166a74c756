"""Comparison filters: exact Kalman filter and RTS smoother, EKF, UKF."""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .exceptions import InnovationCovSingular, InvalidScaling, JacobianUnavailable
from .linalg import factor_psd, symmetrize
from .models import GaussianState

__all__ = [
    "UkfParams",
    "kf_predict",
    "kf_update",
    "kf_step",
    "rts_smooth",
    "numeric_jacobian",
    "ekf_predict",
    "ekf_update",
    "ekf_step",
    "sigma_points",
    "ukf_predict",
    "ukf_update",
    "ukf_step",
]


def _gain(Pxz, Pzz):
    try:
        c = cho_factor(Pzz, lower=True)
    except np.linalg.LinAlgError as exc:
        raise InnovationCovSingular(str(exc)) from None
    return cho_solve(c, Pxz.T).T


def kf_predict(state, F, Q):
    F = np.atleast_2d(F)
    return GaussianState(F @ state.mean, symmetrize(F @ state.cov @ F.T + Q), state.timestamp + 1)


def kf_update(state, z, H, R):
    H = np.atleast_2d(H)
    Pzz = symmetrize(H @ state.cov @ H.T + R)
    Pxz = state.cov @ H.T
    K = _gain(Pxz, Pzz)
    x = state.mean + K @ (np.asarray(z, dtype=float) - H @ state.mean)
    return GaussianState(x, symmetrize(state.cov - K @ Pzz @ K.T), state.timestamp)


def kf_step(state, z, F, H, Q, R):
    """One Kalman cycle: predict with ``F, Q`` then update with ``z``."""
    return kf_update(kf_predict(state, F, Q), z, H, R)


def rts_smooth(filtered, F, Q):
    """Classical RTS smoother for a linear model.

    ``filtered[i]`` is the filtered estimate at time ``i``; predictions are
    recomputed from it with ``F`` and ``Q``.
    """
    F = np.atleast_2d(F)
    out = list(filtered)
    for i in range(len(filtered) - 2, -1, -1):
        f = filtered[i]
        pred = kf_predict(f, F, Q)
        G = cho_solve(cho_factor(pred.cov, lower=True), (f.cov @ F.T).T).T
        nxt = out[i + 1]
        x = f.mean + G @ (nxt.mean - pred.mean)
        P = symmetrize(f.cov + G @ (nxt.cov - pred.cov) @ G.T)
        out[i] = GaussianState(x, P, f.timestamp)
    return out


def numeric_jacobian(func, x, k=0):
    """Central-difference Jacobian of a row-wise map at ``x``.

    Step per coordinate is ``max(1e-6, 1e-6 * |x_i|)``.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    steps = np.maximum(1e-6, 1e-6 * np.abs(x))
    E = np.diag(steps)
    X = np.vstack([x + E, x - E])
    Y = np.asarray(func(X, k), dtype=float).reshape(2 * n, -1)
    return ((Y[:n] - Y[n:]) / (2.0 * steps[:, None])).T


def _jacobian(analytic, func, x, k, numeric):
    if analytic is not None:
        return np.atleast_2d(analytic(x, k))
    if not numeric:
        raise JacobianUnavailable("model has no analytic Jacobian and numeric differentiation is off")
    return numeric_jacobian(func, x, k)


def ekf_predict(state, model, numeric=True):
    k = state.timestamp
    F = _jacobian(model.transition_jacobian, model.f, state.mean, k, numeric)
    x = model.f(state.mean, k)[0]
    return GaussianState(x, symmetrize(F @ state.cov @ F.T + model.Q), k + 1)


def ekf_update(state, z, model, numeric=True):
    k = state.timestamp
    H = _jacobian(model.measurement_jacobian, model.h, state.mean, k, numeric)
    Pzz = symmetrize(H @ state.cov @ H.T + model.R)
    K = _gain(state.cov @ H.T, Pzz)
    nu = model.measurement_residual(z, model.h(state.mean, k)[0])
    return GaussianState(state.mean + K @ nu, symmetrize(state.cov - K @ Pzz @ K.T), k)


def ekf_step(state, z, model, numeric=True):
    """First-order linearized predict + update.

    Uses the model's analytic Jacobians when present and central
    differences otherwise (unless ``numeric`` is false).
    """
    return ekf_update(ekf_predict(state, model, numeric), z, model, numeric)


@dataclass(frozen=True)
class UkfParams:
    """Scaled unscented transform parameters; ``kappa=None`` means ``3 - n``."""

    alpha: float = 0.5
    beta: float = 2.0
    kappa: float = None

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise InvalidScaling(f"alpha must lie in (0, 1], got {self.alpha}")

    def kappa_for(self, n):
        return 3.0 - n if self.kappa is None else float(self.kappa)

    def lam(self, n):
        return self.alpha ** 2 * (n + self.kappa_for(n)) - n


def sigma_points(mean, cov, params):
    """Scaled sigma points (rows) with mean and covariance weights."""
    n = mean.shape[0]
    lam = params.lam(n)
    c = n + lam
    if not c > 0.0:
        raise InvalidScaling(f"n + lambda = {c:.6g} must be positive")
    S = factor_psd(cov) * np.sqrt(c)
    X = np.vstack([mean, mean + S.T, mean - S.T])
    Wm = np.full(2 * n + 1, 0.5 / c)
    Wm[0] = lam / c
    Wc = Wm.copy()
    Wc[0] += 1.0 - params.alpha ** 2 + params.beta
    return X, Wm, Wc


def ukf_predict(state, model, params=UkfParams()):
    k = state.timestamp
    X, Wm, Wc = sigma_points(state.mean, state.cov, params)
    Y = model.f(X, k)
    x = Wm @ Y
    D = Y - x
    return GaussianState(x, symmetrize((D.T * Wc) @ D + model.Q), k + 1)


def ukf_update(state, z, model, params=UkfParams()):
    k = state.timestamp
    X, Wm, Wc = sigma_points(state.mean, state.cov, params)
    Z = model.h(X, k)
    Z = model.unwrap_about(Z, Z[0])
    zhat = Wm @ Z
    Dz = Z - zhat
    Dx = X - state.mean
    Pzz = symmetrize((Dz.T * Wc) @ Dz + model.R)
    Pxz = (Dx.T * Wc) @ Dz
    K = _gain(Pxz, Pzz)
    nu = model.measurement_residual(z, zhat)
    return GaussianState(state.mean + K @ nu, symmetrize(state.cov - K @ Pzz @ K.T), k)


def ukf_step(state, z, model, params=UkfParams()):
    """Unscented predict + update with ``2n + 1`` sigma points."""
    return ukf_update(ukf_predict(state, model, params), z, model, params)

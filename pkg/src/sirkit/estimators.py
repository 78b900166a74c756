"""Estimator objects with a scikit-learn style interface.

Each filter is configured through constructor parameters (so ``get_params``,
``set_params`` and ``sklearn.base.clone`` work), ``fit`` runs it over a
measurement sequence, ``transform`` returns state estimates for a sequence,
and ``predict`` forecasts from the last fitted state.

>>> from sirkit.scenario import ScenarioConfig, scenario_model
>>> cfg = ScenarioConfig()
>>> sif = StochasticIntegrationFilter(scenario_model(cfg), cfg.initial_mean, cfg.initial_cov)
>>> sorted(sif.get_params())[:3]
['error_tolerance', 'inflate_mean_error', 'initial_cov']
"""
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import baselines
from .gaussian import predict, smooth, update
from .linalg import RngStream, factor_spd
from .models import GaussianState, SqrtGaussianState
from .sir import SirConfig
from .sqrt import predict_sqrt, smooth_sqrt, update_sqrt
from .validation import check_gaussian, check_measurements

__all__ = [
    "TrackEstimate",
    "GaussianFilter",
    "KalmanFilter",
    "ExtendedKalmanFilter",
    "UnscentedKalmanFilter",
    "StochasticIntegrationFilter",
]


@dataclass
class TrackEstimate:
    """Filtered (and optionally smoothed) estimates over one track."""

    filtered: list
    predicted: list
    smoothed: list = None

    @staticmethod
    def _stack(states):
        means = np.array([s.mean for s in states])
        covs = np.array([s.cov for s in states])
        return means, covs

    def filtered_arrays(self):
        return self._stack(self.filtered)

    def smoothed_arrays(self):
        return None if self.smoothed is None else self._stack(self.smoothed)


class GaussianFilter(TransformerMixin, BaseEstimator):
    """Common driver: alternate update and one-step prediction.

    The first measurement updates the initial state directly, so a sequence
    of ``T + 1`` measurements yields ``T + 1`` filtered estimates.
    Subclasses implement ``_predict_step`` and ``_update_step``.
    """

    name = "base"
    supports_smoothing = False

    def _check_setup(self):
        if self.model is None:
            raise ValueError(f"{type(self).__name__} needs a model")
        check_gaussian(self.initial_mean, self.initial_cov)

    def _initial_state(self):
        return GaussianState(self.initial_mean, self.initial_cov, 0)

    def _rng(self, rng):
        return RngStream(self.random_state) if rng is None else rng

    def run(self, Z, rng=None, smooth=None):
        """Filter the measurement sequence ``Z``; returns :class:`TrackEstimate`."""
        self._check_setup()
        Z = check_measurements(Z, self.model.n_z)
        smooth = self.smooth if smooth is None else smooth
        rng = self._rng(rng)
        state = self._initial_state()
        filtered, predicted = [], []
        for k, z in enumerate(Z):
            if k > 0:
                pr = self._predict_step(state, rng, smooth)
                predicted.append(pr)
                state = self._predicted_state(pr)
            state = self._update_step(state, z, rng)
            filtered.append(state)
        smoothed = self._smooth(filtered, predicted, rng) if smooth else None
        return TrackEstimate(filtered, predicted, smoothed)

    def run_track(self, record, rng=None, smooth=None):
        """Run on a simulated track; only its measurements are used."""
        return self.run(record.measurements, rng=rng, smooth=smooth)

    def _predicted_state(self, pr):
        return pr

    def _smooth(self, filtered, predicted, rng):
        raise NotImplementedError(f"{type(self).__name__} has no smoother")

    def fit(self, Z, y=None, rng=None):
        """Run the filter over ``Z`` and keep the results.

        Sets ``estimate_`` (a :class:`TrackEstimate`), ``means_`` and
        ``covariances_``; the latter two are smoothed when ``smooth`` is set.
        """
        self.estimate_ = self.run(Z, rng=rng)
        states = self.estimate_.smoothed if self.smooth else self.estimate_.filtered
        self.means_ = np.array([s.mean for s in states])
        self.covariances_ = np.array([s.cov for s in states])
        self.n_features_in_ = self.model.n_z
        return self

    def transform(self, Z, rng=None):
        """State means for the sequence ``Z``, shape (len(Z), n_x)."""
        est = self.run(Z, rng=rng)
        states = est.smoothed if self.smooth else est.filtered
        return np.array([s.mean for s in states])

    def predict(self, n_steps=1, rng=None):
        """Forecast ``n_steps`` ahead of the last filtered state."""
        check_is_fitted(self, "estimate_")
        state = self.estimate_.filtered[-1]
        rng = self._rng(rng)
        for _ in range(int(n_steps)):
            state = self._predicted_state(self._predict_step(state, rng, False))
        return state


class KalmanFilter(GaussianFilter):
    """Exact Kalman filter and RTS smoother; the model must be linear."""

    name = "kf"
    supports_smoothing = True

    def __init__(self, model=None, initial_mean=None, initial_cov=None, smooth=False, random_state=0):
        self.model = model
        self.initial_mean = initial_mean
        self.initial_cov = initial_cov
        self.smooth = smooth
        self.random_state = random_state

    def _check_setup(self):
        super()._check_setup()
        if not self.model.is_linear:
            raise ValueError("KalmanFilter needs a linear model (F and H set)")

    def _predict_step(self, state, rng, smooth):
        return baselines.kf_predict(state, self.model.F, self.model.Q)

    def _update_step(self, state, z, rng):
        return baselines.kf_update(state, z, self.model.H, self.model.R)

    def _smooth(self, filtered, predicted, rng):
        return baselines.rts_smooth(filtered, self.model.F, self.model.Q)


class ExtendedKalmanFilter(GaussianFilter):
    """First-order EKF; falls back to central differences without Jacobians."""

    name = "ekf"

    def __init__(self, model=None, initial_mean=None, initial_cov=None, numeric_jacobian=True,
                 smooth=False, random_state=0):
        self.model = model
        self.initial_mean = initial_mean
        self.initial_cov = initial_cov
        self.numeric_jacobian = numeric_jacobian
        self.smooth = smooth
        self.random_state = random_state

    def _predict_step(self, state, rng, smooth):
        return baselines.ekf_predict(state, self.model, self.numeric_jacobian)

    def _update_step(self, state, z, rng):
        return baselines.ekf_update(state, z, self.model, self.numeric_jacobian)


class UnscentedKalmanFilter(GaussianFilter):
    """Scaled UKF; ``kappa=None`` selects ``3 - n_x``."""

    name = "ukf"

    def __init__(self, model=None, initial_mean=None, initial_cov=None, alpha=0.5, beta=2.0,
                 kappa=None, smooth=False, random_state=0):
        self.model = model
        self.initial_mean = initial_mean
        self.initial_cov = initial_cov
        self.alpha = alpha
        self.beta = beta
        self.kappa = kappa
        self.smooth = smooth
        self.random_state = random_state

    @property
    def params_(self):
        return baselines.UkfParams(self.alpha, self.beta, self.kappa)

    def _predict_step(self, state, rng, smooth):
        return baselines.ukf_predict(state, self.model, self.params_)

    def _update_step(self, state, z, rng):
        return baselines.ukf_update(state, z, self.model, self.params_)


class StochasticIntegrationFilter(GaussianFilter):
    """Filter, predictor and smoother built on the stochastic integration rule.

    Parameters
    ----------
    model : StateSpaceModel
    initial_mean, initial_cov : array_like
    max_iterations : int
        Iteration cap of the rule (10 in the reference experiment).
    error_tolerance : float
        Early-stopping threshold on the trace of the rule's error covariance.
    sqrt : bool
        Propagate covariance factors instead of covariances.
    inflate_mean_error : bool
        Add the error covariance of the predicted measurement to the
        innovation covariance.
    moment_path : {"raw", "central"}
        Full form only; see :mod:`sirkit.gaussian`.
    smooth : bool
        Also run the backward smoother in ``fit``/``transform``.
    random_state : int
        Seed of the default :class:`RngStream`.
    """

    supports_smoothing = True

    def __init__(self, model=None, initial_mean=None, initial_cov=None, max_iterations=10,
                 error_tolerance=0.0, sqrt=False, inflate_mean_error=False, moment_path="raw",
                 smooth=False, random_state=0):
        self.model = model
        self.initial_mean = initial_mean
        self.initial_cov = initial_cov
        self.max_iterations = max_iterations
        self.error_tolerance = error_tolerance
        self.sqrt = sqrt
        self.inflate_mean_error = inflate_mean_error
        self.moment_path = moment_path
        self.smooth = smooth
        self.random_state = random_state

    @property
    def name(self):
        return "sif-sqrt" if self.sqrt else "sif"

    @property
    def config_(self):
        return SirConfig(self.max_iterations, self.error_tolerance)

    def _initial_state(self):
        state = super()._initial_state()
        return state.to_sqrt() if self.sqrt else state

    def _predict_step(self, state, rng, smooth):
        if self.sqrt:
            if isinstance(state, GaussianState):
                state = SqrtGaussianState(state.mean, factor_spd(state.cov), state.timestamp)
            return predict_sqrt(state, self.model, 1, self.config_, rng, want_cross_cov=False,
                                store_deviations=smooth)
        return predict(state, self.model, 1, self.config_, rng, want_cross_cov=smooth,
                       moment_path=self.moment_path)

    def _predicted_state(self, pr):
        return pr.predicted

    def _update_step(self, state, z, rng):
        if self.sqrt:
            return update_sqrt(state, z, self.model, self.config_, rng, self.inflate_mean_error).filtered
        return update(state, z, self.model, self.config_, rng, self.inflate_mean_error,
                      self.moment_path).filtered

    def _smooth(self, filtered, predicted, rng):
        if self.sqrt:
            return smooth_sqrt(filtered, predicted, self.model)
        return smooth(filtered, predicted, self.model, self.config_, rng)

"""Gaussian state estimation with the stochastic integration rule."""
from .baselines import UkfParams, ekf_step, kf_step, rts_smooth, ukf_step
from .estimators import (
    ExtendedKalmanFilter,
    KalmanFilter,
    StochasticIntegrationFilter,
    UnscentedKalmanFilter,
)
from .exceptions import *  # noqa: F401,F403
from .gaussian import PredictionResult, UpdateResult, predict, smooth, update
from .linalg import (
    RngStream,
    factor_spd,
    random_orthogonal,
    sample_chi,
    triangularize,
)
from .models import GaussianState, SqrtGaussianState, StateSpaceModel, linear_model, wrap_angle
from .sir import (
    IntegralEstimate,
    Integrand,
    SirConfig,
    SirPointSet,
    concatenate,
    generate_iteration,
    integrate,
    integrate_batch,
)
from .sqrt import predict_sqrt, smooth_sqrt, update_sqrt

__version__ = "0.1.0"

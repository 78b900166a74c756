"""State containers and the additive-noise state-space model."""
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionMismatch
from .linalg import factor_psd, factor_spd, symmetrize

__all__ = ["GaussianState", "SqrtGaussianState", "StateSpaceModel", "LinearMap", "linear_model", "wrap_angle"]


def wrap_angle(theta):
    """Map angles to the half-open interval (-pi, pi]."""
    theta = np.asarray(theta, dtype=float)
    wrapped = np.mod(theta + np.pi, 2.0 * np.pi) - np.pi
    wrapped = np.where(wrapped == -np.pi, np.pi, wrapped)
    return wrapped if wrapped.ndim else float(wrapped)


@dataclass
class GaussianState:
    """Mean and full covariance of a Gaussian, tagged with a time index."""

    mean: np.ndarray
    cov: np.ndarray
    timestamp: int = 0

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float)).copy()
        self.cov = np.atleast_2d(np.asarray(self.cov, dtype=float)).copy()
        n = self.mean.shape[0]
        if self.mean.ndim != 1 or self.cov.shape != (n, n):
            raise DimensionMismatch(
                f"mean shape {self.mean.shape} incompatible with covariance shape {self.cov.shape}"
            )

    @property
    def ndim(self):
        return self.mean.shape[0]

    def factor(self):
        """Cholesky factor of the covariance."""
        return factor_spd(self.cov)

    def to_sqrt(self):
        return SqrtGaussianState(self.mean, factor_spd(self.cov), self.timestamp)


@dataclass
class SqrtGaussianState:
    """Mean and lower-triangular covariance factor, ``cov = factor @ factor.T``."""

    mean: np.ndarray
    factor: np.ndarray
    timestamp: int = 0

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float)).copy()
        self.factor = np.atleast_2d(np.asarray(self.factor, dtype=float)).copy()
        n = self.mean.shape[0]
        if self.factor.shape != (n, n):
            raise DimensionMismatch(
                f"mean shape {self.mean.shape} incompatible with factor shape {self.factor.shape}"
            )

    @property
    def ndim(self):
        return self.mean.shape[0]

    @property
    def cov(self):
        return self.factor @ self.factor.T

    def to_gaussian(self):
        return GaussianState(self.mean, self.cov, self.timestamp)


@dataclass
class StateSpaceModel:
    """Nonlinear model with additive Gaussian noise.

    ``x[k+1] = transition(x[k], k) + w``, ``z[k] = measurement(x[k], k) + v``.

    Both maps must accept either a single state of shape (n_x,) or a stack
    of states of shape (p, n_x) and act row-wise. Jacobians are optional
    and only used by the extended Kalman filter. ``F`` and ``H`` are set for
    linear models so the exact Kalman filter can run on them.
    """

    transition: callable
    measurement: callable
    Q: np.ndarray
    R: np.ndarray
    angular_dims: tuple = ()
    transition_jacobian: callable = None
    measurement_jacobian: callable = None
    F: np.ndarray = None
    H: np.ndarray = None
    _factors: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.Q = symmetrize(np.atleast_2d(self.Q))
        self.R = symmetrize(np.atleast_2d(self.R))
        self.angular_dims = tuple(int(i) for i in self.angular_dims)
        if any(i < 0 or i >= self.n_z for i in self.angular_dims):
            raise DimensionMismatch(f"angular dimensions {self.angular_dims} out of range for n_z={self.n_z}")

    @property
    def n_x(self):
        return self.Q.shape[0]

    @property
    def n_z(self):
        return self.R.shape[0]

    @property
    def is_linear(self):
        return self.F is not None and self.H is not None

    @property
    def Q_factor(self):
        if "Q" not in self._factors:
            self._factors["Q"] = factor_psd(self.Q)
        return self._factors["Q"]

    @property
    def R_factor(self):
        if "R" not in self._factors:
            self._factors["R"] = factor_psd(self.R)
        return self._factors["R"]

    def f(self, X, k=0):
        """Apply the transition to a (p, n_x) stack of states."""
        X = np.atleast_2d(X)
        return np.asarray(self.transition(X, k), dtype=float).reshape(X.shape[0], self.n_x)

    def h(self, X, k=0):
        """Apply the measurement map to a (p, n_x) stack of states."""
        X = np.atleast_2d(X)
        return np.asarray(self.measurement(X, k), dtype=float).reshape(X.shape[0], self.n_z)

    def measurement_residual(self, z, zhat):
        """``z - zhat`` with angular components wrapped to (-pi, pi]."""
        r = np.asarray(z, dtype=float) - np.asarray(zhat, dtype=float)
        if self.angular_dims:
            r = np.array(r, dtype=float)
            idx = list(self.angular_dims)
            r[..., idx] = wrap_angle(r[..., idx])
        return r

    def unwrap_about(self, Z, reference):
        """Shift angular columns of ``Z`` to lie within pi of ``reference``.

        Keeps a stack of predicted measurements on one branch of the angle
        so that their weighted averages are meaningful.
        """
        if not self.angular_dims:
            return Z
        Z = np.array(Z, dtype=float)
        idx = list(self.angular_dims)
        Z[:, idx] = reference[idx] + wrap_angle(Z[:, idx] - reference[idx])
        return Z


class LinearMap:
    """Row-wise linear map ``x -> M @ x``; picklable, unlike a lambda."""

    def __init__(self, M):
        self.M = np.atleast_2d(np.asarray(M, dtype=float))

    def __call__(self, X, k=0):
        return np.asarray(X, dtype=float) @ self.M.T

    def jacobian(self, x, k=0):
        return self.M


def linear_model(F, H, Q, R):
    """Linear-Gaussian :class:`StateSpaceModel` with exact Jacobians."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    if F.shape[0] != F.shape[1] or H.shape[1] != F.shape[0]:
        raise DimensionMismatch(f"incompatible F {F.shape} and H {H.shape}")
    f, h = LinearMap(F), LinearMap(H)
    return StateSpaceModel(
        transition=f,
        measurement=h,
        Q=Q,
        R=R,
        transition_jacobian=f.jacobian,
        measurement_jacobian=h.jacobian,
        F=F,
        H=H,
    )

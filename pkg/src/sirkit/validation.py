"""Input validation helpers for estimator entry points."""
import numpy as np
from sklearn.utils import check_array

from .exceptions import DimensionMismatch

__all__ = ["check_measurements", "check_gaussian"]


def check_measurements(Z, n_z):
    """Return ``Z`` as a finite float array of shape (T, n_z)."""
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1 and n_z == 1:
        Z = Z[:, None]
    Z = check_array(Z, ensure_2d=True, dtype=float, ensure_min_samples=1)
    if Z.shape[1] != n_z:
        raise DimensionMismatch(f"measurements have {Z.shape[1]} components, model expects {n_z}")
    return Z


def check_gaussian(mean, cov):
    """Validate a mean/covariance pair; returns float arrays."""
    if mean is None or cov is None:
        raise ValueError("initial mean and covariance are required")
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    n = mean.shape[0]
    if mean.ndim != 1 or cov.shape != (n, n):
        raise DimensionMismatch(f"mean shape {mean.shape} incompatible with covariance {cov.shape}")
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
        raise ValueError("initial state contains non-finite values")
    return mean, cov

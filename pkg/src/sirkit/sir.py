"""Degree-3 stochastic integration rule for Gaussian-weighted integrals.

Each iteration builds a randomly rotated and scaled spherical-radial point
set around the mean. The integral estimate is the running average of the
per-iteration quadratures, and the running scatter of those quadratures
gives an internal error covariance for the estimate.
"""
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionMismatch, EmptyInput, IntegrandFailure
from .linalg import random_orthogonal, sample_chi

__all__ = [
    "SirConfig",
    "SirIterationPoints",
    "SirPointSet",
    "IntegralEstimate",
    "Integrand",
    "SirRun",
    "generate_iteration",
    "sir_pass",
    "integrate",
    "integrate_batch",
    "concatenate",
]


@dataclass(frozen=True)
class SirConfig:
    """Stopping control of the rule.

    The loop runs at least once and stops after ``max_iterations`` or as
    soon as the trace of the error covariance falls below
    ``error_tolerance``. The error covariance is only informative from the
    second iteration on, so the tolerance test starts there. The default
    tolerance of zero makes every call run exactly ``max_iterations``.
    """

    max_iterations: int = 10
    error_tolerance: float = 0.0
    degree: int = 3

    def __post_init__(self):
        if int(self.max_iterations) < 1:
            raise ValueError("max_iterations must be at least 1")
        if not self.error_tolerance >= 0.0:
            raise ValueError("error_tolerance must be nonnegative")
        if self.degree != 3:
            raise ValueError("only the degree-3 rule is available")


@dataclass
class SirIterationPoints:
    """Points (rows; central point first) and weights of one iteration."""

    points: np.ndarray
    weights: np.ndarray
    rotation: np.ndarray
    radius: float

    @property
    def ndim(self):
        return self.points.shape[1]


@dataclass
class SirPointSet:
    """Flat point set equivalent to ``N`` averaged iterations."""

    points: np.ndarray
    weights: np.ndarray
    iterations: int

    def expectation(self, g):
        """Weighted sum of a vectorized integrand over the flat set."""
        values = np.asarray(g(self.points), dtype=float).reshape(self.points.shape[0], -1)
        return self.weights @ values


@dataclass
class IntegralEstimate:
    """Integral value with its error covariance over the flattened value."""

    value: np.ndarray
    error_cov: np.ndarray
    iterations: int
    total_points: int


class Integrand:
    """Function to integrate against a Gaussian.

    Parameters
    ----------
    func : callable
        Maps a state vector to an array with ``shape`` elements. When
        ``vectorized`` is true it instead maps a (p, n_x) stack of states to
        an array of shape (p, *shape).
    shape : tuple of int, optional
        Output shape; inferred from the first evaluation when omitted.
    vectorized : bool
    """

    def __init__(self, func, shape=None, vectorized=False):
        self.func = func
        self.shape = None if shape is None else tuple(np.atleast_1d(shape).astype(int))
        self.vectorized = vectorized

    def __repr__(self):
        return f"Integrand({getattr(self.func, '__name__', self.func)!r}, shape={self.shape})"

    @property
    def size(self):
        return int(np.prod(self.shape)) if self.shape is not None else None

    def __call__(self, X):
        """Evaluate on a (p, n_x) stack; returns a (p, size) array."""
        X = np.atleast_2d(X)
        try:
            if self.vectorized:
                out = np.asarray(self.func(X), dtype=float).reshape(X.shape[0], -1)
            else:
                out = np.stack([np.asarray(self.func(x), dtype=float).ravel() for x in X])
        except IntegrandFailure:
            raise
        except Exception as exc:  # noqa: BLE001 - re-raised with context
            raise IntegrandFailure(f"integrand raised {exc!r}", point=X) from exc
        if self.shape is None:
            self.shape = (out.shape[1],)
        elif out.shape[1] != self.size:
            raise DimensionMismatch(f"integrand returned {out.shape[1]} values, declared {self.shape}")
        if not np.all(np.isfinite(out)):
            bad = np.flatnonzero(~np.all(np.isfinite(out), axis=1))[0]
            raise IntegrandFailure("integrand returned a non-finite value", point=X[bad])
        return out


def _as_integrand(g):
    return g if isinstance(g, Integrand) else Integrand(g)


def generate_iteration(mean, factor, rng):
    """Draw one rotated, scaled spherical-radial point set.

    Points are ``mean -/+ rho * factor @ C @ e_i`` for a Haar rotation ``C``
    and a Chi(n + 2) radius ``rho``, plus the mean itself. The central
    weight ``1 - n / rho**2`` may be negative.
    """
    mean = np.asarray(mean, dtype=float)
    factor = np.asarray(factor, dtype=float)
    n = mean.shape[0]
    if factor.shape != (n, n):
        raise DimensionMismatch(f"factor shape {factor.shape} does not match mean of length {n}")
    C = random_orthogonal(n, rng)
    rho = sample_chi(n + 2, rng)
    D = rho * (factor @ C)
    points = np.empty((2 * n + 1, n))
    points[0] = mean
    points[1:n + 1] = mean - D.T
    points[n + 1:] = mean + D.T
    weights = np.full(2 * n + 1, 0.5 / (rho * rho))
    weights[0] = 1.0 - n / (rho * rho)
    return SirIterationPoints(points, weights, C, rho)


@dataclass
class SirRun:
    """Everything produced by one pass of the rule over several integrands.

    ``values[j]`` holds the integrand-``j`` evaluations at the points of
    :meth:`point_set`, in the same order.
    """

    estimates: list
    iterations: list = field(default_factory=list)
    values: list = field(default_factory=list)

    def point_set(self):
        return concatenate(self.iterations)


def _draw_rotations(n, count, rng):
    """``count`` Haar rotations and Chi(n + 2) radii in one batch."""
    Q, R = np.linalg.qr(rng.standard_normal((count, n, n)))
    d = np.diagonal(R, axis1=1, axis2=2)
    C = Q * np.where(d < 0.0, -1.0, 1.0)[:, None, :]
    rho = np.sqrt(rng.gamma(0.5 * (n + 2), 2.0, size=count))
    while np.any(rho <= 0.0):
        bad = rho <= 0.0
        rho[bad] = np.sqrt(rng.gamma(0.5 * (n + 2), 2.0, size=int(bad.sum())))
    return C, rho


def sir_pass(mean, factor, evaluate, config, rng, keep_points=False):
    """Run the rule once for several integrands sharing the same points.

    The rotations and radii of all ``max_iterations`` iterations are drawn
    up front, so a pass always consumes the same amount of randomness,
    whether or not it stops early.

    Parameters
    ----------
    mean, factor : ndarray
        Gaussian mean and lower-triangular covariance factor.
    evaluate : callable
        Maps a (p, n_x) stack of points to a list of (p, size_j) arrays,
        one per integrand.
    config : SirConfig
    rng : RngStream
    keep_points : bool
        Store iterations and evaluations for later flat-set use.

    Returns
    -------
    SirRun
    """
    mean = np.asarray(mean, dtype=float)
    factor = np.asarray(factor, dtype=float)
    n = mean.shape[0]
    if factor.shape != (n, n):
        raise DimensionMismatch(f"factor shape {factor.shape} does not match mean of length {n}")
    n_max = int(config.max_iterations)
    C, rho = _draw_rotations(n, n_max, rng)
    D = np.swapaxes(rho[:, None, None] * (factor @ C), 1, 2)
    points = np.concatenate([mean - D, mean + D], axis=1)
    w0 = 1.0 - n / (rho * rho)
    w1 = 0.5 / (rho * rho)

    central = [np.asarray(c, dtype=float)[0] for c in evaluate(mean[None, :])]
    if config.error_tolerance == 0.0:
        flat = evaluate(points.reshape(n_max * 2 * n, n))
        outer = [np.asarray(g, dtype=float).reshape(n_max, 2 * n, -1) for g in flat]
    else:
        outer = None

    values = [None] * len(central)
    sigmas = [np.zeros((c.size, c.size)) for c in central]
    evaluated = []
    N = 0
    while True:
        N += 1
        j = N - 1
        if outer is None:
            block = [np.asarray(g, dtype=float) for g in evaluate(points[j])]
        else:
            block = [g[j] for g in outer]
        evaluated.append(block)
        for i, g in enumerate(block):
            quad = w0[j] * central[i] + w1[j] * g.sum(axis=0)
            if N == 1:
                values[i] = quad
            else:
                d = quad - values[i]
                values[i] = values[i] + d / N
                sigmas[i] = (N - 2) * sigmas[i] / N + np.outer(d, d) / (N * N)
        if N >= n_max:
            break
        if N >= 2 and np.trace(sigmas[0]) < config.error_tolerance:
            break
    total = N * (2 * n + 1)
    estimates = [IntegralEstimate(v, s, N, total) for v, s in zip(values, sigmas)]
    if not keep_points:
        return SirRun(estimates)
    iterations = []
    for j in range(N):
        pts = np.vstack([mean[None, :], points[j]])
        wts = np.full(2 * n + 1, w1[j])
        wts[0] = w0[j]
        iterations.append(SirIterationPoints(pts, wts, C[j], float(rho[j])))
    stacked = [
        np.vstack([central[i][None, :]] + [blk[i] for blk in evaluated]) for i in range(len(central))
    ]
    return SirRun(estimates, iterations, stacked)


def integrate_batch(gs, gaussian, config, rng):
    """Integrate several functions against ``gaussian`` on shared points.

    The stopping rule follows the first integrand. Each result equals what
    :func:`integrate` returns for that integrand alone on a stream in the
    same state.
    """
    if not gs:
        raise EmptyInput("no integrands given")
    integrands = [_as_integrand(g) for g in gs]
    run = sir_pass(
        gaussian.mean,
        gaussian.factor(),
        lambda X: [g(X) for g in integrands],
        config,
        rng,
    )
    for est, g in zip(run.estimates, integrands):
        if len(g.shape) > 1:
            est.value = est.value.reshape(g.shape)
    return run.estimates


def integrate(g, gaussian, config, rng):
    """Estimate ``E[g(x)]`` for ``x ~ gaussian`` with the stochastic rule.

    >>> from sirkit import GaussianState, RngStream, SirConfig
    >>> est = integrate(lambda x: x, GaussianState([1.0, 2.0], [[2.0, 0.5], [0.5, 1.0]]),
    ...                 SirConfig(max_iterations=1), RngStream(0))
    >>> np.allclose(est.value, [1.0, 2.0])
    True
    """
    return integrate_batch([g], gaussian, config, rng)[0]


def concatenate(iterations):
    """Merge ``N`` iterations into one flat weighted point set.

    The shared central point gets the average central weight; every other
    weight is divided by ``N``. Weighted sums over the result reproduce the
    running-average estimate of the rule.
    """
    if not iterations:
        raise EmptyInput("no iterations to concatenate")
    N = len(iterations)
    n = iterations[0].ndim
    if any(it.points.shape != (2 * n + 1, n) for it in iterations):
        raise DimensionMismatch("iterations have inconsistent dimensions")
    points = np.vstack([iterations[0].points[:1]] + [it.points[1:] for it in iterations])
    central_w = sum(it.weights[0] for it in iterations) / N
    weights = np.concatenate([[central_w]] + [it.weights[1:] / N for it in iterations])
    return SirPointSet(points, weights, N)

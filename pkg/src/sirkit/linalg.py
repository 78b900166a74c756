"""Small dense kernels: covariance factors, triangularization, random rotations.

All factors are lower triangular with a nonnegative diagonal, so that
``P = S @ S.T``.
"""
import logging
from collections import Counter

import numpy as np

from .exceptions import DimensionMismatch, DowndateFailure, NotPositiveDefinite

__all__ = [
    "RngStream",
    "symmetrize",
    "factor_spd",
    "factor_psd",
    "triangularize",
    "cholesky_update",
    "cholesky_downdate",
    "signed_triangularize",
    "random_orthogonal",
    "sample_chi",
    "COUNTERS",
]

LOGGER = logging.getLogger(__name__)

#: Event counters for numerically degraded paths (e.g. PSD fallbacks).
COUNTERS = Counter()

_SYMMETRY_RTOL = 1e-8


class RngStream:
    """Seedable random stream identified by ``(seed, stream_id)``.

    Streams with equal identifiers produce identical draws; distinct
    ``stream_id`` values are statistically independent (they are separate
    children of one :class:`numpy.random.SeedSequence`).

    Parameters
    ----------
    seed : int
        Root entropy, any nonnegative 64-bit integer.
    stream_id : int
        Identifier of the stream below ``seed``.
    """

    def __init__(self, seed=0, stream_id=0, _key=()):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self._key = tuple(int(k) for k in _key)
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,) + self._key)
        self.generator = np.random.Generator(np.random.PCG64(seq))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, key={self._key})"

    def substream(self, index):
        """Return an independent child stream, deterministic in ``index``."""
        return RngStream(self.seed, self.stream_id, self._key + (int(index),))

    def clone(self):
        """Return a copy positioned at the current state of this stream."""
        other = RngStream.__new__(RngStream)
        other.seed, other.stream_id, other._key = self.seed, self.stream_id, self._key
        bitgen = np.random.PCG64()
        bitgen.state = self.generator.bit_generator.state
        other.generator = np.random.Generator(bitgen)
        return other

    def set_state_from(self, other):
        """Move this stream to the position of ``other``."""
        self.generator.bit_generator.state = other.generator.bit_generator.state

    def standard_normal(self, size=None):
        return self.generator.standard_normal(size)

    def gamma(self, shape, scale=1.0, size=None):
        return self.generator.gamma(shape, scale, size)

    def multivariate_normal(self, mean, cov, size=None):
        """Gaussian draws using the Cholesky factor of ``cov`` (PSD allowed)."""
        mean = np.asarray(mean, dtype=float)
        S = factor_psd(cov)
        shape = (mean.size,) if size is None else tuple(np.atleast_1d(size)) + (mean.size,)
        return mean + self.standard_normal(shape) @ S.T


def symmetrize(P):
    """Return ``(P + P.T) / 2``."""
    P = np.asarray(P, dtype=float)
    return 0.5 * (P + P.T)


def _check_square(P):
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {P.shape}")


def _check_symmetric(P):
    scale = max(np.max(np.abs(P)), np.finfo(float).tiny)
    if np.max(np.abs(P - P.T)) > _SYMMETRY_RTOL * scale:
        raise ValueError("matrix is not symmetric within tolerance")


def factor_spd(P):
    """Cholesky factor of a symmetric positive definite matrix.

    Parameters
    ----------
    P : array_like, shape (n, n)

    Returns
    -------
    S : ndarray, shape (n, n)
        Lower triangular with positive diagonal, ``S @ S.T == P``.

    Raises
    ------
    NotPositiveDefinite
        If a pivot is not strictly positive.
    ValueError
        If ``P`` is not symmetric to within ``1e-8`` of its largest entry.
    """
    P = np.asarray(P, dtype=float)
    _check_square(P)
    _check_symmetric(P)
    try:
        return np.linalg.cholesky(symmetrize(P))
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None


def factor_psd(P, rtol=1e-9):
    """Lower-triangular factor of a positive *semi*-definite matrix.

    Tries Cholesky first. Singular inputs (e.g. a zero noise covariance)
    fall back to an eigenvalue-clipped square root, which is recorded in
    ``COUNTERS['psd_fallback']``. Eigenvalues below ``-rtol * max|eig|``
    are treated as a genuinely indefinite input.
    """
    P = symmetrize(np.atleast_2d(np.asarray(P, dtype=float)))
    _check_square(P)
    try:
        return np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        pass
    vals, vecs = np.linalg.eigh(P)
    top = max(np.max(np.abs(vals)), 0.0)
    if vals.min() < -rtol * top:
        raise NotPositiveDefinite(f"matrix has eigenvalue {vals.min():.3e}")
    COUNTERS["psd_fallback"] += 1
    LOGGER.debug("PSD fallback factorization (min eigenvalue %.3e)", vals.min())
    root = vecs * np.sqrt(np.clip(vals, 0.0, None))
    return triangularize(root)


def triangularize(M):
    """Compress a wide factor to a square lower-triangular one.

    Returns ``T`` of shape (n, n) with ``T @ T.T == M @ M.T`` and a
    nonnegative diagonal. Uses a Householder QR of ``M.T``.

    Raises
    ------
    DimensionMismatch
        If ``M`` has fewer columns than rows.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got shape {M.shape}")
    n, m = M.shape
    if m < n:
        raise DimensionMismatch(f"need at least {n} columns, got {m}")
    T = np.linalg.qr(M.T, mode="r").T
    signs = np.where(np.diag(T) < 0.0, -1.0, 1.0)
    return np.tril(T * signs)


def cholesky_update(L, x):
    """Factor of ``L @ L.T + x @ x.T`` (``x`` may hold several columns)."""
    x = np.asarray(x, dtype=float).reshape(L.shape[0], -1)
    return triangularize(np.hstack([L, x]))


def cholesky_downdate(L, x):
    """Factor of ``L @ L.T - x x^T`` via a hyperbolic rank-one sweep.

    Raises
    ------
    DowndateFailure
        When the downdated matrix is not positive definite.
    """
    L = np.array(L, dtype=float)
    x = np.array(x, dtype=float).ravel()
    n = L.shape[0]
    for k in range(n):
        lkk = L[k, k]
        if x[k] == 0.0:
            # identity rotation for this pivot
            continue
        r2 = lkk * lkk - x[k] * x[k]
        if not r2 > 0.0:
            raise DowndateFailure(f"downdate breaks positive definiteness at pivot {k}")
        r = np.sqrt(r2)
        c = r / lkk
        s = x[k] / lkk
        L[k, k] = r
        if k + 1 < n:
            L[k + 1:, k] = (L[k + 1:, k] - s * x[k + 1:]) / c
            x[k + 1:] = c * x[k + 1:] - s * L[k + 1:, k]
    return L


def signed_triangularize(columns, signs, extra=None):
    """Square factor of ``sum_i signs[i] c_i c_i^T + extra @ extra.T``.

    Positive columns (and ``extra``) are compressed by :func:`triangularize`;
    negative columns are removed afterwards by rank-one downdates.
    """
    columns = np.asarray(columns, dtype=float)
    signs = np.asarray(signs)
    pos = columns[:, signs > 0]
    blocks = [pos] if extra is None else [pos, np.asarray(extra, dtype=float)]
    stacked = np.hstack(blocks)
    n = columns.shape[0]
    if stacked.shape[1] < n:
        stacked = np.hstack([stacked, np.zeros((n, n - stacked.shape[1]))])
    S = triangularize(stacked)
    for col in columns[:, signs < 0].T:
        S = cholesky_downdate(S, col)
    return S


def random_orthogonal(n, rng):
    """Haar-distributed random orthogonal matrix of size ``n``.

    QR of a standard normal matrix with the signs of ``diag(R)`` folded
    into ``Q``; without that correction the distribution is not uniform.
    """
    n = int(n)
    if n < 1:
        raise ValueError("dimension must be positive")
    Z = rng.standard_normal((n, n))
    Q, R = np.linalg.qr(Z)
    d = np.diag(R)
    return Q * np.where(d < 0.0, -1.0, 1.0)


def sample_chi(dof, rng):
    """Draw from the Chi distribution with ``dof`` degrees of freedom."""
    dof = int(dof)
    if dof < 1:
        raise ValueError("degrees of freedom must be positive")
    while True:
        rho = np.sqrt(rng.gamma(0.5 * dof, 2.0))
        if rho > 0.0:
            return float(rho)

"""Bearing-range tracking benchmark and Monte-Carlo driver.

A constant-velocity target (state ``[x, vx, y, vy]``) observed by a radar
that measures bearing and range. Defaults reproduce the reference
experiment: unit sampling period, 21 time instants, ``q1 = q2 = 0.05``,
radar at (50, 0), bearing variance ``0.2 * pi / 180`` rad^2, unit range
variance.
"""
import csv
import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import SirkitError
from .estimators import (
    ExtendedKalmanFilter,
    KalmanFilter,
    StochasticIntegrationFilter,
    UnscentedKalmanFilter,
)
from .linalg import COUNTERS, RngStream
from .models import LinearMap, StateSpaceModel, wrap_angle

__all__ = [
    "ScenarioConfig",
    "TrackRecord",
    "MetricsReport",
    "ConstantVelocity",
    "BearingRange",
    "scenario_model",
    "simulate_truth",
    "make_filter",
    "TruthOracle",
    "run_monte_carlo",
    "wrap_angle",
    "FILTER_NAMES",
]

FILTER_NAMES = ("kf", "ekf", "ukf", "sif", "sif-sqrt")

_MIN_RANGE = 1e-9
_DIVERGENCE_NEES = 1e6


@dataclass
class ScenarioConfig:
    """Constants of the tracking experiment and of the Monte-Carlo run.

    ``measurement`` selects the bearing-range radar or, for consistency
    checks, a linear variant observing the full state with covariance
    ``identity_noise * I``. ``normalization`` picks the divisor of the
    per-run time averages: ``"samples"`` divides by the number of time
    instants (``horizon + 1``), ``"horizon"`` by ``horizon``.
    """

    T_step: float = 1.0
    horizon: int = 20
    q1: float = 0.05
    q2: float = 0.05
    r_bearing: float = 0.2 * math.pi / 180.0
    r_range: float = 1.0
    radar_position: tuple = (50.0, 0.0)
    initial_mean: tuple = (50.0, 1.0, 1.0, 1.0)
    initial_cov_diag: tuple = (1.5, 0.5, 1.5, 0.5)
    measurement: str = "bearing_range"
    identity_noise: float = 1.0
    mc_runs: int = 10000
    seed: int = 0
    normalization: str = "samples"
    sample_initial_truth: bool = True

    @property
    def initial_cov(self):
        return np.diag(np.asarray(self.initial_cov_diag, dtype=float))

    @property
    def transition_matrix(self):
        T = self.T_step
        block = np.array([[1.0, T], [0.0, 1.0]])
        return np.kron(np.eye(2), block)

    @property
    def Q(self):
        T = self.T_step
        block = np.array([[T ** 3 / 3.0, T ** 2 / 2.0], [T ** 2 / 2.0, T]])
        return np.block([
            [self.q1 * block, np.zeros((2, 2))],
            [np.zeros((2, 2)), self.q2 * block],
        ])

    @property
    def R(self):
        if self.measurement == "identity":
            return self.identity_noise * np.eye(4)
        return np.diag([self.r_bearing, self.r_range])

    def validate(self):
        """List of human-readable problems; empty when the config is usable."""
        problems = []
        if self.horizon < 1:
            problems.append("horizon must be at least 1")
        if self.T_step <= 0:
            problems.append("T_step must be positive")
        for name in ("q1", "q2", "r_bearing", "r_range", "identity_noise"):
            if getattr(self, name) < 0:
                problems.append(f"{name} must be nonnegative")
        if len(self.initial_mean) != 4 or len(self.initial_cov_diag) != 4:
            problems.append("initial mean and covariance diagonal need 4 entries")
        elif any(v < 0 for v in self.initial_cov_diag):
            problems.append("initial covariance diagonal must be nonnegative")
        if len(self.radar_position) != 2:
            problems.append("radar_position needs 2 entries")
        if self.measurement not in ("bearing_range", "identity"):
            problems.append(f"unknown measurement model {self.measurement!r}")
        if self.mc_runs < 1:
            problems.append("mc_runs must be at least 1")
        if self.normalization not in ("samples", "horizon"):
            problems.append(f"unknown normalization {self.normalization!r}")
        return problems


class ConstantVelocity(LinearMap):
    """Nearly-constant-velocity motion in two decoupled axes."""

    def __init__(self, T_step=1.0):
        block = np.array([[1.0, T_step], [0.0, 1.0]])
        super().__init__(np.kron(np.eye(2), block))


class BearingRange:
    """Bearing (atan2) and range of the target as seen from the radar."""

    def __init__(self, radar_position=(50.0, 0.0)):
        self.rx, self.ry = (float(v) for v in radar_position)

    def __call__(self, X, k=0):
        X = np.atleast_2d(X)
        dx = X[:, 0] - self.rx
        dy = X[:, 2] - self.ry
        return np.column_stack([np.arctan2(dy, dx), np.hypot(dx, dy)])

    def jacobian(self, x, k=0):
        dx = x[0] - self.rx
        dy = x[2] - self.ry
        r = math.hypot(dx, dy)
        if r < _MIN_RANGE:
            COUNTERS["range_clamp"] += 1
            r = _MIN_RANGE
        r2 = r * r
        return np.array([
            [-dy / r2, 0.0, dx / r2, 0.0],
            [dx / r, 0.0, dy / r, 0.0],
        ])


def scenario_model(config):
    """:class:`StateSpaceModel` of the benchmark described by ``config``."""
    f = ConstantVelocity(config.T_step)
    common = dict(transition=f, Q=config.Q, R=config.R, transition_jacobian=f.jacobian, F=f.M)
    if config.measurement == "identity":
        h = LinearMap(np.eye(4))
        return StateSpaceModel(measurement=h, measurement_jacobian=h.jacobian, H=h.M, **common)
    h = BearingRange(config.radar_position)
    return StateSpaceModel(measurement=h, measurement_jacobian=h.jacobian, angular_dims=(0,), **common)


@dataclass
class TrackRecord:
    """Simulated truth and measurements for time instants ``0..horizon``."""

    truth: np.ndarray
    measurements: np.ndarray
    estimates: dict = field(default_factory=dict)


def simulate_truth(config, rng, model=None):
    """Draw one trajectory and its measurements.

    The initial state is sampled from the initial Gaussian; then for every
    time instant the measurement noise is drawn first and the process
    noise second.
    """
    model = scenario_model(config) if model is None else model
    n = 4
    steps = config.horizon + 1
    truth = np.empty((steps, n))
    meas = np.empty((steps, model.n_z))
    SQ, SR = model.Q_factor, model.R_factor
    x = np.asarray(config.initial_mean, dtype=float)
    if config.sample_initial_truth:
        x = x + rng.multivariate_normal(np.zeros(n), config.initial_cov)
    for k in range(steps):
        truth[k] = x
        z = model.h(x, k)[0] + SR @ rng.standard_normal(model.n_z)
        if model.angular_dims:
            idx = list(model.angular_dims)
            z[idx] = wrap_angle(z[idx])
        meas[k] = z
        x = model.f(x, k)[0] + SQ @ rng.standard_normal(n)
    return TrackRecord(truth, meas)


def make_filter(name, config, max_iterations=10, error_tolerance=0.0, alpha=0.5, beta=2.0, kappa=None,
                inflate_mean_error=False):
    """Build one of :data:`FILTER_NAMES` for the scenario in ``config``."""
    model = scenario_model(config)
    init = dict(model=model, initial_mean=np.asarray(config.initial_mean, dtype=float),
                initial_cov=config.initial_cov)
    if name == "kf":
        return KalmanFilter(**init)
    if name == "ekf":
        return ExtendedKalmanFilter(**init)
    if name == "ukf":
        return UnscentedKalmanFilter(alpha=alpha, beta=beta, kappa=kappa, **init)
    if name in ("sif", "sif-sqrt"):
        return StochasticIntegrationFilter(
            max_iterations=max_iterations,
            error_tolerance=error_tolerance,
            sqrt=name == "sif-sqrt",
            inflate_mean_error=inflate_mean_error,
            **init,
        )
    raise ValueError(f"unknown filter {name!r}; choose from {FILTER_NAMES}")


class TruthOracle:
    """Pseudo-filter returning the true state with identity covariance."""

    name = "oracle"
    supports_smoothing = True

    def run_track(self, record, rng=None, smooth=False):
        from .estimators import TrackEstimate
        from .models import GaussianState

        states = [GaussianState(x, np.eye(x.shape[0]), k) for k, x in enumerate(record.truth)]
        return TrackEstimate(states, [], states if smooth else None)


@dataclass
class MetricsReport:
    """Monte-Carlo summary for one filter (or filter + smoother).

    ``rmse`` is per state component, averaged over non-divergent runs.
    """

    filter: str
    rmse: list
    anees: float
    divergence_count: int
    runs: int
    wall_time: float = 0.0

    def to_dict(self, timing=False):
        d = asdict(self)
        if not timing:
            d.pop("wall_time")
        return d


def _filter_stream_id(name):
    return zlib.crc32(name.encode()) + 1


def _errors(truth, means, covs):
    err = truth - means
    se = err ** 2
    nees = np.einsum("ki,ki->k", err, np.linalg.solve(covs, err[..., None])[..., 0])
    return se, nees


def _single_run(config, filters, run_index, smooth):
    """Simulate one track and run every filter on it."""
    base = RngStream(config.seed, run_index)
    record = simulate_truth(config, base.substream(0))
    out = {}
    for flt in filters:
        rng = base.substream(_filter_stream_id(flt.name))
        do_smooth = smooth and getattr(flt, "supports_smoothing", False)
        t0 = time.perf_counter()
        try:
            est = flt.run_track(record, rng=rng, smooth=do_smooth)
            results = {flt.name: est.filtered_arrays()}
            if do_smooth:
                results[flt.name + "+smoother"] = est.smoothed_arrays()
        except (SirkitError, np.linalg.LinAlgError, FloatingPointError):
            results = {flt.name: None}
            if do_smooth:
                results[flt.name + "+smoother"] = None
        elapsed = time.perf_counter() - t0
        for key, arrays in results.items():
            if arrays is None:
                out[key] = (None, None, elapsed)
                continue
            means, covs = arrays
            with np.errstate(all="ignore"):
                se, nees = _errors(record.truth, means, covs)
            out[key] = (se, nees, elapsed)
    return run_index, out


def _run_chunk(args):
    config, filters, indices, smooth = args
    return [_single_run(config, filters, i, smooth) for i in indices]


def _is_divergent(se, nees, denom):
    if se is None:
        return True
    if not (np.all(np.isfinite(se)) and np.all(np.isfinite(nees))):
        return True
    return np.sum(nees) / denom > _DIVERGENCE_NEES


def run_monte_carlo(config, filters, smooth=False, threads=1, csv_path=None):
    """Monte-Carlo comparison of filters on the scenario.

    Every run draws a fresh trajectory from stream ``(seed, run_index)``;
    all filters see the same measurements, and each filter draws its own
    randomness from a substream keyed by its name, so results do not depend
    on which other filters are present, nor on ``threads``.

    Parameters
    ----------
    config : ScenarioConfig
    filters : list
        Objects with ``name`` and ``run_track(record, rng, smooth)``, or
        filter names from :data:`FILTER_NAMES`.
    smooth : bool
        Also score the smoothed trajectory of filters that support it,
        reported under ``"<name>+smoother"``.
    threads : int
        Worker processes.
    csv_path : path-like, optional
        Write per-run, per-step squared errors and NEES here.

    Returns
    -------
    dict of str to MetricsReport
    """
    filters = [make_filter(f, config) if isinstance(f, str) else f for f in filters]
    names = [f.name for f in filters]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate filter names in {names}")
    runs = int(config.mc_runs)
    threads = max(1, int(threads))
    indices = list(range(runs))
    if threads == 1:
        results = _run_chunk((config, filters, indices, smooth))
    else:
        chunks = [indices[i::threads] for i in range(threads)]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = [r for part in pool.map(_run_chunk, [(config, filters, c, smooth) for c in chunks])
                       for r in part]
    results.sort(key=lambda r: r[0])

    steps = config.horizon + 1
    denom = steps if config.normalization == "samples" else config.horizon
    keys = list(results[0][1]) if results else []
    reports = {}
    for key in keys:
        rmse_terms = [[] for _ in range(4)]
        anees_terms = []
        divergent = 0
        wall = []
        for _, out in results:
            se, nees, elapsed = out[key]
            wall.append(elapsed)
            if _is_divergent(se, nees, denom):
                divergent += 1
                continue
            per_run = np.sqrt(se.sum(axis=0) / denom)
            for i in range(se.shape[1]):
                rmse_terms[i].append(per_run[i])
            anees_terms.append(float(np.sum(nees) / denom))
        used = len(anees_terms)
        rmse = [math.fsum(t) / used if used else float("nan") for t in rmse_terms[: len(rmse_terms)]]
        anees = math.fsum(anees_terms) / used if used else float("nan")
        reports[key] = MetricsReport(key, rmse, anees, divergent, used, math.fsum(wall))

    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["run_index", "filter", "step", "se_x1", "se_x2", "se_x3", "se_x4", "nees"])
            for run_index, out in results:
                for key in keys:
                    se, nees, _ = out[key]
                    if se is None:
                        continue
                    for k in range(steps):
                        writer.writerow([run_index, key, k] + [repr(float(v)) for v in se[k]]
                                        + [repr(float(nees[k]))])
    return reports

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from sirkit import (
    DimensionMismatch,
    ExtendedKalmanFilter,
    KalmanFilter,
    StochasticIntegrationFilter,
    UnscentedKalmanFilter,
)
from sirkit.scenario import ScenarioConfig, scenario_model, simulate_truth
from sirkit.linalg import RngStream


@pytest.fixture
def linear_setup(random_linear_system):
    model, x0, Z = random_linear_system(11)
    return dict(model=model, initial_mean=x0.mean, initial_cov=x0.cov), Z


@pytest.mark.parametrize("sqrt", [False, True])
@pytest.mark.parametrize("n_max", [1, 5, 10])
def test_sif_equals_kf_on_linear_model(linear_setup, sqrt, n_max):
    init, Z = linear_setup
    kf = KalmanFilter(**init).fit(Z)
    sif = StochasticIntegrationFilter(max_iterations=n_max, sqrt=sqrt, **init).fit(Z)
    np.testing.assert_allclose(sif.means_, kf.means_, atol=1e-8)
    np.testing.assert_allclose(sif.covariances_, kf.covariances_, atol=1e-8)


@pytest.mark.parametrize("sqrt", [False, True])
def test_sif_smoother_equals_rts(linear_setup, sqrt):
    init, Z = linear_setup
    kf = KalmanFilter(smooth=True, **init).fit(Z)
    sif = StochasticIntegrationFilter(sqrt=sqrt, smooth=True, **init).fit(Z)
    np.testing.assert_allclose(sif.means_, kf.means_, atol=1e-8)
    np.testing.assert_allclose(sif.covariances_, kf.covariances_, atol=1e-8)


def test_sklearn_parameter_protocol(linear_setup):
    init, _ = linear_setup
    sif = StochasticIntegrationFilter(max_iterations=4, **init)
    params = sif.get_params()
    assert params["max_iterations"] == 4
    copy = clone(sif).set_params(sqrt=True)
    assert copy.sqrt and not sif.sqrt
    assert copy.name == "sif-sqrt"


def test_fit_transform_and_forecast(linear_setup):
    init, Z = linear_setup
    est = UnscentedKalmanFilter(**init)
    with pytest.raises(NotFittedError):
        est.predict()
    est.fit(Z)
    assert est.means_.shape == (len(Z), 4)
    assert est.n_features_in_ == 2
    np.testing.assert_allclose(est.transform(Z), est.means_)
    ahead = est.predict(n_steps=2)
    F, Q = init["model"].F, init["model"].Q
    last = est.estimate_.filtered[-1]
    np.testing.assert_allclose(ahead.mean, F @ F @ last.mean, atol=1e-9)
    np.testing.assert_allclose(ahead.cov, F @ (F @ last.cov @ F.T + Q) @ F.T + Q, atol=1e-9)


def test_seeded_runs_are_reproducible():
    cfg = ScenarioConfig()
    rec = simulate_truth(cfg, RngStream(0))
    init = dict(model=scenario_model(cfg), initial_mean=np.array(cfg.initial_mean), initial_cov=cfg.initial_cov)
    a = StochasticIntegrationFilter(random_state=3, **init).fit(rec.measurements)
    b = StochasticIntegrationFilter(random_state=3, **init).fit(rec.measurements)
    c = StochasticIntegrationFilter(random_state=4, **init).fit(rec.measurements)
    np.testing.assert_array_equal(a.means_, b.means_)
    assert not np.array_equal(a.means_, c.means_)


def test_input_validation(linear_setup):
    init, Z = linear_setup
    with pytest.raises(DimensionMismatch):
        KalmanFilter(**init).fit(np.ones((5, 3)))
    with pytest.raises(ValueError):
        KalmanFilter(**init).fit(np.full((5, 2), np.nan))
    with pytest.raises(ValueError):
        StochasticIntegrationFilter(model=init["model"]).fit(Z)


def test_ekf_without_smoother(linear_setup):
    init, Z = linear_setup
    with pytest.raises(NotImplementedError):
        ExtendedKalmanFilter(smooth=True, **init).fit(Z)


def test_kf_requires_linear_model():
    cfg = ScenarioConfig()
    kf = KalmanFilter(model=scenario_model(cfg), initial_mean=np.array(cfg.initial_mean), initial_cov=cfg.initial_cov)
    with pytest.raises(ValueError, match="linear"):
        kf.fit(np.zeros((3, 2)))

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.linear_model import LinearRegression
from sklearn.pipeline import make_pipeline

from ssimpute import SemiSupervisedImputer, SSIRegressor
from ssimpute.simulation import SimScenario, draw


@pytest.fixture(scope="module")
def sim():
    d = draw(SimScenario(n=80, seed=2))
    return d.dataset.to_nan_array(), d.y, d


def test_params_round_trip():
    imp = SemiSupervisedImputer(tau=0.4, discrete_features=(0, 1))
    assert imp.get_params()["tau"] == 0.4
    twin = clone(imp)
    assert twin.get_params() == imp.get_params()
    assert SSIRegressor().set_params(tuning="cv").tuning == "cv"


def test_fit_transform_fills_only_missing(sim):
    x, y, d = sim
    out = SemiSupervisedImputer(tau=0.5, discrete_features=(0, 1)).fit_transform(x, y)
    assert not np.isnan(out).any()
    obs = ~np.isnan(x)
    np.testing.assert_array_equal(out[obs], x[obs])
    assert set(np.unique(out[:, :2])) <= {0.0, 1.0}


def test_tuned_imputer_records_report(sim):
    x, y, _ = sim
    imp = SemiSupervisedImputer(discrete_features=(0, 1), grid=(0, 2, 5)).fit(x, y)
    assert imp.tune_report_.tau_hat in imp.tune_report_.grid
    assert imp.params_.lambda1 == imp.tune_report_.lambda_hat


def test_transform_new_rows(sim):
    x, y, _ = sim
    imp = SemiSupervisedImputer(tau=0.5, discrete_features=(0, 1)).fit(x[:60], y[:60])
    out = imp.transform(x[60:])
    assert out.shape == (20, 10) and not np.isnan(out).any()
    with pytest.raises(ValueError):
        imp.transform(x[60:, :5])


def test_pipeline(sim):
    x, y, _ = sim
    pipe = make_pipeline(SemiSupervisedImputer(tau=0.5, discrete_features=(0, 1)),
                         LinearRegression(fit_intercept=False))
    pipe.fit(x, y)
    assert pipe.score(x, y) > 0.3


def test_regressor(sim):
    x, y, d = sim
    reg = SSIRegressor(discrete_features=(0, 1), tau=0.5).fit(x[d.train_idx], y[d.train_idx])
    assert reg.coef_.shape == (10,)
    pred = reg.predict(x[d.test_idx])
    assert pred.shape == (len(d.test_idx),)
    assert np.corrcoef(pred, y[d.test_idx])[0, 1] > 0.5
    with_icpt = SSIRegressor(discrete_features=(0, 1), tau=0.5, intercept=True).fit(x, y)
    assert isinstance(with_icpt.intercept_, float)


def test_sssi_option(sim):
    x, y, _ = sim
    out = SemiSupervisedImputer(tau=0.5, discrete_features=(0, 1),
                                sssi_sweeps=2).fit_transform(x, y)
    assert not np.isnan(out).any()

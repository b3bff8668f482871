import numpy as np
import pytest

from ssimpute.exceptions import NonPositiveDefiniteCovariance
from ssimpute.simulation import (MECHANISMS, SimScenario, _scores, assign_missing,
                                 blockwise_patterns, calibrate_sigma2, covariance,
                                 draw, gen_covariates, make_rng, sqrt_covariance)


def test_ar1_entry():
    sigma = covariance(SimScenario(cov_structure="ar1", rho=-0.5))
    assert sigma[0, 2] == pytest.approx(0.25)
    assert sigma[0, 1] == pytest.approx(-0.5)


def test_square_root():
    sigma = covariance(SimScenario(rho=0.5))
    assert sigma.shape == (8, 8)
    root = sqrt_covariance(sigma)
    np.testing.assert_allclose(root @ root, sigma, rtol=0, atol=1e-10)
    np.testing.assert_allclose(root, root.T)
    with pytest.raises(NonPositiveDefiniteCovariance):
        sqrt_covariance(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_sigma2_examples():
    assert calibrate_sigma2(SimScenario(rho=0.5, r2=0.5)) == pytest.approx(36.5)
    assert calibrate_sigma2(SimScenario(rho=0.0, r2=0.5)) == pytest.approx(8.5)
    assert calibrate_sigma2(SimScenario(rho=0.5, r2=0.999999)) < 1e-4


def test_scenario_validation():
    for bad in (dict(r2=1.0), dict(rho=-0.2), dict(cov_structure="ar1", rho=1.0),
                dict(mechanism="X"), dict(train_fraction=1.0), dict(p=3)):
        with pytest.raises(ValueError):
            SimScenario(**bad)
    SimScenario(cov_structure="ar1", rho=-0.5)


def test_covariates_independent_and_binary():
    s = SimScenario(n=10_000, rho=0.0)
    x = gen_covariates(s, make_rng(1))
    assert set(np.unique(x[:, :2])) == {0.0, 1.0}
    r = np.corrcoef(x[:, 2:], rowvar=False)
    assert np.abs(r[~np.eye(8, dtype=bool)]).max() < 0.05


def test_exponential_covariates_centered():
    x = gen_covariates(SimScenario(n=20_000, covariate_law="exponential"), make_rng(2))
    assert np.abs(x[:, 2:].mean(axis=0)).max() < 0.05
    np.testing.assert_allclose(np.cov(x[:, 2:], rowvar=False),
                               covariance(SimScenario()), atol=0.06)


def test_r2_monte_carlo():
    s = SimScenario(n=100_000, r2=0.6, pattern_family="none", target_missing_rate=0.0)
    d = draw(s)
    signal = d.x_true @ d.beta_true
    assert np.var(signal) / np.var(d.y) == pytest.approx(0.6, abs=0.02)
    assert np.var(d.epsilons) == pytest.approx(d.sigma2, rel=0.02)


def test_mcar_calibration():
    d = draw(SimScenario(n=5000, mechanism="MCAR"))
    assert 0.495 <= d.missing_rate <= 0.505


def test_blockwise_patterns_legal():
    pats = blockwise_patterns(10)
    assert pats[0] == frozenset({0, 1, 2, 9})
    assert pats[6] == frozenset(range(10))
    legal = set(pats)
    d = draw(SimScenario(n=400, mechanism="MAR"))
    assert d.dataset.mask[:, -1].all()
    for row in d.dataset.mask:
        assert frozenset(np.flatnonzero(row).tolist()) in legal
    observed = d.dataset.mask
    np.testing.assert_array_equal(d.dataset.x[observed], d.x_true[observed])


def test_mnar3_first_column_term():
    s = SimScenario(mechanism="MNAR3", pattern_family="none")
    x = np.random.default_rng(0).normal(size=(6, 10))
    cell = _scores(s, x, np.zeros(6))
    np.testing.assert_allclose(cell[:, 0], 0.5 * x[:, 0] + 0.5 * x[:, 0] ** 2)
    np.testing.assert_allclose(
        cell[:, 4], 0.5 * x[:, 4] + 0.5 * x[:, 4] ** 2 + 0.5 * x[:, 4] * x[:, 3])


def test_cellwise_family_keeps_last_column():
    d = draw(SimScenario(n=2000, pattern_family="none", mechanism="MAR"))
    assert d.dataset.mask[:, -1].all()
    assert abs(d.missing_rate - 0.5) <= 0.005


@pytest.mark.parametrize("mechanism", MECHANISMS)
def test_every_mechanism_hits_target(mechanism):
    d = draw(SimScenario(n=2000, mechanism=mechanism, seed=11))
    assert abs(d.missing_rate - 0.5) <= 0.005
    assert d.alpha is not None


def test_determinism_and_replications():
    s = SimScenario(n=200)
    a, b = draw(s, 3), draw(s, 3)
    np.testing.assert_array_equal(a.x_true, b.x_true)
    np.testing.assert_array_equal(a.dataset.mask, b.dataset.mask)
    np.testing.assert_array_equal(a.train_idx, b.train_idx)
    assert not np.array_equal(draw(s, 4).x_true, a.x_true)


def test_zero_target_is_complete():
    d = draw(SimScenario(n=100, target_missing_rate=0.0))
    assert d.dataset.mask.all()


def test_split_sizes():
    d = draw(SimScenario(n=200))
    assert len(d.train_idx) == 140 and len(d.test_idx) == 60
    assert set(d.train_idx).isdisjoint(d.test_idx)


def test_mnar_depends_on_error():
    s = SimScenario(n=5000, mechanism="MNAR", seed=4)
    d = draw(s)
    missing = ~d.dataset.mask.all(axis=1)
    assert d.epsilons[missing].mean() > d.epsilons[~missing].mean()


def test_assign_missing_uses_given_rng():
    s = SimScenario(n=300)
    x = gen_covariates(s, make_rng(0))
    eps = np.zeros(300)
    a = assign_missing(s, x, eps, make_rng(9)).mask
    b = assign_missing(s, x, eps, make_rng(9)).mask
    np.testing.assert_array_equal(a, b)

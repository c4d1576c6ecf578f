import numpy as np
import pytest

from penreg import (Dataset, MCConfig, NumericalError, RegressionModel,
                    SparseLTSParams, biweight_loss, concentration_step, fit,
                    fit_penalized_m, fit_sparse_lts, huber_loss, l1_penalty,
                    l2_penalty, lasso_simple, mad_scale, make_spec,
                    no_penalty, penalized_m_objective, population_value,
                    quadratic_loss, sample, sparse_lts_objective)
from penreg.diagnostics import asv
from penreg.losses import LossSpec, psi


@pytest.fixture(scope="module")
def data200():
    return sample(RegressionModel([1.5]), 200, seed=42)


def test_unpenalized_quadratic_equals_least_squares(data200):
    res = fit_penalized_m(data200, quadratic_loss(), no_penalty())
    oracle = np.linalg.solve(data200.X.T @ data200.X, data200.X.T @ data200.y)
    assert np.max(np.abs(res.beta_hat - oracle)) <= 1e-8
    assert res.converged


def test_quadratic_l2_equals_closed_form_ridge(data200):
    lam = 0.1
    res = fit_penalized_m(data200, quadratic_loss(), l2_penalty(lam))
    n = data200.n
    oracle = np.linalg.solve(data200.X.T @ data200.X / n + 2 * lam * np.eye(1),
                             data200.X.T @ data200.y / n)
    assert np.max(np.abs(res.beta_hat - oracle)) <= 1e-8


def test_huber_l1_fit_near_population_value(data200):
    spec = make_spec("huber_l1", lam=0.04)
    res = fit(spec, data200, seed=1)
    cfg = MCConfig(100_000, 50)
    pop = population_value(spec, RegressionModel([1.5]), cfg=cfg)
    sd = np.sqrt(asv(RegressionModel([1.5]), spec, cfg, fr=pop).asv / data200.n)
    assert abs(res.beta_hat[0] - pop.beta[0]) <= 3 * sd


def test_sparse_lts_without_trimming_or_penalty_is_least_squares(data200):
    res = fit_sparse_lts(data200, SparseLTSParams(1.0, 0.0), seed=2)
    oracle = np.linalg.solve(data200.X.T @ data200.X, data200.X.T @ data200.y)
    assert np.max(np.abs(res.beta_hat - oracle)) <= 1e-8
    assert res.subset.size == data200.n


def test_sparse_lts_subset_size(data200):
    res = fit_sparse_lts(data200, SparseLTSParams(0.75, 0.1), seed=2)
    assert res.subset.size == int(np.ceil(0.75 * data200.n))


def test_sparse_lts_resists_gross_vertical_outliers():
    model = RegressionModel([1.5])
    data = sample(model, 200, seed=7)
    y = data.y.copy()
    y[:40] += 100.0  # 20% of responses pushed far off the line
    bad = Dataset(data.X, y)
    lts = fit_sparse_lts(bad, SparseLTSParams(0.75, 0.1), seed=7)
    lasso = fit(make_spec("lasso", lam=0.1), bad)
    assert abs(lts.beta_hat[0] - 1.5) < 0.2
    assert abs(lasso.beta_hat[0] - 1.5) > 1.0
    assert np.intersect1d(lts.subset, np.arange(40)).size == 0


def test_concentration_step_never_increases_objective(data200):
    params = SparseLTSParams(0.75, 0.1)
    h = int(np.ceil(0.75 * data200.n))
    rng = np.random.default_rng(3)
    for _ in range(10):
        beta = rng.normal(1.5, 1.0, size=1)
        prev = sparse_lts_objective(data200, params, beta)
        for _ in range(5):
            beta, _ = concentration_step(data200.X, data200.y, beta, h, 0.1)
            cur = sparse_lts_objective(data200, params, beta)
            assert cur <= prev + 1e-12
            prev = cur


def test_mad_scale_examples():
    assert mad_scale([-1.0, -1.0, 1.0, 1.0]) == pytest.approx(1.4826)
    z = np.random.default_rng(4).standard_normal(100_000)
    assert mad_scale(z) == pytest.approx(1.0, rel=0.02)
    with pytest.raises(NumericalError):
        mad_scale(np.ones(10))


def test_objective_certificate(data200):
    spec = make_spec("huber_l1", lam=0.04)
    res = fit(spec, data200, seed=5)
    scaled = LossSpec("huber", 1.345, res.scale_hat)
    recomputed = penalized_m_objective(data200, scaled, spec.penalty,
                                       res.beta_hat)
    assert abs(res.objective - recomputed) <= 1e-10

    lts = fit_sparse_lts(data200, SparseLTSParams(0.75, 0.1), seed=5)
    recomputed = sparse_lts_objective(data200, SparseLTSParams(0.75, 0.1),
                                      lts.beta_hat)
    assert abs(lts.objective - recomputed) <= 1e-10


def test_sample_kkt_for_l1_fits():
    model = RegressionModel([1.5, 0.0])
    data = sample(model, 500, seed=6)
    spec = make_spec("huber_l1", lam=0.04)
    res = fit(spec, data, seed=6)
    scaled = LossSpec("huber", 1.345, res.scale_hat)
    score = data.X.T @ psi(scaled, data.y - data.X @ res.beta_hat) / data.n
    lam = 0.04
    for k in range(2):
        if res.beta_hat[k] == 0.0:
            assert abs(score[k]) <= 2 * lam + 1e-6
        else:
            assert abs(score[k] - 2 * lam * np.sign(res.beta_hat[k])) <= 1e-6


def test_permutation_invariance(data200):
    perm = np.random.default_rng(8).permutation(data200.n)
    shuffled = Dataset(data200.X[perm], data200.y[perm])

    lts_a = fit_sparse_lts(data200, SparseLTSParams(0.75, 0.1), seed=9)
    lts_b = fit_sparse_lts(shuffled, SparseLTSParams(0.75, 0.1), seed=9)
    assert np.array_equal(lts_a.beta_hat, lts_b.beta_hat)
    assert np.array_equal(np.sort(data200.X[lts_a.subset, 0]),
                          np.sort(shuffled.X[lts_b.subset, 0]))

    m_a = fit(make_spec("lasso", lam=0.1), data200)
    m_b = fit(make_spec("lasso", lam=0.1), shuffled)
    assert np.max(np.abs(m_a.beta_hat - m_b.beta_hat)) <= 1e-10


@pytest.mark.parametrize("name", ["lasso", "splts", "huber_l1"])
def test_consistency_toward_population_value(name):
    model = RegressionModel([1.5])
    lam = 0.04 if name == "huber_l1" else 0.1
    spec = make_spec(name, lam=lam)
    pop = population_value(spec, model, cfg=MCConfig(200_000, 51)).beta[0]
    med_errors = []
    for n in (100, 1_000, 10_000):
        errs = [abs(fit(spec, sample(model, n, seed=100 * n + s),
                        seed=s).beta_hat[0] - pop)
                for s in range(7)]
        med_errors.append(np.median(errs))
    assert med_errors[2] < med_errors[0]
    assert med_errors[2] < med_errors[1] * 3  # allow noise, demand the trend


def test_fit_requires_two_rows():
    with pytest.raises(ValueError):
        fit_penalized_m(Dataset(np.array([[1.0]]), np.array([1.0])),
                        quadratic_loss(), no_penalty())


def test_scad_fit_matches_closed_form_branch():
    data = sample(RegressionModel([1.5]), 400, seed=10)
    res = fit(make_spec("scad", lam=0.1), data)
    ls = np.linalg.solve(data.X.T @ data.X, data.X.T @ data.y)
    # |ls| > a lam, so the fit must coincide with least squares
    assert res.beta_hat[0] == pytest.approx(float(ls[0]), abs=1e-10)


def test_biweight_l1_fit_collapses_when_penalty_dominates():
    # with lam = 0.1 the clipped score cannot balance the l1 pull anywhere,
    # so the estimate lands at exactly zero
    data = sample(RegressionModel([1.5]), 1_000, seed=11)
    res = fit(make_spec("biweight_l1", lam=0.1), data, seed=11)
    assert res.beta_hat[0] == 0.0

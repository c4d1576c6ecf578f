import numpy as np
import pytest

from penreg import (MCConfig, NumericalError, OracleGrid, RegressionModel,
                    WeightedSample, bias, biweight_loss, coord_descent,
                    huber_loss, irls, kkt_residuals, l1_penalty, lasso_simple,
                    make_spec, no_penalty, oracle_minimize, population_value,
                    quadratic_loss, scad_simple, sparse_lts_simple,
                    splts_threshold, trim_constants, SparseLTSParams)
from penreg.functionals import SPEC_NAMES


def model1(b0, sigma=1.0, x_var=None):
    return RegressionModel([b0], sigma, x_var)


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------

def test_lasso_simple_shrinks_by_lambda():
    fr = lasso_simple(model1(1.5), 0.1)
    assert fr.beta[0] == pytest.approx(1.4, abs=1e-15)
    assert fr.bias[0] == pytest.approx(-0.1, abs=1e-15)


def test_lasso_simple_clips_small_coefficients():
    assert lasso_simple(model1(0.05), 0.1).beta[0] == 0.0


def test_lasso_simple_sign_symmetry():
    assert lasso_simple(model1(-1.5), 0.1).beta[0] == pytest.approx(-1.4)


def test_lasso_simple_rejects_multiple_regression():
    with pytest.raises(ValueError):
        lasso_simple(RegressionModel([1.0, 1.0]), 0.1)


def test_scad_simple_unbiased_for_large_coefficients():
    fr = scad_simple(model1(1.5), 0.1, 3.7)
    assert fr.beta[0] == 1.5
    assert fr.bias[0] == 0.0


def test_scad_simple_clips_small_coefficients():
    assert scad_simple(model1(0.05), 0.1).beta[0] == 0.0


def test_scad_simple_middle_branch():
    fr = scad_simple(model1(0.3), 0.1, 3.7)
    assert fr.beta[0] == pytest.approx((2.7 * 0.3 - 0.37) / 1.7, abs=1e-15)
    assert fr.beta[0] == pytest.approx(0.258824, abs=1e-6)


def test_scad_simple_moment_condition():
    with pytest.raises(NumericalError):
        scad_simple(model1(1.5, x_var=[0.3]), 0.1, 3.7)


def test_trim_constants_against_high_precision_erf():
    # independent oracle: mpmath's erfinv / exp at 50 digits
    import mpmath

    mpmath.mp.dps = 50
    qa_hp = mpmath.sqrt(2) * mpmath.erfinv(mpmath.mpf(3) / 4)
    phi_hp = mpmath.exp(-qa_hp ** 2 / 2) / mpmath.sqrt(2 * mpmath.pi)
    c1_hp = mpmath.mpf(3) / 4 - 2 * qa_hp * phi_hp
    qa, c1 = trim_constants(0.75)
    assert qa == pytest.approx(float(qa_hp), abs=1e-12)
    assert c1 == pytest.approx(float(c1_hp), abs=1e-12)
    assert qa == pytest.approx(1.150349, abs=1e-6)


def test_sparse_lts_simple_against_brute_objective():
    # oracle: dense grid minimization of c1 * sigma^2(beta) + alpha lam |beta|
    params = SparseLTSParams(0.75, 0.1)
    qa, c1 = trim_constants(0.75)
    grid = np.linspace(0.5, 2.0, 2_000_001)
    obj = c1 * (1.0 + (1.5 - grid) ** 2) + 0.75 * 0.1 * np.abs(grid)
    brute = grid[np.argmin(obj)]
    fr = sparse_lts_simple(model1(1.5), params)
    assert fr.beta[0] == pytest.approx(brute, abs=1e-6)
    assert fr.beta[0] == pytest.approx(1.364324, abs=1e-6)


def test_sparse_lts_shrinkage_threshold():
    params = SparseLTSParams(0.75, 0.1)
    thr = splts_threshold(params, 1.0)
    assert thr == pytest.approx(0.135676, abs=1e-6)
    assert sparse_lts_simple(model1(0.1), params).beta[0] == 0.0
    assert sparse_lts_simple(model1(-1.5), params).beta[0] == pytest.approx(
        -(1.5 - thr))


def test_sparse_lts_rejects_multiple_regression():
    with pytest.raises(ValueError):
        sparse_lts_simple(RegressionModel([1.0, 0.5]), SparseLTSParams(0.75, 0.1))


# ---------------------------------------------------------------------------
# coordinate descent
# ---------------------------------------------------------------------------

def test_coord_descent_single_coordinate_matches_closed_form():
    m = model1(1.5)
    cfg = MCConfig(100_000, 21)
    fr = coord_descent(m, quadratic_loss(), l1_penalty(0.1), cfg=cfg)
    # Monte Carlo moments wobble the estimate by ~1/sqrt(n_draws)
    assert fr.beta[0] == pytest.approx(1.4, abs=3 * 4e-3)


def test_coord_descent_unpenalized_is_consistent():
    m = model1(1.5)
    fr = coord_descent(m, quadratic_loss(), no_penalty(),
                       cfg=MCConfig(100_000, 22))
    assert fr.beta[0] == pytest.approx(1.5, abs=3 * 3.3e-3)


def test_coord_descent_orthogonal_design_decouples():
    m = RegressionModel([1.5, 0.0])
    fr = coord_descent(m, quadratic_loss(), l1_penalty(0.1))
    assert fr.beta == pytest.approx([1.4, 0.0], abs=1e-10)
    assert fr.converged


def test_coord_descent_kkt_residuals():
    m = RegressionModel([1.5, 0.0])
    res, stderr = kkt_residuals(m, l1_penalty(0.1), MCConfig(100_000, 23))
    assert np.all(res <= 5 * stderr)


def test_coord_descent_rejects_robust_loss():
    with pytest.raises(ValueError):
        coord_descent(model1(1.0), huber_loss(), l1_penalty(0.1))


def test_monotone_shrinkage_in_lambda():
    lams = np.arange(0.0, 1.0, 0.05)
    betas = [abs(lasso_simple(model1(1.5), lam).beta[0]) for lam in lams]
    assert all(b >= a for a, b in zip(betas[1:], betas))


def test_l1_bias_constant_on_unshrunk_region():
    for b0 in (0.5, 1.0, 1.5, 2.0):
        assert lasso_simple(model1(b0), 0.1).bias[0] == pytest.approx(-0.1)
    for b0 in (-0.5, -2.0):
        assert lasso_simple(model1(b0), 0.1).bias[0] == pytest.approx(0.1)


# ---------------------------------------------------------------------------
# reweighted least squares
# ---------------------------------------------------------------------------

def test_irls_unpenalized_huber_is_fisher_consistent():
    fr = irls(model1(1.5), huber_loss(), no_penalty(), cfg=MCConfig(100_000, 24))
    assert fr.converged
    assert fr.beta[0] == pytest.approx(1.5, abs=0.012)


def test_irls_keeps_zero_coefficient():
    fr = irls(model1(0.0), biweight_loss(), l1_penalty(0.04),
              cfg=MCConfig(100_000, 25))
    assert fr.beta[0] == 0.0


def test_irls_huber_l1_matches_oracle():
    m = model1(1.5)
    cfg = MCConfig(100_000, 26)
    fr = irls(m, huber_loss(), l1_penalty(0.04), cfg=cfg)
    orc = oracle_minimize(m, huber_loss(), l1_penalty(0.04), cfg)
    tol = max(3 * float(orc.stderr[0]), 1e-2)
    assert abs(fr.beta[0] - orc.beta[0]) <= tol


def test_irls_huber_l1_matches_quadrature_root():
    # independent oracle: solving (b0 - b) E[psi'(r)] = 2 lam by quadrature
    # gives 1.377772 for lam = 0.1 (r normal with variance 1 + (b0 - b)^2)
    cfg = MCConfig(200_000, 27)
    fr = irls(model1(1.5), huber_loss(), l1_penalty(0.1), cfg=cfg)
    assert fr.beta[0] == pytest.approx(1.377772, abs=0.01)


def test_irls_rejects_quadratic_loss():
    with pytest.raises(ValueError):
        irls(model1(1.0), quadratic_loss(), l1_penalty(0.1))


# ---------------------------------------------------------------------------
# brute-force oracle
# ---------------------------------------------------------------------------

def test_oracle_cross_validates_lasso_closed_form():
    m = model1(1.5)
    orc = oracle_minimize(m, quadratic_loss(), l1_penalty(0.1),
                          MCConfig(100_000, 28))
    assert abs(orc.beta[0] - 1.4) <= orc.resolution + 3 * float(orc.stderr[0])


def test_oracle_cross_validates_sparse_lts():
    m = model1(1.5)
    orc = oracle_minimize(m, None, SparseLTSParams(0.75, 0.1),
                          MCConfig(100_000, 29))
    assert abs(orc.beta[0] - 1.3643) <= orc.resolution + 3 * float(orc.stderr[0])


def test_oracle_unpenalized_recovers_beta0():
    m = model1(0.3)
    orc = oracle_minimize(m, quadratic_loss(), no_penalty(), MCConfig(100_000, 30))
    assert abs(orc.beta[0] - 0.3) <= orc.resolution + 3 * float(orc.stderr[0])


def test_oracle_boundary_minimum_is_an_error():
    # biweight + l1 at lam = 0.1 has no stationary point near beta0: the
    # objective decreases all the way to the window edge
    m = model1(1.5)
    with pytest.raises(NumericalError, match="boundary"):
        oracle_minimize(m, biweight_loss(), l1_penalty(0.1),
                        MCConfig(50_000, 31), OracleGrid(halfwidth=0.4),
                        n_batches=0)


def test_oracle_two_coordinates():
    m = RegressionModel([1.5, 0.0])
    orc = oracle_minimize(m, quadratic_loss(), l1_penalty(0.1),
                          MCConfig(50_000, 32),
                          OracleGrid(halfwidth=0.6, points=25, refinements=3),
                          n_batches=4)
    assert orc.beta == pytest.approx([1.4, 0.0],
                                     abs=orc.resolution + 3 * float(np.max(orc.stderr)) + 1e-3)


def test_oracle_rejects_large_p():
    with pytest.raises(ValueError):
        oracle_minimize(RegressionModel([1.0, 1.0, 1.0]), quadratic_loss(),
                        l1_penalty(0.1), MCConfig(1_000, 33))


# ---------------------------------------------------------------------------
# named specs and bias
# ---------------------------------------------------------------------------

def test_bias_definition():
    m = model1(1.5)
    fr = lasso_simple(m, 0.1)
    assert bias(fr, m) == pytest.approx([-0.1])
    assert population_value(make_spec("ls"), m).bias[0] == 0.0
    assert population_value(make_spec("scad", lam=0.1), m).bias[0] == 0.0


def test_population_value_dispatch():
    m = model1(1.5)
    cfg = MCConfig(50_000, 34)
    for name in SPEC_NAMES:
        lam = 0.04 if name in ("huber_l1", "biweight_l1") else 0.1
        fr = population_value(make_spec(name, lam=lam), m, cfg=cfg)
        assert np.all(np.isfinite(fr.beta))
        assert fr.bias == pytest.approx(fr.beta - m.beta0)


def test_ridge_population_value():
    fr = population_value(make_spec("ridge", lam=0.1), model1(1.5))
    assert fr.beta[0] == pytest.approx(1.5 / 1.2, abs=1e-12)


def test_make_spec_rejects_unknown_name():
    with pytest.raises(ValueError):
        make_spec("elastic_net")

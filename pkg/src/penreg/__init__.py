"""Penalized regression functionals, influence functions, and diagnostics."""

__version__ = "0.1.0"

from .exceptions import ConfigError, NumericalError
from .model import (Dataset, Expectation, GaussianMoments, MCConfig,
                    RegressionModel, WeightedSample, derive_seed, draws,
                    expect, sample)
from .losses import (BIWEIGHT_K, HUBER_K, LossSpec, biweight_loss, huber_loss,
                     irls_weight, psi, psi_prime, quadratic_loss, rho)
from .penalties import (SCAD_A, PenaltySpec, j, j_prime, j_second, l1_penalty,
                        l2_penalty, no_penalty, scad_penalty, soft_threshold,
                        soft_threshold_test, tanh_penalty)
from .functionals import (SPEC_NAMES, FunctionalResult, FunctionalSpec,
                          OracleGrid, SparseLTSParams, bias, coord_descent,
                          irls, kkt_residuals, lasso_simple, make_spec,
                          oracle_minimize, population_objective,
                          population_value, scad_simple, sparse_lts_simple,
                          splts_threshold, trim_constants,
                          trimmed_second_moment)
from .influence import (ContaminationPoint, IFSurface, contaminated_functional,
                        default_grid, finite_eps_slope, if_lasso_cd,
                        if_lasso_cd_solve, if_lasso_multi, if_lasso_simple,
                        if_lasso_tanh_limit, if_m_l1, if_penalized_m, if_ridge,
                        if_sparse_lts, if_surface, influence_at)
from .estimators import (FitResult, concentration_step, fit, fit_penalized_m,
                         fit_sparse_lts, mad_scale, penalized_m_objective,
                         sparse_lts_objective)
from .diagnostics import (ASVReport, SensitivitySurface, asv, mse, mse_hat,
                          sensitivity_curve)

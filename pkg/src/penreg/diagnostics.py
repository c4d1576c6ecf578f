"""Robustness diagnostics: sensitivity curves, asymptotic variance, MSE.

The sensitivity curve is the finite-sample analogue of the influence
function: append one observation at (x0, y0) to a fixed base sample, refit,
and scale the estimate change by (n + 1).  The asymptotic variance of a
functional is the model expectation of IF * IF', evaluated by Monte Carlo;
the mean squared error combines it with the squared bias as
``ASV / n + bias^2``, and ``mse_hat`` is its replication-based sample
counterpart ``mean_r (beta_hat_r - beta0)^2``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .estimators import fit
from .exceptions import NumericalError
from .functionals import (FunctionalSpec, _scad_closed_form, population_value)
from .influence import default_grid, influence_at
from .model import (Dataset, MCConfig, RegressionModel, WeightedSample,
                    derive_seed, draws, sample)
from .penalties import soft_threshold

_INNER_TAG = 101  # substream tag for a functional's own expectations


@dataclass
class SensitivitySurface:
    """(n + 1)-scaled estimate changes over a contamination grid."""

    x0: np.ndarray
    y0: np.ndarray
    values: np.ndarray
    n: int
    seed: int
    n_missing: int = 0


@dataclass
class ASVReport:
    asv: float | np.ndarray
    mc_stderr: float
    n_draws: int


def _closed_form_refits(spec: FunctionalSpec, data: Dataset, x0, y0):
    """Vectorized p = 1 refits for the quadratic-loss estimators."""
    x = data.X[:, 0]
    sxx = float(x @ x) + x0 * x0
    sxy = float(x @ data.y) + x0 * y0
    m = data.n + 1
    name = spec.name
    if name == "ls":
        return sxy / sxx
    if name == "ridge":
        return sxy / (sxx + 2.0 * spec.lam * m)
    if name == "lasso":
        return soft_threshold(sxy / m, spec.lam) / (sxx / m)
    if name == "scad":
        out = np.empty_like(np.asarray(x0, dtype=float))
        mm = sxx / m
        bb = sxy / sxx
        for i in range(out.size):
            out[i] = _scad_closed_form(mm[i], bb[i], spec.lam, spec.penalty.a)
        return out
    raise ValueError(name)


def sensitivity_curve(data: Dataset, spec: FunctionalSpec, x0=None, y0=None,
                      seed: int = 0, threads: int = 1,
                      scale: float | None = None) -> SensitivitySurface:
    """Sensitivity curve of an estimator over a contamination grid.

    One base fit plus one refit per grid point with the extra row appended;
    values are (n + 1) * (refit - base fit).  Refits that fail to converge
    are recorded as missing (NaN), never fabricated.  ``scale`` optionally
    pins the robust losses' preliminary scale (1.0 reproduces the
    known-scale setting the population influence functions assume).
    """
    if data.p != 1:
        raise ValueError("sensitivity surfaces are defined for p = 1")
    if x0 is None or y0 is None:
        x0, y0 = default_grid()
    x0 = np.asarray(x0, dtype=float).ravel()
    y0 = np.asarray(y0, dtype=float).ravel()
    n = data.n

    if spec.name in ("ls", "ridge", "lasso", "scad"):
        base = float(fit(spec, data, seed=seed).beta_hat[0])
        vals = (n + 1) * (_closed_form_refits(spec, data, x0, y0) - base)
        return SensitivitySurface(x0, y0, np.asarray(vals, dtype=float), n, seed)

    base = fit(spec, data, seed=seed, scale=scale)

    def refit(point):
        xi, yi = point
        try:
            res = fit(spec, data.append([xi], yi), seed=seed, scale=scale)
        except NumericalError:
            return np.nan
        if not res.converged:
            return np.nan
        return float(res.beta_hat[0])

    points = list(zip(x0, y0))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            refits = list(ex.map(refit, points))
    else:
        refits = [refit(pt) for pt in points]
    refits = np.asarray(refits, dtype=float)
    vals = (n + 1) * (refits - float(base.beta_hat[0]))
    return SensitivitySurface(x0, y0, vals, n, seed,
                              n_missing=int(np.isnan(refits).sum()))


def asv(model: RegressionModel, spec: FunctionalSpec, cfg: MCConfig,
        fr=None, sample_=None) -> ASVReport:
    """Asymptotic variance as the model expectation of IF * IF'.

    The integration draws come from ``cfg``; a functional's own internal
    expectations use a substream derived from the same seed, so running
    several specs with one cfg shares the integration randomness.
    """
    X, Y = draws(model, cfg)
    inner = MCConfig(cfg.n_draws, derive_seed(cfg.seed, _INNER_TAG))
    vals = influence_at(spec, model, X if model.p > 1 else X[:, 0], Y,
                        cfg=inner, fr=fr, sample=sample_)
    vals = np.asarray(vals, dtype=float)
    if model.p == 1:
        sq = vals * vals
        return ASVReport(float(sq.mean()), float(sq.std() / np.sqrt(sq.size)),
                         cfg.n_draws)
    outer = vals[:, :, None] * vals[:, None, :]
    mean = outer.mean(axis=0)
    stderr = float(np.max(outer.std(axis=0) / np.sqrt(vals.shape[0])))
    return ASVReport(mean, stderr, cfg.n_draws)


def mse(model: RegressionModel, spec: FunctionalSpec, n: int, cfg: MCConfig,
        fr=None, sample_=None, asv_report: ASVReport | None = None):
    """Population mean squared error ASV / n + bias bias' at sample size n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if asv_report is None:
        asv_report = asv(model, spec, cfg, fr=fr, sample_=sample_)
    if fr is None:
        inner = MCConfig(cfg.n_draws, derive_seed(cfg.seed, _INNER_TAG))
        fr = population_value(spec, model, cfg=inner, sample=sample_)
    if model.p == 1:
        return float(asv_report.asv / n + fr.bias[0] ** 2)
    return asv_report.asv / n + np.outer(fr.bias, fr.bias)


def mse_hat(model: RegressionModel, spec: FunctionalSpec, n: int, R: int,
            seed: int = 0) -> float:
    """Replication estimate of the mean squared error.

    Fits the estimator on R independent samples of size n and averages the
    squared deviation from beta0.  Non-converged replicates are excluded
    and counted; more than 10% exclusions fails the run.
    """
    if R < 2:
        raise ValueError("R must be >= 2")
    sq = []
    excluded = 0
    for r in range(R):
        data = sample(model, n, derive_seed(seed, r))
        try:
            res = fit(spec, data, seed=derive_seed(seed, R + r))
        except NumericalError:
            excluded += 1
            continue
        if not res.converged:
            excluded += 1
            continue
        sq.append(float(np.sum((res.beta_hat - model.beta0) ** 2)))
    if excluded > 0.1 * R:
        raise NumericalError(
            f"{excluded} of {R} replicates failed to converge")
    return float(np.mean(sq))

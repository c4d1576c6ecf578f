"""Sample-level estimators: penalized M-regression and sparse LTS.

Penalized M-estimators minimize ``mean(rho((y - x'b)/scale)) + 2 lam sum J``
by iteratively reweighted least squares with coordinate-descent inner
solves.  Starting values follow the usual practice: the least-squares fit
for quadratic losses and the robust sparse LTS fit for Huber/biweight, with
the preliminary scale taken as the MAD of the initial fit's residuals
(quadratic losses are scale-free here and use scale 1).

The sparse LTS estimator minimizes the mean of the h smallest squared
residuals plus ``lam * sum |b_j|`` through concentration steps: refit an
l1-penalized least squares on the current subset, then keep the h
observations with the smallest absolute residuals.  Each step weakly
decreases the trimmed objective.  Subset selection and tie-breaking happen
in a content-sorted row order and the start seed hashes the data content,
so row permutations cannot change the result.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import NumericalError
from .functionals import FunctionalSpec, SparseLTSParams, _cd_solve, _irls_solve
from .losses import LossSpec, rho
from .model import Dataset, WeightedSample
from .penalties import PenaltySpec, j, l1_penalty, soft_threshold

MAD_FACTOR = 1.4826  # consistency at the normal distribution


@dataclass
class FitResult:
    """Fitted coefficients plus the information needed to audit the fit."""

    beta_hat: np.ndarray
    scale_hat: float
    subset: np.ndarray | None
    objective: float
    converged: bool
    iterations: int = 0


def mad_scale(residuals) -> float:
    """Scaled median absolute deviation, 1.4826 * med|r - med(r)|."""
    r = np.asarray(residuals, dtype=float).ravel()
    if r.size < 2:
        raise ValueError("need at least two residuals")
    med = np.median(r)
    mad = np.median(np.abs(r - med))
    if mad <= 0.0:
        raise NumericalError(
            "residual MAD is zero; pick a different initial fit")
    return MAD_FACTOR * mad


def _ols(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.linalg.lstsq(X, y, rcond=None)[0]


def penalized_m_objective(data: Dataset, loss: LossSpec, penalty: PenaltySpec,
                          beta) -> float:
    """mean(rho(y - X b)) + 2 lam sum J(b_j) at the given coefficients."""
    r = data.y - data.X @ np.asarray(beta, dtype=float)
    return float(np.mean(rho(loss, r)) + 2.0 * penalty.lam * np.sum(j(penalty, beta)))


def fit_penalized_m(data: Dataset, loss: LossSpec, penalty: PenaltySpec,
                    start=None, scale: float | None = None, seed: int = 0,
                    tol: float = 1e-9, max_iter: int = 500,
                    cd_tol: float = 1e-12, cd_max_iter: int = 10_000) -> FitResult:
    """Penalized M-estimate by reweighted least squares.

    ``start``/``scale`` default to the policy above.  Non-convergence is
    flagged on the result, with the last iterate returned.
    """
    if data.n < 2:
        raise ValueError("fitting needs at least two observations")
    if penalty.lam < 0:
        raise ValueError("lam must be >= 0")
    robust = loss.kind != "quadratic"
    if start is None:
        if robust:
            start = fit_sparse_lts(
                data, SparseLTSParams(0.75, penalty.lam), seed=seed).beta_hat
        else:
            start = _ols(data.X, data.y)
    start = np.asarray(start, dtype=float)
    if scale is None:
        scale = mad_scale(data.y - data.X @ start) if robust else 1.0
    loss = replace(loss, scale=float(scale))
    sample = WeightedSample(data.X, data.y, np.full(data.n, 1.0 / data.n))
    beta, iters, ok = _irls_solve(sample, loss, penalty, start, tol, max_iter,
                                  cd_tol, cd_max_iter)
    obj = penalized_m_objective(data, loss, penalty, beta)
    return FitResult(beta, float(scale), None, obj, ok, iters)


# ---------------------------------------------------------------------------
# sparse LTS via concentration steps
# ---------------------------------------------------------------------------

def sparse_lts_objective(data: Dataset, params: SparseLTSParams, beta) -> float:
    """Mean of the h smallest squared residuals plus lam * l1(beta)."""
    h = math.ceil(params.alpha * data.n)
    r2 = (data.y - data.X @ np.asarray(beta, dtype=float)) ** 2
    trimmed = np.partition(r2, h - 1)[:h]
    return float(trimmed.mean() + params.lam * np.sum(np.abs(beta)))


def _canonical_order(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    keys = tuple(X[:, k] for k in reversed(range(X.shape[1]))) + (y,)
    return np.lexsort(keys)


def _content_key(Xc: np.ndarray, yc: np.ndarray) -> int:
    payload = np.ascontiguousarray(np.column_stack([yc, Xc]))
    return int.from_bytes(hashlib.blake2b(payload.tobytes(), digest_size=8).digest(),
                          "big")


def _subset_lasso(Xs, ys, lam, start):
    # objective on the subset is mean squared residual + lam * l1, i.e. the
    # descent engine must see penalty weight lam / 2
    n, p = Xs.shape
    G = Xs.T @ Xs / n
    g = Xs.T @ ys / n
    if p == 1:
        m = G[0, 0]
        if m <= 0:
            raise NumericalError("degenerate subset: predictor second moment is zero")
        return np.array([soft_threshold(g[0], lam / 2.0) / m])
    beta, _, _ = _cd_solve(G, g, l1_penalty(lam / 2.0), start, 1e-12, 10_000)
    return beta


def concentration_step(X: np.ndarray, y: np.ndarray, beta, h: int, lam: float):
    """One concentration step: select the h smallest-|residual| rows at the
    current coefficients, then refit the l1-penalized least squares on them.

    Returns ``(beta_new, subset)`` with the subset indices sorted.  Each step
    weakly decreases the trimmed objective.  Ties in |residual| are broken
    by row position, so callers wanting permutation invariance must pass
    rows in a content-determined order.
    """
    beta = np.asarray(beta, dtype=float)
    r = y - X @ beta
    order = np.argsort(np.abs(r), kind="stable")[:h]
    beta_new = _subset_lasso(X[order], y[order], lam, beta)
    return beta_new, np.sort(order)


def fit_sparse_lts(data: Dataset, params: SparseLTSParams, seed: int = 0,
                   n_starts: int = 50, n_keep: int = 10,
                   max_csteps: int = 200) -> FitResult:
    """Sparse LTS estimate by multi-start concentration steps.

    ``n_starts`` random size-3 elemental fits are improved by two
    concentration steps each; the ``n_keep`` best candidates iterate to a
    fixed subset, and the candidate with the smallest trimmed objective
    wins (ties broken by the lexicographically smallest subset).
    """
    if data.n < 2:
        raise ValueError("fitting needs at least two observations")
    n, p = data.n, data.p
    h = math.ceil(params.alpha * n)
    if h > n:
        raise ValueError("trimming count h exceeds the sample size")
    canon = _canonical_order(data.X, data.y)
    Xc, yc = data.X[canon], data.y[canon]
    rng = np.random.default_rng(
        np.random.SeedSequence([int(seed), _content_key(Xc, yc)]))

    def elemental_beta():
        for _ in range(100):
            idx = rng.choice(n, size=min(3, n), replace=False)
            try:
                return _subset_lasso(Xc[idx], yc[idx], params.lam, np.zeros(p))
            except NumericalError:
                continue
        raise NumericalError("could not find a non-degenerate elemental start")

    def cstep(beta):
        return concentration_step(Xc, yc, beta, h, params.lam)

    def objective(beta):
        r2 = (yc - Xc @ beta) ** 2
        return float(np.partition(r2, h - 1)[:h].mean()
                     + params.lam * np.sum(np.abs(beta)))

    candidates = []
    for _ in range(n_starts):
        beta = elemental_beta()
        subset = None
        for _ in range(2):
            beta, subset = cstep(beta)
        candidates.append((objective(beta), beta, subset, 2))
    candidates.sort(key=lambda c: c[0])

    finished = []
    for obj, beta, subset, steps in candidates[:n_keep]:
        converged = False
        for _ in range(max_csteps):
            beta_new, subset_new = cstep(beta)
            steps += 1
            if subset is not None and np.array_equal(subset_new, subset):
                beta, subset = beta_new, subset_new
                converged = True
                break
            beta, subset = beta_new, subset_new
        finished.append((objective(beta), tuple(subset), beta, converged, steps))

    finished.sort(key=lambda c: (c[0], c[1]))
    best_obj, subset_c, beta, converged, steps = finished[0]
    subset = np.sort(canon[np.array(subset_c, dtype=int)])
    return FitResult(beta, 1.0, subset, best_obj, converged, steps)


def fit(spec: FunctionalSpec, data: Dataset, seed: int = 0,
        scale: float | None = None) -> FitResult:
    """Fit a named functional spec to data.

    ``scale`` overrides the preliminary-scale policy of the robust losses
    (pass 1.0 to fit at a known error scale, matching the population
    functionals); it is ignored by the scale-free quadratic specs.
    """
    if spec.name == "splts":
        return fit_sparse_lts(data, spec.lts, seed=seed)
    return fit_penalized_m(data, spec.loss, spec.penalty, seed=seed,
                           scale=scale)


__all__ = [
    "Dataset", "FitResult", "concentration_step", "fit", "fit_penalized_m",
    "fit_sparse_lts", "mad_scale", "penalized_m_objective",
    "sparse_lts_objective",
]

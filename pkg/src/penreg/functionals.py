"""Population-level solvers for penalized regression functionals.

A functional is the minimizer of an expected objective under the model
distribution: mean loss of the residual plus ``2 * lam * sum_j J(beta_j)``
for penalized M-functionals, or the trimmed squared residual plus
``alpha * lam * sum_j |beta_j|`` for the sparse least-trimmed-squares (LTS)
functional.

Simple regression (p = 1) admits closed forms for the lasso, SCAD and
sparse LTS functionals; multiple regression is handled by coordinate
descent on exact or Monte Carlo moments, and non-quadratic losses by an
iteratively reweighted least-squares loop whose fixed points satisfy the
exact first-order condition.  ``oracle_minimize`` is an independent
brute-force check: it minimizes the Monte Carlo objective over a refining
grid with common random numbers across candidate coefficients.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import ndtr, ndtri

from .exceptions import NumericalError
from .losses import (BIWEIGHT_K, HUBER_K, LossSpec, biweight_loss, huber_loss,
                     irls_weight, quadratic_loss, rho)
from .model import GaussianMoments, MCConfig, RegressionModel, WeightedSample
from .penalties import (SCAD_A, PenaltySpec, j, l1_penalty, l2_penalty,
                        no_penalty, scad_penalty, soft_threshold,
                        soft_threshold_test)

SPEC_NAMES = ("ls", "ridge", "lasso", "scad", "huber_l1", "biweight_l1", "splts")


def norm_pdf(t):
    return np.exp(-0.5 * np.asarray(t, dtype=float) ** 2) / math.sqrt(2.0 * math.pi)


def trimmed_second_moment(t):
    """E[Z^2 1{|Z| <= t}] for standard normal Z."""
    t = np.asarray(t, dtype=float)
    return (2.0 * ndtr(t) - 1.0) - 2.0 * t * norm_pdf(t)


def trim_constants(alpha: float) -> tuple[float, float]:
    """Trimming boundary quantile and retained second moment.

    Returns ``(q_alpha, c1)`` where ``q_alpha`` is the (alpha + 1)/2
    standard-normal quantile and ``c1 = alpha - 2 q_alpha phi(q_alpha)``,
    the second moment retained after trimming to ``|Z| <= q_alpha``.
    """
    qa = float(ndtri((alpha + 1.0) / 2.0))
    c1 = alpha - 2.0 * qa * float(norm_pdf(qa))
    return qa, c1


@dataclass(frozen=True)
class SparseLTSParams:
    """Trimming proportion and l1 penalty weight of the sparse LTS objective."""

    alpha: float = 0.75
    lam: float = 0.0

    def __post_init__(self):
        if not 0.5 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0.5, 1]")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")


@dataclass
class FunctionalResult:
    """Value of a population functional together with solver metadata."""

    beta: np.ndarray
    bias: np.ndarray
    method: str  # closed_form | coord_descent | irls | oracle
    iterations: int = 0
    converged: bool = True
    mc: MCConfig | None = None
    stderr: np.ndarray | None = None
    resolution: float | None = None


def _result(beta, model, method, **kw) -> FunctionalResult:
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    return FunctionalResult(beta=beta, bias=beta - model.beta0, method=method, **kw)


def bias(fr: FunctionalResult, model: RegressionModel) -> np.ndarray:
    """Bias of the functional at the model: beta(H0) - beta0."""
    return fr.beta - model.beta0


# ---------------------------------------------------------------------------
# closed forms for simple regression
# ---------------------------------------------------------------------------

def lasso_simple(model: RegressionModel, lam: float) -> FunctionalResult:
    """Lasso functional for simple regression.

    Soft-thresholds the least-squares functional at ``lam / E[x^2]``; at the
    model distribution the least-squares functional equals beta0.
    """
    if model.p != 1:
        raise ValueError("lasso_simple requires p = 1")
    ex2 = model.x_var[0]
    b_ls = model.xy[0] / ex2
    return _result(soft_threshold(b_ls, lam / ex2), model, "closed_form")


def scad_simple(model: RegressionModel, lam: float, a: float = SCAD_A) -> FunctionalResult:
    """SCAD functional for simple regression (three-branch closed form).

    Requires ``E[x^2] > 1/(a - 1)``; small coefficients are soft-thresholded,
    intermediate ones partially shrunk, and large ones left at the
    least-squares value (no shrinkage, hence no bias there).
    """
    if model.p != 1:
        raise ValueError("scad_simple requires p = 1")
    ex2 = model.x_var[0]
    if not ex2 * (a - 1.0) > 1.0:
        raise NumericalError(
            f"SCAD closed form requires E[x^2] > 1/(a-1); got E[x^2]={ex2:.6g}, a={a}")
    b_ls = model.xy[0] / ex2
    return _result(_scad_closed_form(ex2, b_ls, lam, a), model, "closed_form")


def _scad_closed_form(m: float, b_ls: float, lam: float, a: float) -> float:
    if lam == 0.0:
        return b_ls
    ab = abs(b_ls)
    if ab <= lam + lam / m:
        return soft_threshold(b_ls, lam / m)
    if ab <= a * lam:
        return ((a - 1.0) * m * b_ls - a * lam * math.copysign(1.0, b_ls)) / ((a - 1.0) * m - 1.0)
    return b_ls


def splts_threshold(params: SparseLTSParams, ex2: float) -> float:
    """Shrinkage threshold of the sparse LTS functional: alpha*lam/(2 c1 E[x^2])."""
    _, c1 = trim_constants(params.alpha)
    return params.alpha * params.lam / (2.0 * c1 * ex2)


def sparse_lts_simple(model: RegressionModel, params: SparseLTSParams) -> FunctionalResult:
    """Sparse LTS functional for simple regression with normal x and e.

    beta = sign(beta0) (|beta0| - alpha*lam / (2 c1 E[x^2]))_+ where c1 is
    the trimmed normal second moment from :func:`trim_constants`.  Only the
    normal predictor/error family is supported.
    """
    if model.p != 1:
        raise ValueError("sparse_lts_simple requires p = 1")
    thr = splts_threshold(params, model.x_var[0])
    return _result(soft_threshold(model.beta0[0], thr), model, "closed_form")


# ---------------------------------------------------------------------------
# coordinate descent on (possibly weighted) second moments
# ---------------------------------------------------------------------------

def _tanh_coordinate_update(m: float, s: float, pen: PenaltySpec) -> float:
    # coarse bracket then a bounded 1-d search; the smooth objective can be
    # locally nonconvex for large K, so the bracket comes from a grid scan
    if s == 0.0:
        return 0.0
    b_ls = s / m
    lo = min(b_ls, 0.0) - 1e-3
    hi = max(b_ls, 0.0) + 1e-3
    grid = np.linspace(lo, hi, 129)
    vals = m * grid * grid - 2.0 * s * grid + 2.0 * pen.lam * j(pen, grid)
    i = int(np.argmin(vals))
    lo_b, hi_b = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = minimize_scalar(
        lambda b: m * b * b - 2.0 * s * b + 2.0 * pen.lam * j(pen, b),
        bounds=(lo_b, hi_b), method="bounded", options={"xatol": 1e-13})
    return float(res.x)


def _coordinate_update(pen: PenaltySpec, m: float, s: float) -> float:
    if m <= 0:
        raise NumericalError("degenerate coordinate second moment in descent update")
    if pen.kind == "none":
        return s / m
    if pen.kind == "l2":
        return s / (m + 2.0 * pen.lam)
    if pen.kind == "l1":
        if soft_threshold_test(pen, s, m):
            return 0.0
        return soft_threshold(s, pen.lam) / m
    if pen.kind == "scad":
        if pen.lam > 0.0 and abs(s / m) > pen.lam + pen.lam / m and not m * (pen.a - 1.0) > 1.0:
            raise NumericalError(
                f"SCAD update outside its validity region: second moment {m:.6g} "
                f"<= 1/(a-1) = {1.0 / (pen.a - 1.0):.6g}")
        return _scad_closed_form(m, s / m, pen.lam, pen.a)
    return _tanh_coordinate_update(m, s, pen)


def _cd_solve(G, g, penalty: PenaltySpec, start, tol: float, max_iter: int):
    """Cyclic coordinate descent for beta'G beta - 2 g'beta + 2 lam sum J."""
    beta = np.array(start, dtype=float)
    p = beta.size
    for it in range(1, max_iter + 1):
        delta = 0.0
        for k in range(p):
            s = g[k] - G[k] @ beta + G[k, k] * beta[k]
            new = _coordinate_update(penalty, G[k, k], s)
            delta = max(delta, abs(new - beta[k]))
            beta[k] = new
        if delta < tol:
            return beta, it, True
    return beta, max_iter, False


def coord_descent(model: RegressionModel, loss: LossSpec, penalty: PenaltySpec,
                  start=None, cfg: MCConfig | None = None, tol: float = 1e-6,
                  max_iter: int = 1000, moments=None) -> FunctionalResult:
    """Quadratic-loss functional by cyclic coordinate descent.

    Each cycle updates one coordinate by the simple-regression closed form
    applied to partial residuals.  Moments come from ``moments`` if given,
    from a common-random-numbers Monte Carlo sample when ``cfg`` is set,
    and from the exact model moments otherwise.  The starting value
    defaults to beta0.
    """
    if loss.kind != "quadratic":
        raise ValueError("coord_descent requires the quadratic loss; see irls")
    if tol <= 0:
        raise ValueError("tol must be > 0")
    if moments is None:
        moments = GaussianMoments.from_model(model) if cfg is None \
            else WeightedSample.from_model(model, cfg)
    G, g = moments.moments()
    scale2 = loss.scale ** 2
    start = model.beta0 if start is None else np.asarray(start, dtype=float)
    if not np.all(np.isfinite(start)):
        raise ValueError("start must be finite")
    beta, iters, ok = _cd_solve(G / scale2, g / scale2, penalty, start, tol, max_iter)
    if not ok:
        warnings.warn("coordinate descent hit max_iter without converging", RuntimeWarning)
    return _result(beta, model, "coord_descent", iterations=iters, converged=ok, mc=cfg)


# ---------------------------------------------------------------------------
# iteratively reweighted least squares for non-quadratic losses
# ---------------------------------------------------------------------------

def _irls_solve(sample: WeightedSample, loss: LossSpec, penalty: PenaltySpec,
                start, tol: float, max_iter: int,
                cd_tol: float = 1e-10, cd_max_iter: int = 1000):
    """Reweighted least squares on a weighted sample.

    The residual weight is psi(r)/(2r) (see :func:`penreg.losses.irls_weight`),
    so a fixed point satisfies E[psi(r) x] = 2 lam J'(beta) exactly.  With an
    l1 or SCAD penalty each weighted subproblem is solved by coordinate
    descent; the weighted ridge subproblem has a direct solution.
    """
    X, y, base_w = sample.X, sample.y, sample.w
    beta = np.array(start, dtype=float)
    identity = np.eye(X.shape[1])
    for it in range(1, max_iter + 1):
        r = y - X @ beta
        w = base_w * irls_weight(loss, r)
        G = (X * w[:, None]).T @ X
        g = X.T @ (w * y)
        if penalty.kind == "none":
            beta_new = np.linalg.solve(G, g)
        elif penalty.kind == "l2":
            beta_new = np.linalg.solve(G + 2.0 * penalty.lam * identity, g)
        else:
            beta_new, _, _ = _cd_solve(G, g, penalty, beta, cd_tol, cd_max_iter)
        delta = float(np.max(np.abs(beta_new - beta)))
        beta = beta_new
        if delta < tol:
            return beta, it, True
    return beta, max_iter, False


def irls(model: RegressionModel, loss: LossSpec, penalty: PenaltySpec,
         start=None, cfg: MCConfig | None = None, tol: float = 1e-6,
         max_iter: int = 100, sample: WeightedSample | None = None) -> FunctionalResult:
    """Penalized M-functional for a non-quadratic loss.

    Alternates residual reweighting with a weighted lasso/SCAD coordinate
    descent (or the weighted ridge closed form) on Monte Carlo moments.
    Converges to a local solution; the starting value defaults to beta0,
    which selects the solution branch near the true coefficient.
    """
    if loss.kind == "quadratic":
        raise ValueError("irls is for non-quadratic losses; use coord_descent")
    if cfg is None:
        cfg = MCConfig()
    if sample is None:
        sample = WeightedSample.from_model(model, cfg)
    start = model.beta0 if start is None else np.asarray(start, dtype=float)
    if not np.all(np.isfinite(start)):
        raise ValueError("start must be finite")
    beta, iters, ok = _irls_solve(sample, loss, penalty, start, tol, max_iter)
    if not ok:
        warnings.warn("IRLS hit max_iter without converging", RuntimeWarning)
    return _result(beta, model, "irls", iterations=iters, converged=ok, mc=cfg)


def kkt_residuals(model: RegressionModel, penalty: PenaltySpec, cfg: MCConfig,
                  fr: FunctionalResult | None = None,
                  sample: WeightedSample | None = None):
    """Optimality residuals of a Monte Carlo lasso solution at the model.

    After coordinate descent on sampled moments, the exact population score
    ``E[x_j (y - x' beta)]`` must match ``lam * sign(beta_j)`` for active
    coordinates and stay within ``lam`` in magnitude for zero coordinates,
    up to the Monte Carlo error of the fitted value.  Returns the residual
    of those conditions per coordinate together with the standard error of
    the sampled score, so callers can test ``residual <= 5 * stderr``.
    """
    if penalty.kind != "l1":
        raise ValueError("kkt_residuals applies to the l1 penalty")
    if sample is None:
        sample = WeightedSample.from_model(model, cfg)
    if fr is None:
        fr = coord_descent(model, quadratic_loss(), penalty, moments=sample)
    beta = fr.beta
    score = model.xy - model.xx @ beta
    active = np.abs(beta) > 1e-10
    residual = np.where(active,
                        np.abs(penalty.lam * np.sign(beta) - score),
                        np.maximum(np.abs(score) - penalty.lam, 0.0))
    per_draw = sample.X * (sample.y - sample.X @ beta)[:, None]
    stderr = per_draw.std(axis=0) / math.sqrt(sample.y.size)
    return residual, stderr


# ---------------------------------------------------------------------------
# brute-force oracle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OracleGrid:
    """Search window (center +- halfwidth per coordinate) and refinement depth."""

    halfwidth: float = 1.0
    points: int = 41
    refinements: int = 4


def population_objective(sample: WeightedSample, loss: LossSpec | None, target):
    """Objective evaluator ``f(B) -> values`` over candidate rows B (k, p).

    ``target`` is a PenaltySpec (penalized M objective: mean loss plus
    2 lam sum J) or SparseLTSParams (trimmed squared residual below the
    empirical alpha-quantile of |residual| plus alpha lam l1).  All
    candidates are scored against the same draws.
    """
    X, y, w = sample.X, sample.y, sample.w
    m = y.size
    block = max(1, int(8e6) // m)
    uniform = np.allclose(w, w[0])

    if isinstance(target, SparseLTSParams):
        alpha, lam = target.alpha, target.lam

        def f(B):
            B = np.atleast_2d(np.asarray(B, dtype=float))
            out = np.empty(B.shape[0])
            for s in range(0, B.shape[0], block):
                Bb = B[s:s + block]
                R = y[:, None] - X @ Bb.T
                A = np.abs(R)
                if uniform:
                    q = np.quantile(A, alpha, axis=0, method="inverted_cdf")
                else:
                    q = np.array([_weighted_quantile(A[:, c], w, alpha)
                                  for c in range(A.shape[1])])
                inside = A <= q[None, :]
                out[s:s + block] = w @ (R * R * inside) \
                    + alpha * lam * np.abs(Bb).sum(axis=1)
            return out

        return f

    penalty = target

    def f(B):
        B = np.atleast_2d(np.asarray(B, dtype=float))
        out = np.empty(B.shape[0])
        for s in range(0, B.shape[0], block):
            Bb = B[s:s + block]
            R = y[:, None] - X @ Bb.T
            pen = 2.0 * penalty.lam * j(penalty, Bb).sum(axis=1)
            out[s:s + block] = w @ rho(loss, R) + pen
        return out

    return f


def _weighted_quantile(values, w, alpha):
    order = np.argsort(values, kind="stable")
    cw = np.cumsum(w[order])
    idx = int(np.searchsorted(cw, alpha, side="left"))
    return values[order[min(idx, values.size - 1)]]


def _grid_axes(center, hw, points):
    return [np.linspace(c - hw, c + hw, points) for c in center]


def _grid_argmin(f, center, grid: OracleGrid, p: int):
    center = np.array(center, dtype=float)
    hw = grid.halfwidth
    step = None
    for level in range(grid.refinements + 1):
        expansions = 0
        while True:
            axes = _grid_axes(center, hw, grid.points)
            if p == 1:
                cand = axes[0][:, None]
            else:
                mesh = np.meshgrid(*axes, indexing="ij")
                cand = np.column_stack([g.ravel() for g in mesh])
            vals = f(cand)
            flat = int(np.argmin(vals))
            idx = np.unravel_index(flat, (grid.points,) * p)
            on_edge = any(i == 0 or i == grid.points - 1 for i in idx)
            if not on_edge:
                break
            if level == 0 or expansions >= 3:
                at = cand[flat]
                raise NumericalError(
                    f"oracle minimum on the grid boundary at beta={np.round(at, 6)}; "
                    "widen the search grid")
            hw *= 2.0
            expansions += 1
        step = axes[0][1] - axes[0][0]
        center = np.array([axes[d][idx[d]] for d in range(p)])
        hw = 2.0 * step
    return center, step


def oracle_minimize(model: RegressionModel, loss: LossSpec | None, target,
                    cfg: MCConfig, grid: OracleGrid = OracleGrid(),
                    center=None, n_batches: int = 8) -> FunctionalResult:
    """Population functional by direct minimization of the Monte Carlo
    objective over a refining grid.

    The same draws are reused for every candidate coefficient (common
    random numbers), so grid comparisons are free of independent Monte
    Carlo jitter.  The reported ``stderr`` is a batch estimate of the
    minimizer's Monte Carlo uncertainty, and ``resolution`` is the final
    grid step.  A minimum on the initial grid boundary is an error.
    """
    if model.p > 2:
        raise ValueError("oracle_minimize is a desk-scale check for p <= 2")
    sample = WeightedSample.from_model(model, cfg)
    center = model.beta0 if center is None else np.atleast_1d(np.asarray(center, dtype=float))
    beta, step = _grid_argmin(population_objective(sample, loss, target),
                              center, grid, model.p)
    stderr = None
    if n_batches and n_batches > 1:
        mins = []
        for b in sample.batches(n_batches):
            mins.append(_grid_argmin(population_objective(b, loss, target),
                                     center, grid, model.p)[0])
        stderr = np.std(np.array(mins), axis=0, ddof=1) / math.sqrt(n_batches)
    return _result(beta, model, "oracle", iterations=grid.refinements,
                   mc=cfg, stderr=stderr, resolution=step)


# ---------------------------------------------------------------------------
# named functional specifications
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FunctionalSpec:
    """A named (loss, penalty) combination or the sparse LTS objective."""

    name: str
    loss: LossSpec | None = None
    penalty: PenaltySpec | None = None
    lts: SparseLTSParams | None = None

    @property
    def lam(self) -> float:
        return self.lts.lam if self.lts is not None else self.penalty.lam

    @property
    def label(self) -> str:
        return self.name


def make_spec(name: str, lam: float = 0.1, a: float = SCAD_A, alpha: float = 0.75,
              huber_k: float = HUBER_K, biweight_k: float = BIWEIGHT_K) -> FunctionalSpec:
    """Build one of the named functional specs.

    Names: ls, ridge, lasso, scad, huber_l1, biweight_l1, splts.
    """
    q = quadratic_loss()
    if name == "ls":
        return FunctionalSpec(name, q, no_penalty())
    if name == "ridge":
        return FunctionalSpec(name, q, l2_penalty(lam))
    if name == "lasso":
        return FunctionalSpec(name, q, l1_penalty(lam))
    if name == "scad":
        return FunctionalSpec(name, q, scad_penalty(lam, a))
    if name == "huber_l1":
        return FunctionalSpec(name, huber_loss(huber_k), l1_penalty(lam))
    if name == "biweight_l1":
        return FunctionalSpec(name, biweight_loss(biweight_k), l1_penalty(lam))
    if name == "splts":
        return FunctionalSpec(name, lts=SparseLTSParams(alpha, lam))
    raise ValueError(f"unknown functional spec {name!r}; choose from {SPEC_NAMES}")


def population_value(spec: FunctionalSpec, model: RegressionModel,
                     cfg: MCConfig | None = None,
                     sample: WeightedSample | None = None) -> FunctionalResult:
    """Population functional value for a named spec.

    Quadratic-loss specs use closed forms (p = 1) or coordinate descent on
    exact moments; Huber/biweight specs need Monte Carlo and accept an
    optional pre-drawn sample for common random numbers.
    """
    name = spec.name
    if name == "ls":
        return _result(model.beta0.copy(), model, "closed_form")
    if name == "ridge":
        beta = np.linalg.solve(model.xx + 2.0 * spec.lam * np.eye(model.p), model.xy)
        return _result(beta, model, "closed_form")
    if name == "lasso":
        if model.p == 1:
            return lasso_simple(model, spec.lam)
        return coord_descent(model, spec.loss, spec.penalty, cfg=cfg)
    if name == "scad":
        if model.p == 1:
            return scad_simple(model, spec.lam, spec.penalty.a)
        return coord_descent(model, spec.loss, spec.penalty, cfg=cfg)
    if name in ("huber_l1", "biweight_l1"):
        return irls(model, spec.loss, spec.penalty, cfg=cfg, sample=sample)
    if name == "splts":
        return sparse_lts_simple(model, spec.lts)
    raise ValueError(f"unknown functional spec {name!r}")

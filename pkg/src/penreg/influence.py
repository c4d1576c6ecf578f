"""Influence functions of penalized regression functionals.

The influence function at a contamination point (x0, y0) is the derivative
of the functional along the mixture (1 - eps) H0 + eps * delta_(x0, y0) at
eps = 0.  This module provides

* the general resolvent formula for twice-differentiable penalties:
  ``(E[psi'(r) x x'] + 2 lam diag(J''(beta)))^-1 (psi(r0) x0 - E[psi(r) x])``,
* its exact quadratic-loss specializations (least squares, ridge, SCAD,
  smooth-l1 approximations),
* the simple- and multiple-regression lasso forms, the coordinate-descent
  recursion that connects them, and the smooth tanh-penalty limit,
* the sparse LTS influence function for normal simple regression,
* a finite-contamination oracle: refit the functional under the eps-mixture
  with common random numbers and extrapolate the slope to eps = 0.

Functions accept scalar or array contamination points and broadcast.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import ndtri

from .exceptions import NumericalError
from .functionals import (FunctionalResult, FunctionalSpec, SparseLTSParams,
                          _cd_solve, _irls_solve, _scad_closed_form,
                          coord_descent, irls, population_value,
                          sparse_lts_simple, splts_threshold, trim_constants,
                          trimmed_second_moment)
from .losses import LossSpec, psi, psi_prime, quadratic_loss
from .model import (GaussianMoments, MCConfig, RegressionModel,
                    WeightedSample)
from .penalties import PenaltySpec, j_second, l1_penalty, tanh_penalty

ACTIVE_TOL = 1e-8
RCOND_MIN = 1e-12

MC_SPECS = ("huber_l1", "biweight_l1")


@dataclass(frozen=True)
class ContaminationPoint:
    """A single contamination location (x0, y0)."""

    x0: np.ndarray
    y0: float

    def __post_init__(self):
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        if not (np.all(np.isfinite(x0)) and np.isfinite(self.y0)):
            raise ValueError("contamination point must be finite")
        object.__setattr__(self, "x0", x0)


@dataclass
class IFSurface:
    """Influence-function values over a grid of contamination points."""

    x0: np.ndarray
    y0: np.ndarray
    values: np.ndarray
    functional_id: str


def default_grid(lim: float = 10.0, n: int = 41):
    """Flattened square grid of contamination points in [-lim, lim]^2."""
    axis = np.linspace(-lim, lim, n)
    gx, gy = np.meshgrid(axis, axis, indexing="ij")
    return gx.ravel(), gy.ravel()


def _points(x0, y0, p: int):
    """Normalize contamination input to (N, p), (N,) plus a scalar flag."""
    X0 = np.asarray(x0, dtype=float)
    Y0 = np.asarray(y0, dtype=float)
    scalar = (X0.ndim == 0 and p == 1) or (X0.ndim == 1 and p > 1 and Y0.ndim == 0)
    if p == 1:
        X0 = X0.reshape(-1, 1)
    else:
        X0 = X0.reshape(-1, p)
    Y0 = np.broadcast_to(Y0.ravel(), (X0.shape[0],)).astype(float)
    return X0, Y0, scalar


def _ret(values: np.ndarray, scalar: bool, p: int):
    if p == 1:
        values = values[:, 0]
    return (values[0] if scalar else values)


def _check_condition(M: np.ndarray):
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or 1.0 / cond < RCOND_MIN:
        raise NumericalError(
            f"influence matrix is numerically singular (condition ~{cond:.3e})")


# ---------------------------------------------------------------------------
# general resolvent formula (Monte Carlo expectations)
# ---------------------------------------------------------------------------

def _psi_moments(sample: WeightedSample, loss: LossSpec, beta: np.ndarray):
    """E[psi(r) x] and E[psi'(r) x x'] over a weighted sample at given beta."""
    r = sample.y - sample.X @ beta
    wpsi = sample.w * psi(loss, r)
    wdpsi = sample.w * psi_prime(loss, r)
    e_psi_x = wpsi @ sample.X
    e_dpsi_xx = (sample.X * wdpsi[:, None]).T @ sample.X
    return e_psi_x, e_dpsi_xx


def if_penalized_m(model: RegressionModel, loss: LossSpec, penalty: PenaltySpec,
                   fr: FunctionalResult, x0, y0, cfg: MCConfig | None = None,
                   sample: WeightedSample | None = None):
    """Influence function of a penalized M-functional with a smooth penalty.

    Expectations are Monte Carlo; ``fr`` holds the functional value the
    formula is evaluated at.  The l1 penalty is not twice differentiable
    and is rejected here; its functionals go through the active-set route
    (:func:`if_m_l1`) or the dedicated lasso formulas.
    """
    if penalty.kind == "l1":
        raise ValueError("l1 penalty is not twice differentiable; "
                         "use if_m_l1 or the lasso influence functions")
    if sample is None:
        sample = WeightedSample.from_model(model, cfg or MCConfig())
    beta = fr.beta
    e_psi_x, e_dpsi_xx = _psi_moments(sample, loss, beta)
    M = e_dpsi_xx + 2.0 * penalty.lam * np.diag(np.atleast_1d(j_second(penalty, beta)))
    _check_condition(M)
    X0, Y0, scalar = _points(x0, y0, model.p)
    r0 = Y0 - X0 @ beta
    V = np.asarray(psi(loss, r0))[:, None] * X0 - e_psi_x[None, :]
    out = np.linalg.solve(M, V.T).T
    return _ret(out, scalar, model.p)


def if_m_l1(model: RegressionModel, loss: LossSpec, lam: float,
            fr: FunctionalResult, x0, y0, cfg: MCConfig | None = None,
            sample: WeightedSample | None = None):
    """Influence function of an l1-penalized M-functional (Huber/biweight).

    Coordinates shrunk to zero have influence exactly zero; the active
    block follows the resolvent formula with the l1 curvature term absent.
    """
    if sample is None:
        sample = WeightedSample.from_model(model, cfg or MCConfig())
    beta = fr.beta
    active = np.abs(beta) > ACTIVE_TOL
    X0, Y0, scalar = _points(x0, y0, model.p)
    out = np.zeros((X0.shape[0], model.p))
    if np.any(active):
        e_psi_x, e_dpsi_xx = _psi_moments(sample, loss, beta)
        M = e_dpsi_xx[np.ix_(active, active)]
        _check_condition(M)
        r0 = Y0 - X0 @ beta
        V = np.asarray(psi(loss, r0))[:, None] * X0[:, active] - e_psi_x[None, active]
        out[:, active] = np.linalg.solve(M, V.T).T
    return _ret(out, scalar, model.p)


# ---------------------------------------------------------------------------
# exact quadratic-loss forms
# ---------------------------------------------------------------------------

def _quadratic_if_core(G, g, lam, j2_diag, beta, X0, Y0, active=None):
    """(G + lam diag(j2))^-1 (x0 r0 + G beta - g) on the active block."""
    p = beta.size
    active = np.ones(p, dtype=bool) if active is None else active
    out = np.zeros((X0.shape[0], p))
    if not np.any(active):
        return out
    M = G[np.ix_(active, active)] + lam * np.diag(np.atleast_1d(j2_diag)[active])
    _check_condition(M)
    r0 = Y0 - X0 @ beta
    drift = (G @ beta - g)[active]
    V = X0[:, active] * r0[:, None] + drift[None, :]
    out[:, active] = np.linalg.solve(M, V.T).T
    return out


def if_ridge(model: RegressionModel, lam: float, x0, y0,
             fr: FunctionalResult | None = None):
    """Influence function of the ridge functional (exact).

    ``(E[xx'] + 2 lam I)^-1 ((y0 - x0' beta_R) x0 + E[xx'] (beta_R - beta0))``;
    unbounded in both arguments since nothing clips the residual term.
    """
    if fr is None:
        beta = np.linalg.solve(model.xx + 2.0 * lam * np.eye(model.p), model.xy)
    else:
        beta = fr.beta
    X0, Y0, scalar = _points(x0, y0, model.p)
    out = _quadratic_if_core(model.xx, model.xy, lam, np.full(model.p, 2.0),
                             beta, X0, Y0)
    return _ret(out, scalar, model.p)


def if_lasso_simple(model: RegressionModel, lam: float, x0, y0):
    """Influence function of the lasso functional for simple regression.

    Identically zero while ``-lam/E[x^2] <= beta0 < lam/E[x^2]`` (the printed
    half-open interval; at the right boundary the formula switches branches
    even though the functional itself is still zero), otherwise
    ``x0 (y0 - beta0 x0)/E[x^2] - lam (E[x^2] - x0^2)/E[x^2]^2 sign(beta0)``.
    """
    if model.p != 1:
        raise ValueError("if_lasso_simple requires p = 1")
    ex2 = model.x_var[0]
    b0 = model.beta0[0]
    X0, Y0, scalar = _points(x0, y0, 1)
    x = X0[:, 0]
    if -lam / ex2 <= b0 < lam / ex2:
        out = np.zeros((x.size, 1))
        return _ret(out, scalar, 1)
    vals = x * (Y0 - b0 * x) / ex2 \
        - lam * (ex2 - x * x) / ex2 ** 2 * np.sign(b0)
    return _ret(vals[:, None], scalar, 1)


def if_lasso_multi(model: RegressionModel, lam: float, x0, y0,
                   fr: FunctionalResult | None = None, moments=None):
    """Influence function of the lasso functional in multiple regression.

    Coordinates with coefficient zero have influence exactly zero; the
    active block is the least-squares resolvent of the active design
    evaluated at the lasso value.
    """
    if moments is None:
        moments = GaussianMoments.from_model(model)
    G, g = moments.moments()
    if fr is None:
        beta, _, _ = _cd_solve(G, g, l1_penalty(lam), model.beta0, 1e-12, 10_000)
    else:
        beta = fr.beta
    active = np.abs(beta) > ACTIVE_TOL
    X0, Y0, scalar = _points(x0, y0, model.p)
    out = _quadratic_if_core(G, g, 0.0, np.zeros(model.p), beta, X0, Y0, active)
    return _ret(out, scalar, model.p)


def if_lasso_cd(model: RegressionModel, lam: float, x0, y0,
                prev_if: np.ndarray, prev_beta: np.ndarray, coord: int,
                moments=None) -> float:
    """One coordinate-descent update of the lasso influence recursion.

    Given the influence vector and functional value from the previous
    sweep, returns the influence of coordinate ``coord``: zero when the
    partial-residual score is below lam in magnitude, otherwise the
    simple-regression form corrected for the moving partial residuals.
    """
    if moments is None:
        moments = GaussianMoments.from_model(model)
    G, g = moments.moments()
    p = model.p
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    others = np.arange(p) != coord
    gjj = G[coord, coord]
    score = g[coord] - G[coord, others] @ prev_beta[others]
    if abs(score) < lam:
        return 0.0
    cross = G[coord, others] @ prev_if[others]
    term1 = (-cross + (float(y0) - x0[others] @ prev_beta[others]) * x0[coord]) / gjj
    term2 = -score * x0[coord] ** 2 / gjj ** 2
    term3 = -lam * (gjj - x0[coord] ** 2) / gjj ** 2 * np.sign(score)
    return float(term1 + term2 + term3)


def if_lasso_cd_solve(model: RegressionModel, lam: float, x0, y0,
                      cfg: MCConfig | None = None, moments=None,
                      tol: float = 1e-10, max_sweeps: int = 500) -> np.ndarray:
    """Fixed point of the coordinate-descent influence recursion.

    Sweeps the per-coordinate update until the influence vector is stable;
    the fixed point coincides with the multiple-regression closed form.
    """
    if moments is None:
        moments = GaussianMoments.from_model(model) if cfg is None \
            else WeightedSample.from_model(model, cfg)
    G, g = moments.moments()
    beta, _, ok = _cd_solve(G, g, l1_penalty(lam), model.beta0, 1e-12, 10_000)
    if not ok:
        raise NumericalError("lasso coordinate descent did not converge")
    p = model.p
    iv = np.zeros(p)
    for _ in range(max_sweeps):
        delta = 0.0
        for k in range(p):
            new = if_lasso_cd(model, lam, x0, y0, iv, beta, k, moments=moments)
            delta = max(delta, abs(new - iv[k]))
            iv[k] = new
        if delta < tol:
            return iv
    raise NumericalError(
        f"influence recursion did not stabilize within {max_sweeps} sweeps")


@dataclass(frozen=True)
class TanhLimitStep:
    K: float
    beta: np.ndarray
    values: np.ndarray
    deviation: float


def if_lasso_tanh_limit(model: RegressionModel, lam: float, k_sequence,
                        x0, y0, cfg: MCConfig | None = None) -> list[TanhLimitStep]:
    """Influence of the smooth tanh-penalized functional along increasing K.

    For each K the penalty ``z tanh(K z)`` is twice differentiable, so the
    resolvent formula applies at the smooth functional's own minimizer.
    The reported deviation is the max distance to the multiple-regression
    lasso influence over the supplied points; it shrinks as K grows since
    the inactive block of the resolvent scales like 1/(2 lam K).
    """
    moments = GaussianMoments.from_model(model) if cfg is None \
        else WeightedSample.from_model(model, cfg)
    G, g = moments.moments()
    X0, Y0, _ = _points(x0, y0, model.p)
    ref = if_lasso_multi(model, lam, X0, Y0, moments=moments)
    ref = np.atleast_2d(ref) if model.p > 1 else np.asarray(ref).reshape(-1, 1)
    steps = []
    for K in k_sequence:
        pen = tanh_penalty(lam, float(K))
        fr = coord_descent(model, quadratic_loss(), pen, moments=moments,
                           tol=1e-12, max_iter=5000)
        j2 = np.atleast_1d(j_second(pen, fr.beta))
        vals = _quadratic_if_core(G, g, lam, j2, fr.beta, X0, Y0)
        dev = float(np.max(np.abs(vals - ref)))
        steps.append(TanhLimitStep(float(K), fr.beta, vals, dev))
    return steps


# ---------------------------------------------------------------------------
# sparse LTS influence function (normal simple regression)
# ---------------------------------------------------------------------------

def if_sparse_lts(model: RegressionModel, params: SparseLTSParams, x0, y0,
                  fr: FunctionalResult | None = None):
    """Influence function of the sparse LTS functional for p = 1.

    Identically zero when the functional is shrunk to zero, i.e. for
    ``-thr < beta0 <= thr`` with ``thr = alpha lam / (2 c1 E[x^2])``.
    Otherwise the trimming indicator keeps the residual term bounded for
    bad leverage points while good leverage points (large x0 on the model
    line) retain unbounded influence.
    """
    if model.p != 1:
        raise ValueError("if_sparse_lts requires p = 1")
    ex2 = model.x_var[0]
    b0 = model.beta0[0]
    thr = splts_threshold(params, ex2)
    X0, Y0, scalar = _points(x0, y0, 1)
    x = X0[:, 0]
    if -thr < b0 <= thr:
        return _ret(np.zeros((x.size, 1)), scalar, 1)
    b = sparse_lts_simple(model, params).beta[0] if fr is None else fr.beta[0]
    qa, c1 = trim_constants(params.alpha)
    sig = np.sqrt(model.sigma ** 2 + (b0 - b) ** 2 * ex2)
    resid0 = Y0 - x * b
    inside = (np.abs(resid0 / sig) <= qa).astype(float)
    vals = (b - b0) \
        - qa ** 2 * (inside - params.alpha) * (b0 - b) / c1 \
        + x * resid0 * inside / (c1 * ex2)
    return _ret(vals[:, None], scalar, 1)


# ---------------------------------------------------------------------------
# dispatch over named functional specs
# ---------------------------------------------------------------------------

def influence_at(spec: FunctionalSpec, model: RegressionModel, x0, y0,
                 cfg: MCConfig | None = None, fr: FunctionalResult | None = None,
                 sample: WeightedSample | None = None):
    """Influence function of a named functional at contamination points.

    Quadratic-loss specs and sparse LTS evaluate exactly; Huber/biweight
    specs use Monte Carlo expectations (pass ``sample`` to share draws
    across calls).
    """
    name = spec.name
    p = model.p
    X0, Y0, scalar = _points(x0, y0, p)
    if name == "ls":
        out = _quadratic_if_core(model.xx, model.xy, 0.0, np.zeros(p),
                                 model.beta0, X0, Y0)
        return _ret(out, scalar, p)
    if name == "ridge":
        beta = population_value(spec, model).beta
        out = _quadratic_if_core(model.xx, model.xy, spec.lam, np.full(p, 2.0),
                                 beta, X0, Y0)
        return _ret(out, scalar, p)
    if name == "lasso":
        if p == 1:
            return _ret(np.asarray(if_lasso_simple(model, spec.lam, X0, Y0)
                                   ).reshape(-1, 1), scalar, 1)
        vals = if_lasso_multi(model, spec.lam, X0, Y0, fr=fr)
        return _ret(np.atleast_2d(vals), scalar, p)
    if name == "scad":
        fr = population_value(spec, model) if fr is None else fr
        beta = fr.beta
        active = np.abs(beta) > ACTIVE_TOL
        j2 = np.zeros(p)
        if np.any(active):
            j2[active] = np.atleast_1d(j_second(spec.penalty, beta[active]))
        out = _quadratic_if_core(model.xx, model.xy, spec.lam, j2, beta, X0, Y0,
                                 active)
        return _ret(out, scalar, p)
    if name in MC_SPECS:
        if sample is None:
            sample = WeightedSample.from_model(model, cfg or MCConfig())
        if fr is None:
            fr = irls(model, spec.loss, spec.penalty, cfg=cfg, sample=sample)
        vals = if_m_l1(model, spec.loss, spec.lam, fr, X0, Y0, sample=sample)
        return _ret(np.asarray(vals).reshape(X0.shape[0], -1), scalar, p)
    if name == "splts":
        return _ret(np.asarray(if_sparse_lts(model, spec.lts, X0, Y0, fr=fr)
                               ).reshape(-1, 1), scalar, 1)
    raise ValueError(f"unknown functional spec {name!r}")


def if_surface(spec: FunctionalSpec, model: RegressionModel,
               cfg: MCConfig | None = None, lim: float = 10.0, n: int = 41,
               fr: FunctionalResult | None = None,
               sample: WeightedSample | None = None) -> IFSurface:
    """Influence values over the default square contamination grid (p = 1)."""
    if model.p != 1:
        raise ValueError("influence surfaces are defined for p = 1")
    gx, gy = default_grid(lim, n)
    vals = influence_at(spec, model, gx, gy, cfg=cfg, fr=fr, sample=sample)
    vals = np.asarray(vals, dtype=float)
    if not np.all(np.isfinite(vals)):
        raise NumericalError("influence surface contains non-finite values")
    fid = f"{spec.name} lam={spec.lam:g} beta0={np.array2string(model.beta0)}"
    return IFSurface(gx, gy, vals, fid)


# ---------------------------------------------------------------------------
# finite-contamination oracle
# ---------------------------------------------------------------------------

def _splts_mixture_objective(model: RegressionModel, params: SparseLTSParams,
                             x0: float, y0: float, eps: float):
    """Exact objective of the sparse LTS functional under the eps-mixture.

    The residual law under the mixture is a normal plus one atom, so the
    trimming quantile and the trimmed second moment stay in closed form.
    """
    alpha, lam = params.alpha, params.lam
    ex2 = model.x_var[0]
    b0 = model.beta0[0]
    s2 = model.sigma ** 2
    t_in = float(ndtri(((alpha - eps) / (1.0 - eps) + 1.0) / 2.0)) if eps > 0 \
        else float(ndtri((alpha + 1.0) / 2.0))
    t_out = float(ndtri((min(alpha / (1.0 - eps), 1.0 - 1e-15) + 1.0) / 2.0))

    def f(b):
        b = np.asarray(b, dtype=float)
        sig = np.sqrt(s2 + (b0 - b) ** 2 * ex2)
        rp = y0 - x0 * b
        arp = np.abs(rp)
        q_in = sig * t_in
        q_out = sig * t_out
        # atom below the quantile / above it / pinned at the quantile
        inside = np.where(arp <= q_in, 1.0, np.where(arp > q_out, 0.0, 1.0))
        q = np.where(arp <= q_in, q_in, np.where(arp > q_out, q_out, arp))
        core = (1.0 - eps) * sig ** 2 * trimmed_second_moment(q / sig) \
            + eps * rp * rp * inside
        return core + alpha * lam * np.abs(b)

    return f


def _argmin_scalar(f, center: float, halfwidth: float = 1.0,
                   points: int = 81, refinements: int = 3) -> float:
    lo, hi = center - halfwidth, center + halfwidth
    for _ in range(refinements + 1):
        grid = np.linspace(lo, hi, points)
        vals = f(grid)
        i = int(np.argmin(vals))
        step = grid[1] - grid[0]
        lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, points - 1)]
    res = minimize_scalar(lambda b: float(f(np.array([b]))[0]),
                          bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-13})
    return float(res.x)


def contaminated_functional(spec: FunctionalSpec, model: RegressionModel,
                            x0, y0, eps: float,
                            sample: WeightedSample | None = None,
                            base: np.ndarray | None = None) -> np.ndarray:
    """Functional value under the mixture (1 - eps) H0 + eps delta_(x0, y0).

    Quadratic-loss specs use exact mixture moments; sparse LTS minimizes
    its exact mixture objective; Huber/biweight specs refit by IRLS on the
    contaminated weighted sample (pass the base sample for common random
    numbers and ``base`` as a warm start).
    """
    name = spec.name
    x0v = np.atleast_1d(np.asarray(x0, dtype=float))
    mix = GaussianMoments.from_model(model).contaminate(x0v, y0, eps)
    G, g = mix.moments()
    if name == "ls":
        return np.linalg.solve(G, g)
    if name == "ridge":
        return np.linalg.solve(G + 2.0 * spec.lam * np.eye(model.p), g)
    if name == "lasso":
        start = model.beta0 if base is None else base
        beta, _, ok = _cd_solve(G, g, spec.penalty, start, 1e-13, 20_000)
        if not ok:
            raise NumericalError("contaminated lasso refit did not converge")
        return beta
    if name == "scad":
        if model.p == 1:
            m = G[0, 0]
            return np.array([_scad_closed_form(m, g[0] / m, spec.lam, spec.penalty.a)])
        start = model.beta0 if base is None else base
        beta, _, ok = _cd_solve(G, g, spec.penalty, start, 1e-13, 20_000)
        if not ok:
            raise NumericalError("contaminated SCAD refit did not converge")
        return beta
    if name == "splts":
        if model.p != 1:
            raise ValueError("sparse LTS contamination refits require p = 1")
        f = _splts_mixture_objective(model, spec.lts, float(x0v[0]), float(y0), eps)
        return np.array([_argmin_scalar(f, float(model.beta0[0]))])
    if name in MC_SPECS:
        if sample is None:
            raise ValueError("Huber/biweight contamination refits need the base sample")
        smp = sample.contaminate(x0v, y0, eps) if eps > 0 else sample
        start = model.beta0 if base is None else base
        beta, _, ok = _irls_solve(smp, spec.loss, spec.penalty, start,
                                  tol=1e-11, max_iter=500)
        if not ok:
            raise NumericalError("contaminated IRLS refit did not converge")
        return beta
    raise ValueError(f"unknown functional spec {name!r}")


def _richardson(s_big, s_small, e_big: float, e_small: float):
    return s_small + (s_small - s_big) * e_small / (e_big - e_small)


def finite_eps_slope(spec: FunctionalSpec, model: RegressionModel, x0, y0,
                     cfg: MCConfig | None = None,
                     eps_pair: tuple[float, float] = (1e-2, 1e-3),
                     sample: WeightedSample | None = None,
                     n_batches: int = 4):
    """Contamination slope (beta(H_eps) - beta(H0)) / eps extrapolated to 0.

    Uses the two supplied contamination levels with common random numbers
    and Richardson extrapolation, which cancels the first-order eps error.
    Returns ``(slope, stderr)``; the standard error is a batch estimate for
    the Monte Carlo specs and exactly zero for the analytic ones.
    """
    e_big, e_small = max(eps_pair), min(eps_pair)
    p = model.p

    if spec.name in MC_SPECS:
        if sample is None:
            sample = WeightedSample.from_model(model, cfg or MCConfig())

        def slope_on(smp):
            base = contaminated_functional(spec, model, x0, y0, 0.0, sample=smp)
            sb = (contaminated_functional(spec, model, x0, y0, e_big,
                                          sample=smp, base=base) - base) / e_big
            ss = (contaminated_functional(spec, model, x0, y0, e_small,
                                          sample=smp, base=base) - base) / e_small
            return _richardson(sb, ss, e_big, e_small)

        slope = slope_on(sample)
        stderr = np.zeros(p)
        if n_batches and n_batches > 1:
            parts = np.array([slope_on(b) for b in sample.batches(n_batches)])
            stderr = parts.std(axis=0, ddof=1) / np.sqrt(n_batches)
        return slope, stderr

    base = contaminated_functional(spec, model, x0, y0, 0.0)
    sb = (contaminated_functional(spec, model, x0, y0, e_big, base=base) - base) / e_big
    ss = (contaminated_functional(spec, model, x0, y0, e_small, base=base) - base) / e_small
    return _richardson(sb, ss, e_big, e_small), np.zeros(p)

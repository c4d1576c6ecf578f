"""Population regression model, seeded sampling, and Monte Carlo expectations.

The model is ``y = x' beta0 + e`` with mutually independent centered normal
predictor coordinates and an independent centered normal error.  Everything
downstream (population solvers, influence computations, variance integrals)
consumes either the exact second moments of this model or seeded Monte Carlo
draws from it.

Draws are produced in fixed-size chunks, each chunk from its own substream
keyed by ``(seed, chunk_index)``.  Results therefore do not depend on how the
chunks are distributed over workers, and equal ``(seed, n_draws)`` always
yield bit-identical sequences.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .exceptions import NumericalError

CHUNK_SIZE = 1 << 14


def substream(seed: int, index: int) -> np.random.Generator:
    """Independent generator for substream ``index`` of a master seed."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def derive_seed(seed: int, tag: int) -> int:
    """Derive a 64-bit seed for an independent task keyed by (seed, tag)."""
    ss = np.random.SeedSequence(seed, spawn_key=(tag,))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class MCConfig:
    """Size and seed of a Monte Carlo draw sequence.

    Identical (seed, n_draws) pairs produce bit-identical draws.
    """

    n_draws: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if self.n_draws < 1:
            raise ValueError(f"n_draws must be >= 1, got {self.n_draws}")


@dataclass(frozen=True)
class RegressionModel:
    """Linear model y = x' beta0 + e at the population level.

    Parameters
    ----------
    beta0 : array_like
        True coefficient vector, length p >= 1.
    sigma : float
        Standard deviation of the error term, > 0.
    x_var : array_like, optional
        Per-coordinate predictor variances (default all ones).  Predictor
        coordinates are independent centered normals; the error is an
        independent centered normal.  Only the normal family is supported;
        these two fields are the distribution spec and the extension point
        for other families.
    """

    beta0: np.ndarray
    sigma: float = 1.0
    x_var: np.ndarray | None = None

    def __post_init__(self):
        beta0 = np.atleast_1d(np.asarray(self.beta0, dtype=float))
        if beta0.ndim != 1 or beta0.size < 1:
            raise ValueError("beta0 must be a vector of length >= 1")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        x_var = self.x_var
        x_var = np.ones_like(beta0) if x_var is None else np.atleast_1d(
            np.asarray(x_var, dtype=float))
        if x_var.shape != beta0.shape:
            raise ValueError("x_var must match beta0 in length")
        if not np.all(x_var > 0):
            raise ValueError("predictor variances must be > 0")
        object.__setattr__(self, "beta0", beta0)
        object.__setattr__(self, "x_var", x_var)

    @property
    def p(self) -> int:
        return self.beta0.size

    @property
    def xx(self) -> np.ndarray:
        """Exact predictor second-moment matrix E[x x'] (diagonal)."""
        return np.diag(self.x_var)

    @property
    def xy(self) -> np.ndarray:
        """Exact cross moment E[x y] = E[x x'] beta0."""
        return self.x_var * self.beta0


@dataclass(frozen=True)
class Dataset:
    """Design matrix and response for sample-level fitting."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        if X.shape[0] != y.size:
            raise ValueError("X and y disagree on the number of rows")
        if y.size < 1:
            raise ValueError("dataset must contain at least one row")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("dataset contains non-finite entries")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def append(self, x0, y0) -> "Dataset":
        """Dataset with one extra observation row."""
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        return Dataset(np.vstack([self.X, x0[None, :]]), np.append(self.y, float(y0)))


def sample(model: RegressionModel, n: int, seed: int) -> Dataset:
    """Draw ``n`` i.i.d. observations from the model.

    Deterministic for fixed seed; calling twice with the same arguments
    returns identical datasets.
    """
    if n < 1:
        raise ValueError(f"sample size must be >= 1, got {n}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    X = rng.standard_normal((n, model.p)) * np.sqrt(model.x_var)
    e = rng.standard_normal(n) * model.sigma
    return Dataset(X, X @ model.beta0 + e)


def _draw_chunk(model: RegressionModel, seed: int, index: int, m: int):
    rng = substream(seed, index)
    X = rng.standard_normal((m, model.p)) * np.sqrt(model.x_var)
    e = rng.standard_normal(m) * model.sigma
    return X, X @ model.beta0 + e


def draws(model: RegressionModel, cfg: MCConfig) -> tuple[np.ndarray, np.ndarray]:
    """All Monte Carlo draws for ``cfg`` as dense arrays (X, y)."""
    n = cfg.n_draws
    xs, ys = [], []
    for i, start in enumerate(range(0, n, CHUNK_SIZE)):
        X, y = _draw_chunk(model, cfg.seed, i, min(CHUNK_SIZE, n - start))
        xs.append(X)
        ys.append(y)
    return np.concatenate(xs, axis=0), np.concatenate(ys)


class Expectation(NamedTuple):
    value: float | np.ndarray
    stderr: float | np.ndarray
    n_draws: int


def expect(model: RegressionModel, integrand: Callable, cfg: MCConfig,
           threads: int = 1) -> Expectation:
    """Monte Carlo expectation of ``integrand(x, y)`` under the model.

    Parameters
    ----------
    integrand : callable
        Vectorized map taking ``(X, y)`` with shapes (m, p) and (m,) and
        returning per-draw values of shape (m,) or (m, k).
    cfg : MCConfig
        Draw count and seed.  Equal configs give bit-identical results.
    threads : int
        Chunks may be evaluated concurrently; the reduction happens in
        chunk order, so the result does not depend on ``threads``.

    Returns
    -------
    Expectation
        Sample mean, its standard error, and the number of draws.

    Raises
    ------
    NumericalError
        If the integrand produces a non-finite value; the message names
        the index of the first offending draw.
    """
    n = cfg.n_draws
    tasks = [(i, start, min(CHUNK_SIZE, n - start))
             for i, start in enumerate(range(0, n, CHUNK_SIZE))]

    def eval_chunk(task):
        i, start, m = task
        X, y = _draw_chunk(model, cfg.seed, i, m)
        vals = np.asarray(integrand(X, y), dtype=float)
        if vals.shape[0] != m:
            raise ValueError("integrand must return one value per draw")
        if not np.all(np.isfinite(vals)):
            bad = np.argwhere(~np.isfinite(vals))[0][0]
            raise NumericalError(
                f"non-finite integrand value at draw index {start + int(bad)}")
        return vals.sum(axis=0), (vals * vals).sum(axis=0)

    if threads > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(eval_chunk, tasks))
    else:
        parts = [eval_chunk(t) for t in tasks]

    total = sum(p[0] for p in parts)
    total_sq = sum(p[1] for p in parts)
    mean = total / n
    var = np.maximum(total_sq / n - mean * mean, 0.0)
    stderr = np.sqrt(var / n)
    if np.ndim(mean) == 0:
        return Expectation(float(mean), float(stderr), n)
    return Expectation(mean, stderr, n)


@dataclass(frozen=True)
class WeightedSample:
    """Weighted point set standing in for a distribution in expectations.

    This is the common-random-numbers workhorse: a population solve draws
    one sample and reuses it for every candidate coefficient vector, so
    comparisons between solves are free of independent Monte Carlo jitter.
    Contamination mixes in a point mass by reweighting the base rows.
    """

    X: np.ndarray
    y: np.ndarray
    w: np.ndarray

    @classmethod
    def from_model(cls, model: RegressionModel, cfg: MCConfig) -> "WeightedSample":
        X, y = draws(model, cfg)
        return cls(X, y, np.full(y.size, 1.0 / y.size))

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def mean(self, values: np.ndarray):
        """Weighted mean over rows; values of shape (m,) or (m, k)."""
        return self.w @ values

    def moments(self) -> tuple[np.ndarray, np.ndarray]:
        """Second-moment matrix E[x x'] and cross moment E[x y]."""
        G = (self.X * self.w[:, None]).T @ self.X
        g = self.X.T @ (self.w * self.y)
        return G, g

    def contaminate(self, x0, y0, eps: float) -> "WeightedSample":
        """Mixture (1 - eps) * self + eps * point mass at (x0, y0)."""
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        X = np.vstack([self.X, x0[None, :]])
        y = np.append(self.y, float(y0))
        w = np.append(self.w * (1.0 - eps), eps)
        return WeightedSample(X, y, w)

    def batches(self, k: int) -> list["WeightedSample"]:
        """Contiguous row blocks, each renormalized to total weight one."""
        out = []
        for idx in np.array_split(np.arange(self.y.size), k):
            w = self.w[idx]
            out.append(WeightedSample(self.X[idx], self.y[idx], w / w.sum()))
        return out


@dataclass(frozen=True)
class GaussianMoments:
    """Exact population moments E[x x'] and E[x y], possibly contaminated.

    Under a point-mass mixture (1 - eps) H0 + eps * delta_(x0, y0) both
    moments stay available in closed form, which lets the quadratic-loss
    solvers run without any Monte Carlo error.
    """

    xx: np.ndarray
    xy: np.ndarray

    @classmethod
    def from_model(cls, model: RegressionModel) -> "GaussianMoments":
        return cls(model.xx, model.xy)

    def contaminate(self, x0, y0, eps: float) -> "GaussianMoments":
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        xx = (1.0 - eps) * self.xx + eps * np.outer(x0, x0)
        xy = (1.0 - eps) * self.xy + eps * x0 * float(y0)
        return GaussianMoments(xx, xy)

    def moments(self) -> tuple[np.ndarray, np.ndarray]:
        return self.xx, self.xy

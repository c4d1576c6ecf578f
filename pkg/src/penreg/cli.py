"""Config-driven experiment runner.

Usage::

    penreg run CONFIG [--out DIR] [--threads N] [--no-plot]
    penreg verify CONFIG [--out DIR] [--threads N]

Configs are INI files with strict parsing (unknown sections or keys are
rejected).  Every experiment writes one CSV per curve or surface with a
fixed header, an optional PNG rendering next to each CSV, and a run
manifest recording the seed, sizes and versions.  All randomness derives
from the single config seed through named substreams, so re-running a
config reproduces every CSV bit for bit.

Exit codes: 0 success, 1 numerical failure (or failed verification),
2 configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import asv, mse, mse_hat, sensitivity_curve
from .estimators import fit
from .exceptions import ConfigError, NumericalError
from .functionals import (SPEC_NAMES, FunctionalSpec, OracleGrid, kkt_residuals,
                          make_spec, oracle_minimize, population_value)
from .influence import (finite_eps_slope, if_lasso_cd_solve, if_lasso_multi,
                        if_lasso_tanh_limit, if_surface, influence_at)
from .model import (MCConfig, RegressionModel, WeightedSample, derive_seed,
                    sample)
from . import plots

EXPERIMENTS = ("bias_curve", "if_surface", "sc_surface", "asv_curve",
               "mse_curve", "mse_convergence", "verify")

_SCHEMA = {
    "experiment": {"kind", "seed", "n_draws", "output"},
    "model": {"beta0", "sigma", "x_var"},
    "functionals": {"names", "lambda", "a", "alpha", "k_huber", "k_biweight"},
    "grid": {"beta0", "x0", "y0", "lambda", "n", "K"},
    "sample": {"n", "R"},
}


@dataclass
class RunPlan:
    kind: str
    seed: int
    n_draws: int
    out_dir: Path
    model: RegressionModel
    specs: list[FunctionalSpec]
    spec_params: dict
    grids: dict
    sample_n: int | None = None
    replications: int | None = None
    threads: int = 1
    plot: bool = True
    config_path: str = ""


def _parse_floats(text: str) -> np.ndarray:
    text = text.strip()
    try:
        if ":" in text:
            lo, hi, count = text.split(":")
            count = int(count)
            if count < 1:
                raise ValueError
            return np.linspace(float(lo), float(hi), count)
        return np.array([float(v) for v in text.split(",") if v.strip() != ""])
    except ValueError as exc:
        raise ConfigError(f"cannot parse grid {text!r}; use lo:hi:count or "
                          "a comma-separated list") from exc


def _get(cp, section, key, cast, default=None, required=False):
    if not cp.has_option(section, key):
        if required:
            raise ConfigError(f"missing required key {key!r} in [{section}]")
        return default
    raw = cp.get(section, key)
    try:
        return cast(raw)
    except (ValueError, ConfigError) as exc:
        raise ConfigError(f"bad value for {key!r} in [{section}]: {raw!r}") from exc


def load_config(path: str, out_override=None, threads: int = 1,
                plot: bool = True) -> RunPlan:
    """Parse and validate an experiment config file."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keep option names case-sensitive (e.g. R)
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from exc

    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key in cp.options(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")

    kind = _get(cp, "experiment", "kind", str, required=True)
    if kind not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment kind {kind!r}; "
                          f"choose from {', '.join(EXPERIMENTS)}")
    seed = _get(cp, "experiment", "seed", int, default=0)
    n_draws = _get(cp, "experiment", "n_draws", int, default=100_000)
    if n_draws < 1:
        raise ConfigError("n_draws must be >= 1")

    beta0 = _get(cp, "model", "beta0", _parse_floats, default=np.array([1.5]))
    sigma = _get(cp, "model", "sigma", float, default=1.0)
    x_var = _get(cp, "model", "x_var", _parse_floats, default=None)
    try:
        model = RegressionModel(beta0, sigma, x_var)
    except ValueError as exc:
        raise ConfigError(f"invalid model: {exc}") from exc

    names_raw = _get(cp, "functionals", "names", str, default="ls")
    names = [s.strip() for s in names_raw.split(",") if s.strip()]
    for name in names:
        if name not in SPEC_NAMES:
            raise ConfigError(f"unknown functional {name!r}; "
                              f"choose from {', '.join(SPEC_NAMES)}")
    spec_params = dict(
        lam=_get(cp, "functionals", "lambda", float, default=0.1),
        a=_get(cp, "functionals", "a", float, default=3.7),
        alpha=_get(cp, "functionals", "alpha", float, default=0.75),
        huber_k=_get(cp, "functionals", "k_huber", float, default=1.345),
        biweight_k=_get(cp, "functionals", "k_biweight", float, default=4.685),
    )
    try:
        specs = [make_spec(n, **spec_params) for n in names]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    grids = {}
    for key in _SCHEMA["grid"]:
        val = _get(cp, "grid", key, _parse_floats, default=None)
        if val is not None:
            if val.size == 0:
                raise ConfigError(f"grid {key!r} is empty")
            grids[key] = val

    sample_n = _get(cp, "sample", "n", int, default=None)
    replications = _get(cp, "sample", "R", int, default=None)

    required_grids = {"bias_curve": ["beta0"], "asv_curve": ["lambda"],
                      "mse_curve": ["n"], "mse_convergence": ["n"]}
    for key in required_grids.get(kind, []):
        if key not in grids:
            raise ConfigError(f"experiment {kind} requires grid key {key!r}")
    if kind == "sc_surface" and sample_n is None:
        raise ConfigError("experiment sc_surface requires [sample] n")
    if kind == "mse_convergence" and replications is None:
        raise ConfigError("experiment mse_convergence requires [sample] R")
    if kind in ("bias_curve", "if_surface", "sc_surface", "asv_curve",
                "mse_curve", "mse_convergence") and model.p != 1:
        raise ConfigError(f"experiment {kind} is defined for p = 1 models")

    out = out_override or _get(cp, "experiment", "output", str, default="penreg_out")
    return RunPlan(kind, seed, n_draws, Path(out), model, specs, spec_params,
                   grids, sample_n, replications, threads, plot, str(path))


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

class _Outputs:
    """Tracks written artifact files so failures can remove partial runs."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.files: list[Path] = []
        out_dir.mkdir(parents=True, exist_ok=True)

    def write_csv(self, name: str, header, rows) -> Path:
        path = self.out_dir / name
        tmp = path.with_suffix(path.suffix + ".tmp")
        with open(tmp, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
        tmp.replace(path)
        self.files.append(path)
        return path

    def register(self, path: Path):
        self.files.append(path)

    def cleanup(self):
        for path in self.files:
            try:
                path.unlink()
            except OSError:
                pass


def _fmt(v) -> str:
    return repr(float(v))


def _write_manifest(out: _Outputs, plan: RunPlan, wall: float, extra=None):
    path = out.out_dir / "manifest.txt"
    lines = {
        "experiment": plan.kind,
        "config": plan.config_path,
        "seed": plan.seed,
        "n_draws": plan.n_draws,
        "beta0": ",".join(_fmt(v) for v in plan.model.beta0),
        "sigma": _fmt(plan.model.sigma),
        "functionals": ",".join(s.name for s in plan.specs),
        "lambda": _fmt(plan.spec_params["lam"]),
        "penreg_version": __version__,
        "numpy_version": np.__version__,
        "python_version": sys.version.split()[0],
        "wall_time_s": f"{wall:.3f}",
        "outputs": ";".join(p.name for p in out.files),
    }
    if extra:
        lines.update(extra)
    tmp = path.with_suffix(".tmp")
    with open(tmp, "w") as fh:
        for key, value in lines.items():
            fh.write(f"{key} = {value}\n")
    tmp.replace(path)
    out.register(path)


def _maybe_plot(out: _Outputs, plan: RunPlan, csv_path: Path, kind: str, **kw):
    if not plan.plot:
        return
    png = csv_path.with_suffix(".png")
    if kind == "surface":
        plots.save_surface(png, kw["x0"], kw["y0"], kw["values"], kw.get("title", ""))
    else:
        plots.save_curve(png, kw["param"], kw["value"], kw.get("stderr"),
                         kw.get("xlabel", ""), kw.get("ylabel", ""),
                         kw.get("title", ""))
    out.register(png)


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def _spec_cfg(plan: RunPlan, index: int) -> MCConfig:
    return MCConfig(plan.n_draws, derive_seed(plan.seed, index))


def _run_bias_curve(plan: RunPlan, out: _Outputs):
    grid = plan.grids["beta0"]
    family = {}
    for i, spec in enumerate(plan.specs):
        cfg = _spec_cfg(plan, i)
        rows = []
        for b0 in grid:
            model = RegressionModel(np.array([b0]), plan.model.sigma, plan.model.x_var)
            fr = population_value(spec, model, cfg=cfg)
            err = 0.0
            if fr.mc is not None and spec.name in ("huber_l1", "biweight_l1"):
                err = _irls_bias_stderr(spec, model, cfg)
            rows.append((_fmt(b0), _fmt(fr.bias[0]), _fmt(err)))
        path = out.write_csv(f"bias_curve_{spec.name}.csv",
                             ("param", "value", "stderr"), rows)
        vals = np.array([float(r[1]) for r in rows])
        errs = np.array([float(r[2]) for r in rows])
        family[spec.name] = (grid, vals)
        _maybe_plot(out, plan, path, "curve", param=grid, value=vals, stderr=errs,
                    xlabel="beta0", ylabel="bias", title=f"bias of {spec.name}")
    if plan.plot and len(family) > 1:
        png = out.out_dir / "bias_curve_combined.png"
        plots.save_curve_family(png, family, "beta0", "bias", "bias curves")
        out.register(png)


def _irls_bias_stderr(spec, model, cfg, n_batches: int = 4) -> float:
    smp = WeightedSample.from_model(model, cfg)
    parts = []
    for b in smp.batches(n_batches):
        fr = population_value(spec, model, cfg=cfg, sample=b)
        parts.append(fr.beta[0])
    return float(np.std(parts, ddof=1) / np.sqrt(n_batches))


def _surface_grid(plan: RunPlan):
    x0 = plan.grids.get("x0", np.linspace(-10, 10, 41))
    y0 = plan.grids.get("y0", np.linspace(-10, 10, 41))
    gx, gy = np.meshgrid(x0, y0, indexing="ij")
    return gx.ravel(), gy.ravel()


def _run_if_surface(plan: RunPlan, out: _Outputs):
    gx, gy = _surface_grid(plan)
    for i, spec in enumerate(plan.specs):
        cfg = _spec_cfg(plan, i)
        vals = influence_at(spec, plan.model, gx, gy, cfg=cfg)
        rows = [(_fmt(a), _fmt(b), _fmt(v)) for a, b, v in zip(gx, gy, vals)]
        path = out.write_csv(f"if_surface_{spec.name}.csv",
                             ("x0", "y0", "value"), rows)
        _maybe_plot(out, plan, path, "surface", x0=gx, y0=gy, values=vals,
                    title=f"influence of {spec.name}")


def _run_sc_surface(plan: RunPlan, out: _Outputs):
    gx, gy = _surface_grid(plan)
    base = sample(plan.model, plan.sample_n, derive_seed(plan.seed, 7001))
    for i, spec in enumerate(plan.specs):
        sc = sensitivity_curve(base, spec, gx, gy,
                               seed=derive_seed(plan.seed, 7100 + i),
                               threads=plan.threads)
        rows = [(_fmt(a), _fmt(b), _fmt(v))
                for a, b, v in zip(sc.x0, sc.y0, sc.values)]
        path = out.write_csv(f"sc_surface_{spec.name}.csv",
                             ("x0", "y0", "value"), rows)
        _maybe_plot(out, plan, path, "surface", x0=sc.x0, y0=sc.y0,
                    values=np.nan_to_num(sc.values),
                    title=f"sensitivity curve of {spec.name} (n={plan.sample_n})")


def _run_asv_curve(plan: RunPlan, out: _Outputs):
    lams = plan.grids["lambda"]
    cfg = MCConfig(plan.n_draws, derive_seed(plan.seed, 31))
    family = {}
    for spec in plan.specs:
        rows = []
        for lam in lams:
            spec_l = make_spec(spec.name, **{**plan.spec_params, "lam": float(lam)})
            rep = asv(plan.model, spec_l, cfg)
            rows.append((_fmt(lam), _fmt(rep.asv), _fmt(rep.mc_stderr)))
        path = out.write_csv(f"asv_curve_{spec.name}.csv",
                             ("param", "value", "stderr"), rows)
        vals = np.array([float(r[1]) for r in rows])
        family[spec.name] = (lams, vals)
        _maybe_plot(out, plan, path, "curve", param=lams, value=vals,
                    stderr=np.array([float(r[2]) for r in rows]),
                    xlabel="lambda", ylabel="asymptotic variance",
                    title=f"asymptotic variance of {spec.name}")
    if plan.plot and len(family) > 1:
        png = out.out_dir / "asv_curve_combined.png"
        plots.save_curve_family(png, family, "lambda", "asymptotic variance",
                                "asymptotic variance curves")
        out.register(png)


def _run_mse_curve(plan: RunPlan, out: _Outputs):
    ns = plan.grids["n"]
    cfg = MCConfig(plan.n_draws, derive_seed(plan.seed, 41))
    for spec in plan.specs:
        rep = asv(plan.model, spec, cfg)
        fr = population_value(spec, plan.model,
                              cfg=MCConfig(plan.n_draws, derive_seed(plan.seed, 42)))
        rows = []
        for n in ns:
            val = rep.asv / n + float(fr.bias[0]) ** 2
            rows.append((_fmt(n), _fmt(val), _fmt(rep.mc_stderr / n)))
        path = out.write_csv(f"mse_curve_{spec.name}.csv",
                             ("param", "value", "stderr"), rows)
        _maybe_plot(out, plan, path, "curve", param=ns,
                    value=np.array([float(r[1]) for r in rows]),
                    stderr=np.array([float(r[2]) for r in rows]),
                    xlabel="n", ylabel="mse", title=f"mse of {spec.name}")


def _run_mse_convergence(plan: RunPlan, out: _Outputs):
    ns = plan.grids["n"]
    cfg = MCConfig(plan.n_draws, derive_seed(plan.seed, 51))
    for i, spec in enumerate(plan.specs):
        pop_rows, emp_rows = [], []
        for k, n in enumerate(ns):
            n = int(n)
            pop = n * mse(plan.model, spec, n, cfg)
            emp = n * mse_hat(plan.model, spec, n, plan.replications,
                              seed=derive_seed(plan.seed, 6000 + 100 * i + k))
            pop_rows.append((_fmt(n), _fmt(pop), _fmt(0.0)))
            emp_rows.append((_fmt(n), _fmt(emp), _fmt(0.0)))
        ppath = out.write_csv(f"mse_convergence_{spec.name}_population.csv",
                              ("param", "value", "stderr"), pop_rows)
        epath = out.write_csv(f"mse_convergence_{spec.name}_empirical.csv",
                              ("param", "value", "stderr"), emp_rows)
        if plan.plot:
            png = out.out_dir / f"mse_convergence_{spec.name}.png"
            plots.save_curve_family(
                png,
                {"population": (ns, np.array([float(r[1]) for r in pop_rows])),
                 "empirical": (ns, np.array([float(r[1]) for r in emp_rows]))},
                "n", "n * mse", f"mse convergence of {spec.name}")
            out.register(png)
        _maybe_plot(out, plan, ppath, "curve", param=ns,
                    value=np.array([float(r[1]) for r in pop_rows]),
                    xlabel="n", ylabel="n * mse",
                    title=f"population mse of {spec.name}")
        _maybe_plot(out, plan, epath, "curve", param=ns,
                    value=np.array([float(r[1]) for r in emp_rows]),
                    xlabel="n", ylabel="n * mse_hat",
                    title=f"empirical mse of {spec.name}")


# ---------------------------------------------------------------------------
# verification battery
# ---------------------------------------------------------------------------

def _run_verify(plan: RunPlan, out: _Outputs) -> bool:
    checks = []

    def record(name, ok, detail):
        checks.append((name, ok, detail))
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")

    lam = plan.spec_params["lam"]
    sigma = plan.model.sigma
    cfg = MCConfig(plan.n_draws, derive_seed(plan.seed, 61))

    # closed forms against the brute-force oracle
    for name in ("lasso", "scad", "splts"):
        spec = make_spec(name, **plan.spec_params)
        worst = 0.0
        ok = True
        for b0 in (-1.5, 0.05, 1.5):
            model = RegressionModel(np.array([b0]), sigma)
            closed = population_value(spec, model).beta[0]
            target = spec.lts if name == "splts" else spec.penalty
            orc = oracle_minimize(model, spec.loss, target, cfg)
            tol = orc.resolution + 3.0 * float(orc.stderr[0]) + 1e-3
            gap = abs(closed - orc.beta[0])
            worst = max(worst, gap)
            ok = ok and gap <= tol
        record(f"closed_vs_oracle_{name}", ok, f"max gap {worst:.2e}")

    # optimality residuals of population coordinate descent
    model2 = RegressionModel(np.array([1.5, 0.0]), sigma)
    spec_l = make_spec("lasso", **plan.spec_params)
    res, stderr = kkt_residuals(model2, spec_l.penalty, cfg)
    ok = bool(np.all(res <= 5.0 * stderr + 1e-12))
    record("coord_descent_kkt", ok, f"max residual {res.max():.2e}")

    # influence functions against finite-contamination refits
    model1 = RegressionModel(np.array([1.5]), sigma)
    points = [(-3.0, -5.0), (1.0, 2.0), (4.0, -6.0)]
    for name in SPEC_NAMES:
        spec = make_spec(name, **plan.spec_params)
        scfg = MCConfig(plan.n_draws, derive_seed(plan.seed, 62))
        smp = WeightedSample.from_model(model1, scfg) \
            if name in ("huber_l1", "biweight_l1") else None
        worst, ok = 0.0, True
        for x0, y0 in points:
            closed = influence_at(spec, model1, x0, y0, cfg=scfg, sample=smp)
            slope, err = finite_eps_slope(spec, model1, x0, y0, cfg=scfg,
                                          sample=smp)
            gap = abs(float(closed) - float(slope[0]))
            tol = max(0.05 * abs(float(closed)), 5.0 * float(err[0]), 1e-10)
            worst = max(worst, gap)
            ok = ok and gap <= tol
        record(f"if_vs_contamination_{name}", ok, f"max gap {worst:.3e}")

    # smooth-penalty approximation converges to the lasso influence
    model_t = RegressionModel(np.array([1.5, 0.0]), sigma)
    steps = if_lasso_tanh_limit(model_t, lam, (10.0, 100.0, 1000.0),
                                np.array([[2.0, 1.0]]), np.array([1.0]))
    devs = [s.deviation for s in steps]
    ok = all(devs[i + 1] < devs[i] for i in range(len(devs) - 1))
    record("tanh_limit_monotone", ok, f"deviations {['%.3e' % d for d in devs]}")

    # coordinate-wise influence recursion agrees with the closed form
    model3 = RegressionModel(np.array([1.5, 0.8, 0.0]), sigma)
    iv = if_lasso_cd_solve(model3, lam, np.array([1.0, -2.0, 0.5]), 2.0)
    ref = if_lasso_multi(model3, lam, np.array([[1.0, -2.0, 0.5]]), np.array([2.0]))
    gap = float(np.max(np.abs(iv - np.asarray(ref).ravel())))
    record("if_recursion_matches_closed_form", gap <= 1e-8, f"gap {gap:.2e}")

    # asymptotic variance of least squares is one
    rep = asv(model1, make_spec("ls", **plan.spec_params), cfg)
    gap = abs(rep.asv - 1.0)
    record("asv_ls_equals_one", gap <= 3.0 * rep.mc_stderr,
           f"asv {rep.asv:.5f} (stderr {rep.mc_stderr:.1e})")

    # shrunk functionals have exactly zero influence everywhere
    model_z = RegressionModel(np.array([0.1]), sigma)
    surf = if_surface(make_spec("splts", **plan.spec_params), model_z)
    ok = bool(np.all(surf.values == 0.0))
    record("splts_zero_influence", ok, f"max |IF| {np.max(np.abs(surf.values)):.1e}")

    rows = [(name, "pass" if ok else "fail", detail) for name, ok, detail in checks]
    out.write_csv("verify_report.csv", ("check", "status", "detail"), rows)
    return all(ok for _, ok, _ in checks)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

_RUNNERS = {
    "bias_curve": _run_bias_curve,
    "if_surface": _run_if_surface,
    "sc_surface": _run_sc_surface,
    "asv_curve": _run_asv_curve,
    "mse_curve": _run_mse_curve,
    "mse_convergence": _run_mse_convergence,
}


def run_plan(plan: RunPlan) -> int:
    out = _Outputs(plan.out_dir)
    start = time.perf_counter()
    try:
        if plan.kind == "verify":
            passed = _run_verify(plan, out)
            _write_manifest(out, plan, time.perf_counter() - start,
                            {"verify_passed": str(passed).lower()})
            return 0 if passed else 1
        _RUNNERS[plan.kind](plan, out)
        _write_manifest(out, plan, time.perf_counter() - start)
        return 0
    except Exception:
        out.cleanup()
        raise


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="penreg",
        description="penalized regression functionals, influence surfaces, "
                    "and robustness diagnostics")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in ("run", "verify"):
        sp = sub.add_parser(cmd)
        sp.add_argument("config", help="experiment config file (INI)")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--threads", type=int, default=1,
                        help="worker threads for grid refits")
        if cmd == "run":
            sp.add_argument("--no-plot", action="store_true",
                            help="skip PNG rendering next to each CSV")
    args = parser.parse_args(argv)

    try:
        plan = load_config(args.config, out_override=args.out,
                           threads=args.threads,
                           plot=not getattr(args, "no_plot", False))
        if args.command == "verify" and plan.kind != "verify":
            raise ConfigError(
                f"'penreg verify' needs kind = verify, config has {plan.kind!r}")
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2

    try:
        return run_plan(plan)
    except NumericalError as exc:
        print(f"error: numerical: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        print(f"error: numerical: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

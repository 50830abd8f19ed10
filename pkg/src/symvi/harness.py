"""Declarative experiment runner.

An experiment config is a JSON object::

    {"experiment": "table1_row", "seed": 0,
     "target": {"name": "student", ...},
     "family": {"base": "gaussian", "mode": "full_rank", "init": "zero"},
     "optimizer": {...OptimizerConfig fields...},
     "sampler": {...ChainConfig fields..., "n_chains": 4},
     "params": {...experiment specific...}}

``run`` turns it into an :class:`ExperimentResult`; ``emit`` writes
``result.json``, ``trace.jsonl`` and, for the csv format, ``errors.csv`` and
``curve.csv``.
"""

import csv
import io
import json
import time
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np
import scipy

from . import __version__
from . import datasets, diagnostics, families, mcmc, targets
from .elbo import OptimizerConfig, grid_search_1d, optimize

__all__ = [
    "EXPERIMENTS",
    "TABLE1_TARGETS",
    "InvalidConfig",
    "ExperimentFailure",
    "ExperimentConfig",
    "ExperimentResult",
    "build_target",
    "initial_approx",
    "reference_moments",
    "run",
    "emit",
    "load_result",
    "run_checks",
]

EXPERIMENTS = (
    "logistic_symmetry",
    "tail_robust",
    "mixture_1d",
    "skew",
    "multi_student_gamma",
    "scale_recovery",
    "table1_row",
    "convexity_probe",
)
# ordered by increasing symmetry violation
TABLE1_TARGETS = ("student", "GLM", "8schools_nc", "mixture", "8schools", "crescent")
TARGET_NAMES = (
    "mvn", "student", "univariate", "mixture1d", "mixture", "crescent",
    "logistic", "GLM", "8schools", "8schools_nc",
)
FORMATS = ("json", "csv")
WALL_CLOCK_KEY = "wall_clock_seconds"


class InvalidConfig(ValueError):
    pass


class ExperimentFailure(RuntimeError):
    """A numerical failure inside an experiment, tagged with the experiment name."""


# ---------------------------------------------------------------------------
# config


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    target: dict = field(default_factory=dict)
    family: dict = field(default_factory=dict)
    optimizer: dict = field(default_factory=dict)
    sampler: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    seed: int = 0
    output: Optional[str] = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise InvalidConfig(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise InvalidConfig(f"seed must be a non-negative integer, got {self.seed!r}")
        name = self.target.get("name")
        if name is not None and name not in TARGET_NAMES:
            raise InvalidConfig(f"unknown target {name!r}; expected one of {TARGET_NAMES}")
        if self.experiment == "table1_row" and name not in TABLE1_TARGETS:
            raise InvalidConfig(f"table1_row needs target.name in {TABLE1_TARGETS}, got {name!r}")
        if self.experiment in ("scale_recovery", "convexity_probe") and name is None:
            raise InvalidConfig(f"{self.experiment} needs target.name")
        try:
            self.optimizer_config()
            self.chain_config()
        except (TypeError, ValueError) as exc:
            raise InvalidConfig(str(exc)) from exc
        fam = self.family
        if fam.get("base", "gaussian") not in families.BASE_KINDS:
            raise InvalidConfig(f"unknown base {fam.get('base')!r}")
        if fam.get("mode", "full_rank") not in families.MODES:
            raise InvalidConfig(f"unknown mode {fam.get('mode')!r}")
        if fam.get("init", "zero") not in ("zero", "laplace"):
            raise InvalidConfig(f"unknown init {fam.get('init')!r}")
        unknown = set(fam) - {"base", "mode", "df", "init", "scale"}
        if unknown:
            raise InvalidConfig(f"unknown family keys {sorted(unknown)}")
        # correlation recovery needs a spherically symmetric base
        if self.experiment == "multi_student_gamma" and fam.get("base", "gaussian") != "gaussian":
            raise InvalidConfig("multi_student_gamma requires the gaussian base")

    def optimizer_config(self):
        return OptimizerConfig.from_dict({**self.optimizer, "seed": self.seed})

    def chain_config(self):
        raw = {k: v for k, v in self.sampler.items() if k != "n_chains"}
        raw.setdefault("algorithm", "rwm_adaptive")
        return mcmc.ChainConfig.from_dict({**raw, "seed": self.seed + 1})

    @property
    def n_chains(self):
        return int(self.sampler.get("n_chains", 4))

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise InvalidConfig("config must be a JSON object")
        names = {f.name for f in fields(cls)}
        unknown = set(raw) - names
        if unknown:
            raise InvalidConfig(f"unknown config keys {sorted(unknown)}")
        if "experiment" not in raw:
            raise InvalidConfig("config lacks 'experiment'")
        for key in ("target", "family", "optimizer", "sampler", "params"):
            if not isinstance(raw.get(key, {}), dict):
                raise InvalidConfig(f"{key} must be an object")
        return cls(**raw)

    @classmethod
    def load(cls, path):
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"{path}: {exc}") from exc
        return cls.from_dict(raw)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def with_seed(self, seed):
        return ExperimentConfig.from_dict({**self.to_dict(), "seed": seed})


# ---------------------------------------------------------------------------
# result


@dataclass
class ExperimentResult:
    config: dict
    summary: dict
    approximation: Optional[dict] = None
    errors: Optional[diagnostics.ErrorTable] = None
    symmetry: Optional[dict] = None
    curve: list = field(default_factory=list)
    traces: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    def to_dict(self):
        return {
            "config": self.config,
            "summary": self.summary,
            "approximation": self.approximation,
            "errors": None if self.errors is None else self.errors.to_dict(),
            "symmetry": self.symmetry,
            "seeds": self.seeds,
            "versions": {"symvi": __version__, "numpy": np.__version__, "scipy": scipy.__version__},
            WALL_CLOCK_KEY: self.wall_clock,
        }


def _clean(obj):
    """Convert numpy scalars and arrays and map non-finite floats to None for JSON."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if np.isfinite(obj) else None
    return obj


def _csv_text(rows, columns):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({c: "" if row.get(c) is None else row[c] for c in columns})
    return buf.getvalue()


def emit(result: ExperimentResult, out_dir, fmt="json"):
    """Write the result files; returns the list of paths written."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name, text):
        path = out / name
        path.write_text(text)
        written.append(path)

    put("result.json", json.dumps(_clean(result.to_dict()), indent=2) + "\n")
    lines = []
    for label, trace in result.traces.items():
        for i, (e, s) in enumerate(zip(trace.elbo, trace.std_error)):
            lines.append(json.dumps({"run": label, "step": i, "elbo": e, "std_error": s}))
    put("trace.jsonl", "".join(line + "\n" for line in lines))
    if fmt == "csv":
        table = result.errors
        put("errors.csv", table.to_csv() if table is not None else _csv_text([], diagnostics.ERROR_COLUMNS))
        if result.curve:
            columns = list(result.curve[0])
            put("curve.csv", _csv_text(_clean(result.curve), columns))
    return written


def load_result(path):
    """Read ``result.json``; the error table is rebuilt as an :class:`ErrorTable`."""
    raw = json.loads(Path(path).read_text())
    if raw.get("errors") is not None:
        raw["errors"] = diagnostics.ErrorTable.from_dict(raw["errors"])
    return raw


# ---------------------------------------------------------------------------
# building blocks


def build_target(spec):
    """Target from a ``{"name": ..., **params}`` dict."""
    spec = dict(spec)
    name = spec.pop("name", None)
    try:
        if name == "mvn":
            d = int(spec.get("dim", 2))
            return targets.make_mvn(spec.get("mean", np.zeros(d)),
                                    targets.equicorrelation(d, spec.get("rho", 0.5)) * spec.get("variance", 1.0))
        if name == "student":
            d = int(spec.get("dim", 2))
            return targets.make_multi_student_t(spec.get("df", 10.0), spec.get("loc", np.zeros(d)),
                                                targets.equicorrelation(d, spec.get("rho", 0.5)))
        if name == "univariate":
            return targets.make_univariate(spec["kind"], spec.get("loc", 0.0), spec.get("scale", 1.0),
                                           spec.get("df", 10.0), spec.get("alpha", 0.0))
        if name == "mixture1d":
            return targets.make_gaussian_mixture_1d(spec.get("m", 1.0))
        if name == "mixture":
            return targets.make_gaussian_mixture_2d()
        if name == "crescent":
            return targets.make_crescent()
        if name == "logistic":
            data = datasets.synthetic_logistic(int(spec.get("n", 4)), spec.get("data_seed", 20240521))
            return targets.make_logistic_regression(data, spec.get("prior_scale", 0.5))
        if name == "GLM":
            return targets.make_binomial_glm(datasets.load_builtin("binomial_glm"), spec.get("prior_sd", 100.0))
        if name in ("8schools", "8schools_nc"):
            return targets.make_eight_schools(datasets.load_builtin("eight_schools"), centered=name == "8schools")
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidConfig(f"target {name!r}: {exc}") from exc
    raise InvalidConfig(f"unknown target {name!r}")


def _mode_and_scale(target, x0):
    from scipy.optimize import minimize

    res = minimize(lambda z: -target.log_density(z), x0, jac=lambda z: -target.grad_log_density(z),
                   method="BFGS", options={"gtol": 1e-8, "maxiter": 10000})
    x = res.x
    d = target.dim
    h = 1e-5 * (1.0 + np.abs(x))
    hess = np.empty((d, d))
    for i in range(d):
        e = np.zeros(d)
        e[i] = h[i]
        hess[:, i] = (target.grad_log_density(x + e) - target.grad_log_density(x - e)) / (2 * h[i])
    hess = 0.5 * (hess + hess.T)
    try:
        cov = np.linalg.inv(-hess)
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        cov = np.eye(d)
    return x, cov


def initial_approx(target, family):
    """Starting member of the family: standard at the origin, or a Laplace approximation.

    The Laplace start puts ``nu`` at the mode and matches the scale to the
    inverse negative Hessian there (its diagonal for mean-field families).
    """
    base = families.BaseDensity(family.get("base", "gaussian"), target.dim, family.get("df"))
    mode = family.get("mode", "full_rank")
    if family.get("init", "zero") == "zero":
        return families.LocationScaleApprox.standard(base, mode, scale=family.get("scale", 1.0))
    nu, cov = _mode_and_scale(target, np.zeros(target.dim))
    cov = cov / base.variance
    if mode == "full_rank":
        return families.LocationScaleApprox.from_scale_matrix(base, nu, cov, mode)
    return families.LocationScaleApprox.from_factor(base, nu, np.sqrt(np.diag(cov)), mode)


def _noncentered_to_centered(draws):
    out = draws.copy()
    out[:, 2:] = draws[:, :1] + np.exp(draws[:, 1:2]) * draws[:, 2:]
    return out


def reference_moments(target, cfg: ExperimentConfig):
    """Moments and draws standing in for the truth.

    Analytic moments and exact draws are used when available. Otherwise
    baseline chains are run; the centered eight-schools posterior is sampled
    through its non-centered form and mapped back with ``theta = mu + tau eps``.
    Returns ``(moments, draws, info)``.
    """
    chain = cfg.chain_config()
    known = diagnostics.known_moments(target)
    if known is not None and target.sampler is not None:
        draws = target.sample(chain.n_samples, chain.seed)
        return known, draws, {"source": "analytic", "n_draws": len(draws)}
    sample_target = target
    if target.name == "8schools":
        sample_target = build_target({"name": "8schools_nc"})
    out = mcmc.run_chains(sample_target, chain, cfg.n_chains)
    draws = out.draws
    if target.name == "8schools":
        draws = _noncentered_to_centered(draws)
        # pooled draws: chain boundaries add negligible spurious correlation
        ess = mcmc.effective_sample_size(draws)
    else:
        ess = out.ess_per_coordinate
    info = {
        "source": f"mcmc:{chain.algorithm}",
        "n_draws": len(draws),
        "n_chains": cfg.n_chains,
        "acceptance_rate": out.acceptance_rate,
        "min_ess": float(np.min(ess)),
        "step_size": out.step_size,
    }
    return diagnostics.estimate_moments(draws, ess), draws, info


def _grid(params, lo, hi, step=0.01):
    lo, hi, step = params.get("grid_min", lo), params.get("grid_max", hi), params.get("grid_step", step)
    n = int(round((hi - lo) / step))
    return lo + step * np.arange(n + 1)


def _location_template(family, dim=1, default_base="gaussian"):
    base = families.BaseDensity(family.get("base", default_base), dim, family.get("df"))
    return families.LocationScaleApprox.standard(base, "location_only", scale=family.get("scale", 1.0))


# ---------------------------------------------------------------------------
# experiments


def _table1_row(cfg, res):
    target = build_target(cfg.target)
    p_mom, draws, info = reference_moments(target, cfg)
    mu = target.moments.mean if target.moments.mean is not None else p_mom.mean
    sym = diagnostics.epsilon_90(target, draws, mu, cfg.params.get("symmetry_convention", "kernel"))
    q0 = initial_approx(target, cfg.family)
    q, trace = optimize(target, q0, cfg.optimizer_config())
    table = diagnostics.error_table(p_mom, diagnostics.approx_moments(q), sym)
    res.approximation = families.to_dict(q)
    res.errors = table
    res.symmetry = sym.to_dict()
    res.traces["vi"] = trace
    res.summary = {
        "target": target.name,
        **table.aggregates(),
        "delta_mean_per_coord": table.delta_mean,
        "reference": info,
        "reference_mean": p_mom.mean,
        "vi_mean": q.mean,
        "converged": trace.converged,
        "steps_used": trace.steps_used,
    }


def _logistic_symmetry(cfg, res):
    p = cfg.params
    summary = {}
    for n in p.get("sizes", [0, 4, 128]):
        target = build_target({"name": "logistic", "n": n, "prior_scale": p.get("prior_scale", 0.5),
                               "data_seed": p.get("data_seed", 20240521)})
        p_mom, _, info = reference_moments(target, cfg)
        q, trace = optimize(target, initial_approx(target, cfg.family), cfg.optimizer_config())
        sd = np.sqrt(p_mom.variance)
        scaled = np.abs(q.mean - p_mom.mean) / sd
        res.traces[f"n={n}"] = trace
        summary[str(n)] = {
            "max_scaled_error": float(np.max(scaled)),
            "scaled_error": scaled,
            "scaled_mc_error": p_mom.mc_std_errors / sd,
            "vi_mean": q.mean,
            "mcmc_mean": p_mom.mean,
            "mcmc_sd": sd,
            "reference": info,
        }
        for k in range(target.dim):
            res.curve.append({"n": n, "coord": k, "vi_mean": q.mean[k], "mcmc_mean": p_mom.mean[k],
                              "mcmc_sd": sd[k], "mcmc_se": p_mom.mc_std_errors[k], "scaled_error": scaled[k]})
    res.summary = summary


def _grid_experiment(cfg, res, key, entries, make, default_base, lo, hi):
    template = _location_template(cfg.family, default_base=default_base)
    grid = _grid(cfg.params, lo, hi)
    n_quad = cfg.params.get("quadrature_points", 200)
    summary = {}
    for label, spec in entries:
        target = make(spec)
        gs = grid_search_1d(target, template, grid, n_quad)
        summary[label] = {"best_nu": gs.best_nu, "kl_min": float(np.min(gs.kl))}
        logp = target.log_density(grid[:, None])
        for nu, kl, lp in zip(grid, gs.kl, logp):
            res.curve.append({key: label, "nu": nu, "kl": kl, "log_p": lp})
        yield label, target, gs, summary[label]
    res.summary = summary


def _tail_robust(cfg, res):
    specs = cfg.params.get("targets", [
        {"kind": "laplace"}, {"kind": "student_t", "df": 10.0}, {"kind": "cauchy"}])
    entries = [(s["kind"], s) for s in specs]
    make = lambda s: build_target({"name": "univariate", **s})
    cell = cfg.params.get("grid_step", 0.01)
    for _, target, gs, row in _grid_experiment(cfg, res, "target", entries, make, "gaussian", -2.0, 2.0):
        row["symmetry_point"] = float(target.symmetry_point[0])
        row["abs_error"] = abs(gs.best_nu - row["symmetry_point"])
        row["within_one_cell"] = row["abs_error"] <= cell * (1 + 1e-9)


def _local_minima(kl):
    inner = (kl[1:-1] < kl[:-2]) & (kl[1:-1] <= kl[2:])
    return np.nonzero(inner)[0] + 1


def _mixture_1d(cfg, res):
    entries = [(f"{m:g}", m) for m in cfg.params.get("m", [1.0, 10.0])]
    make = lambda m: build_target({"name": "mixture1d", "m": m})
    for _, _, gs, row in _grid_experiment(cfg, res, "m", entries, make, "gaussian", -15.0, 15.0):
        i0 = int(np.argmin(np.abs(gs.nu_grid)))
        kl = gs.kl
        row["second_difference_at_0"] = float(kl[i0 - 1] - 2 * kl[i0] + kl[i0 + 1])
        row["local_minima"] = gs.nu_grid[_local_minima(kl)]


def _skew(cfg, res):
    entries = [(f"{a:g}", a) for a in cfg.params.get("alphas", [0.0, 1.0, 3.0, 10.0])]
    make = lambda a: build_target({"name": "univariate", "kind": "skew_normal", "alpha": a})
    errs = []
    for _, target, gs, row in _grid_experiment(cfg, res, "alpha", entries, make, "laplace_iid", -5.0, 5.0):
        row["mean_p"] = float(target.moments.mean[0])
        row["abs_error"] = abs(gs.best_nu - row["mean_p"])
        errs.append(row["abs_error"])
    res.summary["errors_strictly_increasing"] = bool(np.all(np.diff(errs) > 0))


def _gamma_oracle(target):
    return diagnostics.solve_gamma(target.radial_logderiv, target.dim)


def _fit_elliptical(target, cfg, label, res):
    q, trace = optimize(target, initial_approx(target, cfg.family), cfg.optimizer_config())
    res.traces[label] = trace
    m = target.moments.scale_matrix
    g_fit, dev = diagnostics.scale_recovery_check(q.scale_matrix, m)
    corr_q = diagnostics.approx_moments(q).correlation
    corr_err = float(np.max(np.abs(corr_q - target.moments.correlation)))
    return q, trace, g_fit, dev, corr_err


def _multi_student_gamma(cfg, res):
    p = cfg.params
    d, rho = int(p.get("dim", 10)), p.get("rho", 0.9)
    summary = {}
    for k in p.get("dfs", [3.0, 5.0, 10.0, 20.0]):
        target = build_target({"name": "student", "dim": d, "df": k, "rho": rho})
        q, trace, g_fit, dev, corr_err = _fit_elliptical(target, cfg, f"df={k:g}", res)
        oracle = _gamma_oracle(target)
        gap = abs(g_fit - oracle.gamma) / oracle.gamma
        row = {"df": k, "gamma_fit": g_fit, "gamma_oracle": oracle.gamma, "relative_gap": gap,
               "max_corr_error": corr_err, "scale_deviation": dev, "max_location_error":
               float(np.max(np.abs(q.mean - target.moments.mean))), "converged": trace.converged}
        summary[f"{k:g}"] = row
        res.curve.append(row)
    res.summary = summary


def _scale_recovery(cfg, res):
    target = build_target(cfg.target)
    q, trace = optimize(target, initial_approx(target, cfg.family), cfg.optimizer_config())
    res.traces["vi"] = trace
    res.approximation = families.to_dict(q)
    q_mom = diagnostics.approx_moments(q)
    summary = {"target": target.name, "vi_mean": q.mean, "vi_correlation": q_mom.correlation,
               "converged": trace.converged}
    p_mom = diagnostics.known_moments(target)
    if p_mom is not None:
        table = diagnostics.error_table(p_mom, q_mom)
        res.errors = table
        summary.update(table.aggregates())
        summary["max_location_error"] = float(np.max(np.abs(q.mean - p_mom.mean)))
    if (target.elliptical and target.moments.scale_matrix is not None and q.base.spherical
            and q.mode == "full_rank"):
        g_fit, dev = diagnostics.scale_recovery_check(q.scale_matrix, target.moments.scale_matrix)
        summary.update(gamma_fit=g_fit, gamma_oracle=_gamma_oracle(target).gamma, scale_deviation=dev)
    res.summary = summary
    if target.dim == 2:
        lo = np.asarray(cfg.params.get("grid_min", [-4.0, -4.0]), dtype=float)
        hi = np.asarray(cfg.params.get("grid_max", [4.0, 4.0]), dtype=float)
        n = int(cfg.params.get("grid_points", 41))
        z1, z2 = np.meshgrid(np.linspace(lo[0], hi[0], n), np.linspace(lo[1], hi[1], n), indexing="ij")
        pts = np.column_stack([z1.ravel(), z2.ravel()])
        for z, lp, lq in zip(pts, target.log_density(pts), families.log_density(q, pts)):
            res.curve.append({"z1": z[0], "z2": z[1], "log_p": lp, "log_q": lq})


def _convexity_probe(cfg, res):
    target = build_target(cfg.target)
    base = families.BaseDensity(cfg.family.get("base", "gaussian"), target.dim, cfg.family.get("df"))
    template = families.LocationScaleApprox.standard(base, "location_only", scale=cfg.family.get("scale", 1.0))
    p = cfg.params
    segments = p.get("segments")
    if segments is None:
        rng = np.random.default_rng(cfg.seed)
        radius = p.get("radius", 3.0)
        segments = [rng.uniform(-radius, radius, (2, target.dim)).tolist() for _ in range(p.get("n_segments", 5))]
    verdicts = []
    for i, seg in enumerate(segments):
        v = diagnostics.kl_convexity_probe(target, template, seg, p.get("n_points", 41),
                                           p.get("tol", 1e-9), p.get("n_mc", 20000), cfg.seed)
        verdicts.append({"segment": seg, "convex": v.convex, "min_second_difference":
                         v.min_second_difference, "method": v.method})
        for t, kl in zip(v.t, v.kl):
            res.curve.append({"segment": i, "t": t, "kl": kl})
    res.summary = {"target": target.name, "log_concave": target.log_concave,
                   "all_convex": all(v["convex"] for v in verdicts), "segments": verdicts}


_RUNNERS = {
    "logistic_symmetry": _logistic_symmetry,
    "tail_robust": _tail_robust,
    "mixture_1d": _mixture_1d,
    "skew": _skew,
    "multi_student_gamma": _multi_student_gamma,
    "scale_recovery": _scale_recovery,
    "table1_row": _table1_row,
    "convexity_probe": _convexity_probe,
}


def run(cfg: ExperimentConfig):
    """Execute one experiment. Numerical failures are re-raised as :class:`ExperimentFailure`."""
    start = time.perf_counter()
    res = ExperimentResult(
        config=cfg.to_dict(),
        summary={},
        seeds={"optimizer": cfg.seed, "chains": [cfg.seed + 1 + i for i in range(cfg.n_chains)]},
    )
    try:
        _RUNNERS[cfg.experiment](cfg, res)
    except (FloatingPointError, np.linalg.LinAlgError, diagnostics.BracketFailure,
            diagnostics.ZeroScale, diagnostics.TooFewValidSamples) as exc:
        raise ExperimentFailure(f"{cfg.experiment}: {type(exc).__name__}: {exc}") from exc
    res.wall_clock = time.perf_counter() - start
    return res


# ---------------------------------------------------------------------------
# quick invariant suite behind ``symvi check``


def run_checks():
    """Fast numerical contracts. Returns ``[(name, passed, detail), ...]``."""
    from .elbo import estimate_elbo, value_and_grad

    out = []
    rng = np.random.default_rng(0)
    catalog = [build_target({"name": n}) for n in ("mvn", "student", "mixture", "crescent", "GLM",
                                                    "8schools", "8schools_nc")]
    catalog += [build_target({"name": "univariate", "kind": k}) for k in ("laplace", "student_t", "cauchy")]
    catalog.append(build_target({"name": "logistic", "n": 16}))
    for t in catalog:
        pts = rng.normal(size=(20, t.dim)) + (t.moments.mean if t.moments.mean is not None else 0.0)
        err = float(np.nanmax(targets.gradient_errors(t, pts)))
        out.append((f"gradient {t.name}", err <= 1e-5, f"max rel err {err:.2e}"))

    t = build_target({"name": "mvn", "dim": 3, "rho": 0.3})
    base = families.BaseDensity("gaussian", 3)
    q = families.LocationScaleApprox.from_factor(base, [0.2, -0.1, 0.3], np.tril(0.1 * np.ones((3, 3))) + 0.7 * np.eye(3))
    _, g = value_and_grad(t, q, 2000, seed=5)
    theta = families.pack(q)
    fd = np.empty_like(theta)
    for i in range(len(theta)):
        e = np.zeros_like(theta)
        e[i] = 1e-6
        hi = estimate_elbo(t, families.unpack(theta + e, q), 2000, seed=5).value
        lo = estimate_elbo(t, families.unpack(theta - e, q), 2000, seed=5).value
        fd[i] = (hi - lo) / 2e-6
    err = float(np.max(np.abs(g - fd)) / max(1.0, float(np.max(np.abs(fd)))))
    out.append(("reparameterization gradient", err <= 1e-3, f"rel err {err:.2e}"))

    sol = diagnostics.solve_gamma(lambda r: -np.asarray(r), 5)
    out.append(("gamma oracle gaussian", abs(sol.gamma - 1) <= 1e-8, f"gamma {sol.gamma:.12f}"))

    tpl = families.LocationScaleApprox.standard(families.BaseDensity("gaussian", 1), "location_only")
    for m, want in ((1.0, True), (10.0, False)):
        v = diagnostics.kl_convexity_probe(build_target({"name": "mixture1d", "m": m}), tpl, ([-3.0], [3.0]))
        out.append((f"convexity mixture m={m:g}", v.convex == want, f"min second difference {v.min_second_difference:.3e}"))
    return out

"""Measurements of how well an approximation recovers a target.

Covers the reflection-based symmetry violation, scaled moment errors, the
scalar ``gamma`` linking the fitted scale to an elliptical target's scale
matrix, and a numerical convexity probe of ``KL(q_nu || p)`` along a segment.
"""

import csv
import io
import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from scipy import integrate, optimize, stats

from .elbo import QuadratureFailure, kl_location_quadrature
from .families import base_draws, entropy
from .linalg import DimensionMismatch, cholesky, symmetrize, tri_solve

__all__ = [
    "DegenerateDenominator",
    "TooFewValidSamples",
    "ZeroScale",
    "BracketFailure",
    "SymmetryReport",
    "MomentSummary",
    "ErrorTable",
    "GammaSolution",
    "ConvexityVerdict",
    "ERROR_COLUMNS",
    "symmetry_violation",
    "epsilon_90",
    "estimate_moments",
    "approx_moments",
    "known_moments",
    "delta_mean",
    "delta_corr",
    "delta_cov",
    "error_table",
    "gamma_equation_rhs",
    "solve_gamma",
    "scale_recovery_check",
    "kl_convexity_probe",
    "save_draws",
    "load_draws",
]

ERROR_COLUMNS = ("coord", "delta_mean", "pair_i", "pair_j", "delta_corr", "delta_cov", "epsilon_90")
DEGENERATE_TOL = 1e-12
UNSTABLE_COV = 1e-10
MIN_SYMMETRY_DRAWS = 100
CONVENTIONS = ("kernel", "density")


class DegenerateDenominator(ZeroDivisionError):
    pass


class TooFewValidSamples(ValueError):
    pass


class ZeroScale(ZeroDivisionError):
    pass


class BracketFailure(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# symmetry violation


@dataclass(frozen=True)
class SymmetryReport:
    epsilon_values: np.ndarray
    epsilon_90: float
    mu_used: np.ndarray
    n_samples: int
    n_degenerate: int
    convention: str

    def to_dict(self):
        return {
            "epsilon_90": self.epsilon_90,
            "mu_used": self.mu_used.tolist(),
            "n_samples": self.n_samples,
            "n_degenerate": self.n_degenerate,
            "convention": self.convention,
        }


def _log_target(target, convention):
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}; expected one of {CONVENTIONS}")
    return target.log_kernel if convention == "kernel" else target.log_density


def _epsilon(target, z, mu, convention):
    f = _log_target(target, convention)
    num = f(z) - f(2.0 * mu - z)
    den = f(z)
    return num, den


def symmetry_violation(target, z, mu, convention="kernel"):
    """``|(log p(z) - log p(2 mu - z)) / log p(z)|`` at a single point.

    ``convention="kernel"`` evaluates the log density as written in the model
    statements (z-independent constants dropped); ``"density"`` uses the
    target's full normalization.
    """
    z = np.asarray(z, dtype=float).reshape(target.dim)
    mu = np.asarray(mu, dtype=float).reshape(target.dim)
    num, den = _epsilon(target, z, mu, convention)
    if abs(den) < DEGENERATE_TOL:
        raise DegenerateDenominator(f"log density {den:g} too close to zero at {z}")
    return float(abs(num / den))


def epsilon_90(target, draws, mu, convention="kernel"):
    """90th percentile of the symmetry violation over ``draws``.

    Draws where the log density is within 1e-12 of zero are skipped and
    counted in ``n_degenerate``.
    """
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    mu = np.asarray(mu, dtype=float).reshape(target.dim)
    if draws.shape[0] < MIN_SYMMETRY_DRAWS:
        raise TooFewValidSamples(f"need at least {MIN_SYMMETRY_DRAWS} draws, got {draws.shape[0]}")
    num, den = _epsilon(target, draws, mu, convention)
    ok = np.abs(den) >= DEGENERATE_TOL
    if ok.sum() < MIN_SYMMETRY_DRAWS:
        raise TooFewValidSamples(f"only {int(ok.sum())} draws have a usable denominator")
    eps = np.abs(num[ok] / den[ok])
    return SymmetryReport(
        eps, float(np.quantile(eps, 0.9)), mu.copy(), int(ok.sum()), int((~ok).sum()), convention
    )


# ---------------------------------------------------------------------------
# moments and scaled errors


@dataclass(frozen=True)
class MomentSummary:
    mean: np.ndarray
    covariance: np.ndarray
    correlation: np.ndarray
    n_samples: int
    mc_std_errors: np.ndarray

    @property
    def dim(self):
        return len(self.mean)

    @property
    def variance(self):
        return np.diag(self.covariance)


def _correlation(cov):
    sd = np.sqrt(np.diag(cov))
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = cov / np.outer(sd, sd)
    corr = np.where(np.outer(sd, sd) > 0, corr, 0.0)
    corr = np.clip(corr, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return corr


def estimate_moments(draws, ess=None):
    """Sample mean, unbiased covariance and correlation.

    Standard errors of the mean use ``ess`` per coordinate when given
    (correlated MCMC draws), otherwise the draw count.
    """
    x = np.asarray(draws, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least two draws")
    mean = x.mean(axis=0)
    cov = np.atleast_2d(np.cov(x, rowvar=False))
    cov = 0.5 * (cov + cov.T)
    eff = np.full(x.shape[1], float(n)) if ess is None else np.asarray(ess, dtype=float)
    se = np.sqrt(np.diag(cov) / eff)
    return MomentSummary(mean, cov, _correlation(cov), n, se)


def approx_moments(q):
    """Exact moments of a location-scale approximation."""
    cov = q.covariance
    return MomentSummary(q.mean, cov, _correlation(cov), 0, np.zeros(q.dim))


def known_moments(target):
    """Analytic moments of a target, or None when mean or covariance is unknown."""
    m = target.moments
    if m.mean is None or m.covariance is None:
        return None
    cov = np.asarray(m.covariance, dtype=float)
    return MomentSummary(np.asarray(m.mean, dtype=float), cov, _correlation(cov), 0, np.zeros(target.dim))


def _same_dim(p, q):
    if p.dim != q.dim:
        raise DimensionMismatch(f"moments of dimension {p.dim} and {q.dim}")


def delta_mean(p_moments, q_moments):
    """``|E_p - E_q| / max(sd_p, |E_p|)`` per coordinate."""
    _same_dim(p_moments, q_moments)
    scale = np.maximum(np.sqrt(p_moments.variance), np.abs(p_moments.mean))
    if np.any(scale == 0):
        raise ZeroScale(f"zero variance and zero mean on coordinates {np.nonzero(scale == 0)[0].tolist()}")
    return np.abs(p_moments.mean - q_moments.mean) / scale


def delta_corr(p_moments, q_moments):
    _same_dim(p_moments, q_moments)
    return np.abs(p_moments.correlation - q_moments.correlation)


def delta_cov(p_moments, q_moments):
    """Absolute relative covariance error and a mask of entries with ``|Cov_p| < 1e-10``."""
    _same_dim(p_moments, q_moments)
    cp = p_moments.covariance
    unstable = np.abs(cp) < UNSTABLE_COV
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.abs(cp - q_moments.covariance) / np.abs(cp)
    return np.where(unstable, np.nan, out), unstable


@dataclass(frozen=True)
class ErrorTable:
    """Per-coordinate and per-pair errors.

    Aggregates: ``delta_mean`` over coordinates, ``delta_corr`` over
    off-diagonal pairs (diagonal entries are identically zero), ``delta_cov``
    over pairs ``i <= j`` excluding unstable entries. An aggregate with no
    contributing entries is None.
    """

    delta_mean: np.ndarray
    delta_corr: np.ndarray
    delta_cov: np.ndarray
    cov_unstable: np.ndarray
    epsilon_90: Optional[float] = None

    @property
    def dim(self):
        return len(self.delta_mean)

    @property
    def mean_delta_mean(self):
        return float(np.mean(self.delta_mean)) if self.dim else None

    @property
    def mean_delta_corr(self):
        i, j = np.triu_indices(self.dim, 1)
        return float(np.mean(self.delta_corr[i, j])) if len(i) else None

    @property
    def mean_delta_cov(self):
        i, j = np.triu_indices(self.dim)
        vals = self.delta_cov[i, j][~self.cov_unstable[i, j]]
        return float(np.mean(vals)) if len(vals) else None

    def aggregates(self):
        return {
            "delta_mean": self.mean_delta_mean,
            "delta_corr": self.mean_delta_corr,
            "delta_cov": self.mean_delta_cov,
            "epsilon_90": self.epsilon_90,
        }

    def rows(self):
        """One row per coordinate, then one per pair ``i <= j``; blanks are None."""
        out = []
        for k in range(self.dim):
            out.append({c: None for c in ERROR_COLUMNS} | {
                "coord": k, "delta_mean": float(self.delta_mean[k]), "epsilon_90": self.epsilon_90})
        for i, j in zip(*np.triu_indices(self.dim)):
            cov = None if self.cov_unstable[i, j] else float(self.delta_cov[i, j])
            out.append({c: None for c in ERROR_COLUMNS} | {
                "pair_i": int(i), "pair_j": int(j), "delta_corr": float(self.delta_corr[i, j]),
                "delta_cov": cov, "epsilon_90": self.epsilon_90})
        return out

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=ERROR_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in self.rows():
            writer.writerow({k: "" if v is None else repr(v) for k, v in row.items()})
        return buf.getvalue()

    def to_dict(self):
        return {"aggregates": self.aggregates(), "rows": self.rows()}

    @classmethod
    def from_dict(cls, raw):
        rows = raw["rows"]
        d = sum(r["coord"] is not None for r in rows)
        dm = np.zeros(d)
        dc = np.zeros((d, d))
        dv = np.full((d, d), np.nan)
        bad = np.zeros((d, d), dtype=bool)
        for r in rows:
            if r["coord"] is not None:
                dm[r["coord"]] = r["delta_mean"]
            else:
                i, j = r["pair_i"], r["pair_j"]
                dc[i, j] = dc[j, i] = r["delta_corr"]
                if r["delta_cov"] is None:
                    bad[i, j] = bad[j, i] = True
                else:
                    dv[i, j] = dv[j, i] = r["delta_cov"]
        return cls(dm, dc, dv, bad, raw["aggregates"].get("epsilon_90"))


def error_table(p_moments, q_moments, symmetry: Optional[SymmetryReport] = None):
    cov, unstable = delta_cov(p_moments, q_moments)
    return ErrorTable(
        delta_mean(p_moments, q_moments),
        delta_corr(p_moments, q_moments),
        cov,
        unstable,
        None if symmetry is None else symmetry.epsilon_90,
    )


# ---------------------------------------------------------------------------
# gamma for elliptical targets with a gaussian family


@dataclass(frozen=True)
class GammaSolution:
    gamma: float
    residual: float
    quadrature_points: int
    bracket: Tuple[float, float]


def _radial_limit(dim):
    # radius of a standard gaussian in R^d follows a chi distribution
    return float(stats.chi.isf(1e-12, dim))


def gamma_equation_rhs(radial_logderiv, dim, gamma, quadrature_points=200):
    """``-(2 pi^{d/2} / Gamma(d/2)) int_0^R f'(gamma r) g(r) r^d dr`` for a gaussian base ``g``.

    The surface-area factor times ``r^{d-1} g(r)`` is the chi density, so the
    integral is ``-E[f'(gamma R) R]`` with ``R ~ chi_d``, truncated where the
    chi tail mass drops below 1e-12. Returns the value and the number of
    integrand evaluations.
    """
    rmax = _radial_limit(dim)
    f = lambda r: -radial_logderiv(gamma * r) * r * stats.chi.pdf(r, dim)
    mode = np.sqrt(max(dim - 1, 0))
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, _, info = integrate.quad(
                f, 0.0, rmax, points=[mode], epsabs=0.0, epsrel=1e-12,
                limit=quadrature_points, full_output=True,
            )
        except integrate.IntegrationWarning as exc:
            raise QuadratureFailure(f"radial integral did not converge at gamma = {gamma}") from exc
    if not np.isfinite(val):
        raise QuadratureFailure(f"non-finite radial integral at gamma = {gamma}")
    return float(val), int(info["neval"])


def solve_gamma(radial_logderiv, dim, quadrature_points=200, tol=1e-10, max_expansions=60):
    """Solve ``d / gamma = rhs(gamma)`` by bisection.

    Bisection runs on ``gamma * rhs(gamma) - d``, which has the same positive
    root. It is increasing whenever ``-f'(s) s`` is increasing in ``s``; that
    holds for log-concave profiles and also for the student-t profile, whose
    ``rhs`` alone is not monotone. Monotonicity is checked across the final
    bracket on every solve. The bracket starts at ``[1, 1]`` and is widened by
    factors of 2.
    """
    neval = [0]

    def resid(g):
        val, n = gamma_equation_rhs(radial_logderiv, dim, g, quadrature_points)
        neval[0] += n
        return g * val - dim

    lo = hi = 1.0
    r_lo = r_hi = resid(1.0)
    if r_lo == 0.0:
        return GammaSolution(1.0, 0.0, neval[0], (1.0, 1.0))
    for _ in range(max_expansions):
        if r_lo >= 0:
            lo /= 2.0
            r_lo = resid(lo)
        if r_hi <= 0:
            hi *= 2.0
            r_hi = resid(hi)
        if r_lo < 0 < r_hi:
            break
    else:
        raise BracketFailure(f"no sign change in [{lo:g}, {hi:g}]")

    gamma = optimize.bisect(resid, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500)
    rhs, _ = gamma_equation_rhs(radial_logderiv, dim, gamma, quadrature_points)
    rel = abs(rhs - dim / gamma) / (dim / gamma)

    grid = np.linspace(lo, hi, 9)
    vals = np.array([resid(g) for g in grid])
    if np.any(np.diff(vals) <= 0):
        raise AssertionError("gamma residual is not increasing inside the bracket")
    if rel > 1e-8:
        raise QuadratureFailure(f"relative residual {rel:.2e} exceeds 1e-8")
    return GammaSolution(float(gamma), float(rel), neval[0], (lo, hi))


def scale_recovery_check(fitted_S, M):
    """``gamma_hat`` with ``gamma_hat^2 = tr(S M^-1) / d`` and the deviation of ``S`` from ``gamma_hat^2 M``."""
    s = symmetrize(fitted_S)
    m = symmetrize(M)
    if s.shape != m.shape:
        raise DimensionMismatch(f"scale matrices of shape {s.shape} and {m.shape}")
    cholesky(s)
    lm = cholesky(m)
    d = m.shape[0]
    # tr(S M^-1) = tr(L^-1 S L^-T)
    w = tri_solve(lm, tri_solve(lm, s).T)
    g2 = float(np.trace(w)) / d
    dev = float(np.max(np.abs(s - g2 * m)) / np.max(np.abs(m)))
    return float(np.sqrt(g2)), dev


# ---------------------------------------------------------------------------
# convexity of KL along a segment of locations


@dataclass(frozen=True)
class ConvexityVerdict:
    convex: bool
    t: np.ndarray
    kl: np.ndarray
    second_differences: np.ndarray
    method: str

    @property
    def min_second_difference(self):
        return float(np.min(self.second_differences))


def kl_convexity_probe(target, family_template, segment, n_points=41, tol=1e-9,
                       n_mc=20000, seed=0, quadrature_points=200):
    """Check discrete convexity of ``nu -> KL(q_nu || p)`` along ``nu_a + t (nu_b - nu_a)``.

    One-dimensional targets use deterministic quadrature. Higher dimensions
    use a Monte Carlo estimate with the same base draws at every location,
    which is exactly convex in ``nu`` whenever ``log p`` is concave. The
    verdict is convex when every second difference is at least
    ``-tol * max(1, max |KL|)``.
    """
    a = np.asarray(segment[0], dtype=float).reshape(target.dim)
    b = np.asarray(segment[1], dtype=float).reshape(target.dim)
    if n_points < 3:
        raise ValueError("need at least three points")
    t = np.linspace(0.0, 1.0, n_points)
    nus = a + t[:, None] * (b - a)
    if target.dim == 1:
        kl = kl_location_quadrature(target, family_template, nus[:, 0], quadrature_points)
        method = "quadrature"
    else:
        zeta = base_draws(family_template, n_mc, seed)
        shift = zeta @ family_template.factor.T
        h = entropy(family_template, n_mc, seed).value
        kl = np.array([-h - np.mean(target.log_density(nu + shift)) for nu in nus])
        method = "common_random_numbers"
    second = kl[:-2] - 2.0 * kl[1:-1] + kl[2:]
    floor = -tol * max(1.0, float(np.max(np.abs(kl))))
    return ConvexityVerdict(bool(np.all(second >= floor)), t, kl, second, method)


# ---------------------------------------------------------------------------
# draw files


def save_draws(draws, path, fmt=None):
    """Write draws as CSV (header ``z0, z1, ...``) or JSON ``{"draws": [[...], ...]}``."""
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".") or "csv"
    if fmt == "json":
        path.write_text(json.dumps({"draws": draws.tolist()}))
    elif fmt == "csv":
        header = ",".join(f"z{i}" for i in range(draws.shape[1]))
        np.savetxt(path, draws, delimiter=",", header=header, comments="", fmt="%.17g")
    else:
        raise ValueError(f"unknown draw format {fmt!r}")


def load_draws(path):
    path = Path(path)
    if path.suffix == ".json":
        return np.asarray(json.loads(path.read_text())["draws"], dtype=float)
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)

"""Location-scale variational families.

A member is ``q(z) = q0(L^{-1}(z - nu)) / |L|`` with ``S = L L^T``; draws are
``z = nu + L zeta`` with ``zeta ~ q0``. The factor ``L`` is stored as its
log-diagonal plus strict lower triangle, which is exactly the unconstrained
vector the optimizer works on, so packing is a plain copy.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import gammaln

from .linalg import DimensionMismatch, cholesky, tri_solve

__all__ = [
    "BASE_KINDS",
    "MODES",
    "BaseDensity",
    "LocationScaleApprox",
    "EntropyEstimate",
    "base_draws",
    "sample",
    "log_density",
    "entropy",
    "pack",
    "unpack",
    "n_params",
    "to_dict",
    "from_dict",
]

BASE_KINDS = ("gaussian", "laplace_iid", "student_t_iid")
MODES = ("mean_field", "full_rank", "location_only")
LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class BaseDensity:
    """Standardized base density ``q0`` of a location-scale family.

    Every kind is even-symmetric about the origin; only ``gaussian`` is
    spherically symmetric.
    """

    kind: str
    dim: int
    df: Optional[float] = None

    def __post_init__(self):
        if self.kind not in BASE_KINDS:
            raise ValueError(f"unknown base kind {self.kind!r}; expected one of {BASE_KINDS}")
        if self.dim < 1:
            raise ValueError("dimension must be positive")
        if self.kind == "student_t_iid":
            if self.df is None:
                object.__setattr__(self, "df", 10.0)
            if not self.df > 2:
                raise ValueError(f"student-t base needs df > 2, got {self.df}")
        elif self.df is not None:
            object.__setattr__(self, "df", None)

    @property
    def spherical(self):
        return self.kind == "gaussian"

    @property
    def variance(self):
        """Per-coordinate variance of the base draws."""
        if self.kind == "gaussian":
            return 1.0
        if self.kind == "laplace_iid":
            return 2.0
        return self.df / (self.df - 2.0)

    def draw(self, rng, n):
        shape = (n, self.dim)
        if self.kind == "gaussian":
            return rng.standard_normal(shape)
        if self.kind == "laplace_iid":
            return rng.laplace(size=shape)
        return rng.standard_t(self.df, size=shape)

    def log_density(self, zeta):
        zeta = np.asarray(zeta, dtype=float)
        if self.kind == "gaussian":
            return -0.5 * self.dim * LOG_2PI - 0.5 * np.sum(zeta * zeta, axis=-1)
        if self.kind == "laplace_iid":
            return -self.dim * np.log(2.0) - np.sum(np.abs(zeta), axis=-1)
        k = self.df
        const = gammaln(0.5 * (k + 1)) - gammaln(0.5 * k) - 0.5 * np.log(k * np.pi)
        return self.dim * const - 0.5 * (k + 1) * np.sum(np.log1p(zeta * zeta / k), axis=-1)

    def entropy(self):
        """Closed-form entropy, or None when only a Monte Carlo estimate is available."""
        if self.kind == "gaussian":
            return 0.5 * self.dim * (LOG_2PI + 1.0)
        if self.kind == "laplace_iid":
            return self.dim * (1.0 + np.log(2.0))
        return None


@dataclass(frozen=True, eq=False)
class LocationScaleApprox:
    base: BaseDensity
    nu: np.ndarray
    log_diag: np.ndarray
    lower: np.ndarray
    mode: str = "full_rank"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        d = self.base.dim
        arrays = {}
        for name, size in (("nu", d), ("log_diag", d), ("lower", d * (d - 1) // 2)):
            a = np.array(getattr(self, name), dtype=float).reshape(-1)
            if a.size != size:
                raise DimensionMismatch(f"{name} has {a.size} entries, expected {size}")
            a.setflags(write=False)
            arrays[name] = a
        if self.mode == "mean_field" and np.any(arrays["lower"] != 0):
            raise ValueError("mean-field approximation must have a diagonal scale factor")
        for name, a in arrays.items():
            object.__setattr__(self, name, a)

    @classmethod
    def from_factor(cls, base, nu, factor, mode="full_rank"):
        """Build from a location and a lower-triangular factor (or a vector of diagonal scales)."""
        factor = np.asarray(factor, dtype=float)
        if factor.ndim <= 1:
            factor = np.diag(np.broadcast_to(factor, (base.dim,)))
        if factor.shape != (base.dim, base.dim) or np.any(np.triu(factor, 1) != 0):
            raise DimensionMismatch("scale factor must be a lower-triangular d x d matrix")
        diag = np.diag(factor)
        if np.any(diag <= 0):
            raise ValueError("scale factor diagonal must be strictly positive")
        rows, cols = np.tril_indices(base.dim, -1)
        return cls(base, nu, np.log(diag), factor[rows, cols], mode)

    @classmethod
    def from_scale_matrix(cls, base, nu, scale, mode="full_rank"):
        return cls.from_factor(base, nu, cholesky(scale), mode)

    @classmethod
    def standard(cls, base, mode="full_rank", nu=None, scale=1.0):
        nu = np.zeros(base.dim) if nu is None else nu
        return cls.from_factor(base, nu, np.full(base.dim, float(scale)), mode)

    @property
    def dim(self):
        return self.base.dim

    @property
    def factor(self):
        d = self.dim
        l = np.diag(np.exp(self.log_diag))
        rows, cols = np.tril_indices(d, -1)
        l[rows, cols] = self.lower
        return l

    @property
    def scale_matrix(self):
        l = self.factor
        return l @ l.T

    @property
    def mean(self):
        return self.nu.copy()

    @property
    def covariance(self):
        return self.base.variance * self.scale_matrix

    def half_log_det_scale(self):
        """``0.5 log|S|``, i.e. ``log|L|``."""
        return float(np.sum(self.log_diag))

    def replace_nu(self, nu):
        return LocationScaleApprox(self.base, nu, self.log_diag, self.lower, self.mode)


class EntropyEstimate(NamedTuple):
    value: float
    std_error: float
    exact: bool


def base_draws(q, n, seed):
    if n < 1:
        raise ValueError("need at least one draw")
    return q.base.draw(np.random.default_rng(seed), n)


def sample(q, n, seed):
    """``n`` reparameterized draws ``nu + L zeta``; identical seeds give identical draws."""
    zeta = base_draws(q, n, seed)
    return q.nu + zeta @ q.factor.T


def log_density(q, z):
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != q.dim:
        raise DimensionMismatch(f"points of dimension {z.shape[-1]} for a {q.dim}-d approximation")
    single = z.ndim == 1
    z2 = np.atleast_2d(z)
    zeta = tri_solve(q.factor, (z2 - q.nu).T).T
    out = q.base.log_density(zeta) - q.half_log_det_scale()
    return float(out[0]) if single else out


def entropy(q, n_mc=100_000, seed=0):
    """``H(q0) + 0.5 log|S|``; Monte Carlo for bases without a closed form."""
    h0 = q.base.entropy()
    if h0 is not None:
        return EntropyEstimate(h0 + q.half_log_det_scale(), 0.0, True)
    zeta = base_draws(q, n_mc, seed)
    neg = -q.base.log_density(zeta)
    return EntropyEstimate(
        float(neg.mean()) + q.half_log_det_scale(), float(neg.std(ddof=1) / np.sqrt(n_mc)), False
    )


def n_params(mode, d):
    if mode == "location_only":
        return d
    if mode == "mean_field":
        return 2 * d
    return 2 * d + d * (d - 1) // 2


def pack(q):
    """Flat unconstrained vector: ``nu``, then ``log diag(L)``, then the strict lower triangle.

    Only ``nu`` is packed for location-only families, whose scale is frozen;
    the lower triangle is packed for full-rank families only.
    """
    if q.mode == "location_only":
        return q.nu.copy()
    if q.mode == "mean_field":
        return np.concatenate([q.nu, q.log_diag])
    return np.concatenate([q.nu, q.log_diag, q.lower])


def unpack(params, template):
    params = np.asarray(params, dtype=float)
    d, mode = template.dim, template.mode
    if params.shape != (n_params(mode, d),):
        raise DimensionMismatch(f"{mode} family in R^{d} needs {n_params(mode, d)} params, got {params.shape}")
    if mode == "location_only":
        return LocationScaleApprox(template.base, params, template.log_diag, template.lower, mode)
    lower = params[2 * d :] if mode == "full_rank" else np.zeros(d * (d - 1) // 2)
    return LocationScaleApprox(template.base, params[:d], params[d : 2 * d], lower, mode)


def to_dict(q):
    base = {"kind": q.base.kind, "dim": q.dim}
    if q.base.df is not None:
        base["df"] = q.base.df
    return {
        "base": base,
        "nu": q.nu.tolist(),
        "scale_factor": {"diag": np.exp(q.log_diag).tolist(), "lower": q.lower.tolist()},
        "mode": q.mode,
    }


def from_dict(raw):
    base = BaseDensity(raw["base"]["kind"], int(raw["base"]["dim"]), raw["base"].get("df"))
    sf = raw["scale_factor"]
    return LocationScaleApprox(base, raw["nu"], np.log(sf["diag"]), sf["lower"], raw["mode"])

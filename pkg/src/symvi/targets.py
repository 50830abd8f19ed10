"""Catalog of target densities with exact log-density and gradient.

Every density is evaluated in batches: ``log_density`` accepts a single point of
shape ``(d,)`` or a stack of points of shape ``(n, d)``. Synthetic targets are
normalized; Bayesian-model targets drop additive terms that do not depend on
the latent variable (the usual probabilistic-programming convention), which is
recorded in :attr:`TargetDensity.normalized`.
"""

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import expit, gammaln, log_ndtr

from .datasets import DatasetFixture
from .linalg import DimensionMismatch, cholesky, log_det

__all__ = [
    "InvalidParameter",
    "KnownMoments",
    "TargetDensity",
    "make_mvn",
    "make_multi_student_t",
    "make_univariate",
    "make_gaussian_mixture_1d",
    "make_gaussian_mixture_2d",
    "make_crescent",
    "make_logistic_regression",
    "make_eight_schools",
    "make_binomial_glm",
    "equicorrelation",
    "gradient_errors",
]

LOG_2PI = np.log(2.0 * np.pi)


class InvalidParameter(ValueError):
    pass


@dataclass(frozen=True)
class KnownMoments:
    mean: Optional[np.ndarray] = None
    covariance: Optional[np.ndarray] = None
    correlation: Optional[np.ndarray] = None
    scale_matrix: Optional[np.ndarray] = None
    symmetry_point: Optional[np.ndarray] = None

    def shifted(self, c):
        move = lambda v: None if v is None else v + c
        return replace(self, mean=move(self.mean), symmetry_point=move(self.symmetry_point))


@dataclass(frozen=True, eq=False)
class TargetDensity:
    """An (unnormalized) log-density on R^d with its gradient.

    ``logp`` and ``grad`` act on ``(n, d)`` arrays. ``kinks`` lists hyperplanes
    ``z[coord] == value`` where the density is not differentiable.
    ``radial_logderiv`` is the derivative ``f'(r)`` of the log spherical
    profile for elliptical targets, and ``sampler(rng, n)`` draws exactly from
    the target when that is possible.
    """

    name: str
    dim: int
    logp: Callable
    grad: Callable
    moments: KnownMoments = field(default_factory=KnownMoments)
    log_concave: bool = False
    elliptical: bool = False
    normalized: bool = True
    kinks: tuple = ()
    radial_logderiv: Optional[Callable] = None
    sampler: Optional[Callable] = None
    log_offset: float = 0.0
    kernel_offset: float = 0.0

    @property
    def symmetry_point(self):
        return self.moments.symmetry_point

    @property
    def even_symmetric(self):
        return self.moments.symmetry_point is not None

    def _batch(self, z):
        z = np.asarray(z, dtype=float)
        single = z.ndim == 1
        z2 = z.reshape(1, -1) if single else z
        if z2.ndim != 2 or z2.shape[1] != self.dim:
            raise DimensionMismatch(f"{self.name} expects points in R^{self.dim}, got shape {z.shape}")
        return z2, single

    def log_density(self, z):
        z2, single = self._batch(z)
        out = self.logp(z2) + self.log_offset
        return float(out[0]) if single else out

    def log_kernel(self, z):
        """Log density with z-independent terms of the model statements dropped."""
        return self.log_density(z) - self.kernel_offset

    def grad_log_density(self, z):
        z2, single = self._batch(z)
        out = self.grad(z2)
        return out[0] if single else out

    def sample(self, n, seed):
        if self.sampler is None:
            raise NotImplementedError(f"{self.name} has no exact sampler")
        return self.sampler(np.random.default_rng(seed), n)

    def with_offset(self, constant):
        """Same density shifted by an additive constant on the log scale."""
        return replace(
            self,
            log_offset=self.log_offset + constant,
            kernel_offset=self.kernel_offset + constant,
            normalized=False,
        )

    def shifted(self, c):
        """The translated density ``z -> p(z - c)``."""
        c = np.asarray(c, dtype=float).reshape(self.dim)
        logp, grad, sampler = self.logp, self.grad, self.sampler
        return replace(
            self,
            name=f"{self.name}_shifted",
            logp=lambda z: logp(z - c),
            grad=lambda z: grad(z - c),
            moments=self.moments.shifted(c),
            kinks=tuple((i, v + c[i]) for i, v in self.kinks),
            sampler=None if sampler is None else (lambda rng, n: sampler(rng, n) + c),
        )


def gradient_errors(target, points, rel_step=1e-5, kink_radius=1e-6):
    """Central-difference check of ``grad_log_density``.

    Returns one error per point: ``max_i |g_i - fd_i| / max(|fd_i|, 1)``.
    Points whose difference stencil would touch a kink are reported as NaN.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    steps = rel_step * (1.0 + np.abs(points))
    g = target.grad_log_density(points)
    fd = np.empty_like(points)
    for i in range(points.shape[1]):
        h = np.zeros_like(points)
        h[:, i] = steps[:, i]
        fd[:, i] = (target.log_density(points + h) - target.log_density(points - h)) / (2.0 * steps[:, i])
    err = np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1.0), axis=1)
    for coord, value in target.kinks:
        err[np.abs(points[:, coord] - value) <= steps[:, coord] + kink_radius] = np.nan
    return err


def _correlation_from(m):
    s = np.sqrt(np.diag(m))
    return m / np.outer(s, s)


def equicorrelation(d, rho):
    """Matrix with unit diagonal and ``rho`` everywhere off the diagonal."""
    return (1.0 - rho) * np.eye(d) + rho * np.ones((d, d))


def _whitener(loc, scale):
    loc = np.asarray(loc, dtype=float).ravel()
    scale = np.atleast_2d(np.asarray(scale, dtype=float))
    if scale.shape != (loc.size, loc.size):
        raise DimensionMismatch(f"location of size {loc.size} with scale of shape {scale.shape}")
    return loc, scale, cholesky(scale)


def make_mvn(mean, scale):
    """Multivariate normal with covariance ``scale``."""
    mean, cov, l = _whitener(mean, scale)
    d = mean.size
    const = -0.5 * d * LOG_2PI - 0.5 * log_det(l)

    def logp(z):
        w = solve_triangular(l, (z - mean).T, lower=True)
        return const - 0.5 * np.sum(w * w, axis=0)

    def grad(z):
        w = solve_triangular(l, (z - mean).T, lower=True)
        return -solve_triangular(l.T, w, lower=False).T

    return TargetDensity(
        name="mvn",
        dim=d,
        logp=logp,
        grad=grad,
        moments=KnownMoments(mean, cov, _correlation_from(cov), cov, mean),
        log_concave=True,
        elliptical=True,
        radial_logderiv=lambda r: -np.asarray(r, dtype=float),
        sampler=lambda rng, n: mean + rng.standard_normal((n, d)) @ l.T,
        kernel_offset=const,
    )


def make_multi_student_t(df, loc, scale):
    """Multivariate student-t with ``df`` degrees of freedom and scale matrix ``scale``."""
    if not df > 0:
        raise InvalidParameter(f"degrees of freedom must be positive, got {df}")
    loc, m, l = _whitener(loc, scale)
    d = loc.size
    k = float(df)
    const = (
        gammaln(0.5 * (k + d)) - gammaln(0.5 * k) - 0.5 * d * np.log(k * np.pi) - 0.5 * log_det(l)
    )

    def logp(z):
        w = solve_triangular(l, (z - loc).T, lower=True)
        return const - 0.5 * (k + d) * np.log1p(np.sum(w * w, axis=0) / k)

    def grad(z):
        w = solve_triangular(l, (z - loc).T, lower=True)
        r2 = np.sum(w * w, axis=0)
        return (-(k + d) / (k + r2) * solve_triangular(l.T, w, lower=False)).T

    def sampler(rng, n):
        x = rng.standard_normal((n, d)) @ l.T
        return loc + x / np.sqrt(rng.chisquare(k, n) / k)[:, None]

    moments = KnownMoments(
        mean=loc if k > 1 else None,
        covariance=k / (k - 2.0) * m if k > 2 else None,
        correlation=_correlation_from(m),
        scale_matrix=m,
        symmetry_point=loc,
    )
    return TargetDensity(
        name="student",
        dim=d,
        logp=logp,
        grad=grad,
        moments=moments,
        log_concave=False,
        elliptical=True,
        radial_logderiv=lambda r: -(k + d) * np.asarray(r, dtype=float) / (k + np.square(r)),
        sampler=sampler,
        kernel_offset=const,
    )


def make_univariate(kind, loc=0.0, scale=1.0, df=10.0, alpha=0.0):
    """One-dimensional Laplace, student-t, Cauchy or skew-normal target.

    ``df`` is used by ``student_t`` and ``alpha`` by ``skew_normal``.
    """
    if not scale > 0:
        raise InvalidParameter(f"scale must be positive, got {scale}")
    loc, s = float(loc), float(scale)
    point = np.array([loc])
    kinks = ()

    if kind == "laplace":
        const = -np.log(2.0 * s)
        f = lambda u: const - np.abs(u)
        df_du = lambda u: -np.sign(u)
        mean, var = loc, 2.0 * s * s
        sample_u = lambda rng, n: rng.laplace(size=n)
        kinks = ((0, loc),)
        concave = True
    elif kind in ("student_t", "cauchy"):
        k = 1.0 if kind == "cauchy" else float(df)
        if not k > 0:
            raise InvalidParameter(f"degrees of freedom must be positive, got {df}")
        const = gammaln(0.5 * (k + 1)) - gammaln(0.5 * k) - 0.5 * np.log(k * np.pi) - np.log(s)
        f = lambda u: const - 0.5 * (k + 1) * np.log1p(u * u / k)
        df_du = lambda u: -(k + 1) * u / (k + u * u)
        mean = loc if k > 1 else None
        var = s * s * k / (k - 2) if k > 2 else None
        sample_u = lambda rng, n: rng.standard_t(k, size=n)
        concave = False
    elif kind == "skew_normal":
        a = float(alpha)
        const = np.log(2.0) - 0.5 * LOG_2PI - np.log(s)
        f = lambda u: const - 0.5 * u * u + log_ndtr(a * u)
        # phi(x) / Phi(x) evaluated on the log scale for stability in the lower tail
        mills = lambda x: np.exp(-0.5 * x * x - 0.5 * LOG_2PI - log_ndtr(x))
        df_du = lambda u: -u + a * mills(a * u)
        delta = a / np.sqrt(1.0 + a * a)
        mean = loc + s * delta * np.sqrt(2.0 / np.pi)
        var = s * s * (1.0 - 2.0 * delta**2 / np.pi)

        def sample_u(rng, n):
            u0, u1 = rng.standard_normal(n), rng.standard_normal(n)
            return delta * np.abs(u0) + np.sqrt(1.0 - delta**2) * u1

        point = point if a == 0 else None
        concave = True
    else:
        raise InvalidParameter(f"unknown univariate kind {kind!r}")

    moments = KnownMoments(
        mean=None if mean is None else np.array([mean]),
        covariance=None if var is None else np.array([[var]]),
        correlation=np.ones((1, 1)) if var is not None else None,
        symmetry_point=point,
    )
    return TargetDensity(
        name=kind,
        dim=1,
        logp=lambda z: f((z[:, 0] - loc) / s),
        grad=lambda z: (df_du((z[:, 0] - loc) / s) / s)[:, None],
        moments=moments,
        log_concave=concave,
        kinks=kinks,
        sampler=lambda rng, n: (loc + s * sample_u(rng, n))[:, None],
        kernel_offset=float(const),
    )


def make_gaussian_mixture_1d(m):
    """Balanced mixture ``0.5 N(-m, 1) + 0.5 N(m, 1)``."""
    if m < 0:
        raise InvalidParameter(f"mode offset must be non-negative, got {m}")
    m = float(m)

    def logp(z):
        x = z[:, 0]
        return np.logaddexp(-0.5 * (x + m) ** 2, -0.5 * (x - m) ** 2) - 0.5 * LOG_2PI - np.log(2.0)

    def grad(z):
        x = z[:, 0]
        return (-x + m * np.tanh(m * x))[:, None]

    def sampler(rng, n):
        signs = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        return (signs * m + rng.standard_normal(n))[:, None]

    return TargetDensity(
        name=f"mixture1d_m{m:g}",
        dim=1,
        logp=logp,
        grad=grad,
        moments=KnownMoments(
            mean=np.zeros(1),
            covariance=np.array([[1.0 + m * m]]),
            correlation=np.ones((1, 1)),
            symmetry_point=np.zeros(1),
        ),
        log_concave=m <= 1.0,
        sampler=sampler,
    )


# iid per coordinate: 0.5 N(-1, sd 2) + 0.5 N(3, sd 1)
_MIX2_LOC = np.array([-1.0, 3.0])
_MIX2_VAR = np.array([4.0, 1.0])


def make_gaussian_mixture_2d():
    """Two iid coordinates, each ``0.5 N(-1, 2) + 0.5 N(3, 1)`` (second argument a standard deviation)."""
    log_w = np.log(0.5) - 0.5 * LOG_2PI - 0.5 * np.log(_MIX2_VAR)

    def comp(z):
        return log_w - 0.5 * (z[..., None] - _MIX2_LOC) ** 2 / _MIX2_VAR

    def logp(z):
        c = comp(z)
        return np.sum(np.logaddexp(c[..., 0], c[..., 1]), axis=1)

    def grad(z):
        c = comp(z)
        w = np.exp(c - np.logaddexp(c[..., 0], c[..., 1])[..., None])
        return np.sum(w * (-(z[..., None] - _MIX2_LOC) / _MIX2_VAR), axis=-1)

    def sampler(rng, n):
        which = rng.random((n, 2)) < 0.5
        return np.where(which, _MIX2_LOC[0], _MIX2_LOC[1]) + np.sqrt(
            np.where(which, _MIX2_VAR[0], _MIX2_VAR[1])
        ) * rng.standard_normal((n, 2))

    mean = 0.5 * _MIX2_LOC.sum()
    var = 0.5 * np.sum(_MIX2_VAR + _MIX2_LOC**2) - mean**2
    return TargetDensity(
        name="mixture",
        dim=2,
        logp=logp,
        grad=grad,
        moments=KnownMoments(
            mean=np.full(2, mean), covariance=var * np.eye(2), correlation=np.eye(2)
        ),
        log_concave=False,
        sampler=sampler,
    )


def make_crescent():
    """Rosenbrock-type density: ``z1 ~ N(0, 10^2)``, ``z2 | z1 ~ N(0.03 (z1 - 100)^2, 1)``."""
    const = -LOG_2PI - np.log(10.0)

    def resid(z):
        return z[:, 1] - 0.03 * (z[:, 0] - 100.0) ** 2

    def logp(z):
        return const - 0.5 * z[:, 0] ** 2 / 100.0 - 0.5 * resid(z) ** 2

    def grad(z):
        r = resid(z)
        return np.column_stack([-z[:, 0] / 100.0 + 0.06 * (z[:, 0] - 100.0) * r, -r])

    def sampler(rng, n):
        z1 = 10.0 * rng.standard_normal(n)
        return np.column_stack([z1, 0.03 * (z1 - 100.0) ** 2 + rng.standard_normal(n)])

    # moments of 0.03 (u - 100)^2 for u ~ N(0, 100): E = 0.03 * 10100,
    # Var = 0.03^2 * (2 * 100^2 + 4 * 100^2 * 100), Cov(u, .) = -0.03 * 200 * 100
    cov = np.array([[100.0, -600.0], [-600.0, 0.0009 * 4.02e6 + 1.0]])
    return TargetDensity(
        name="crescent",
        dim=2,
        logp=logp,
        grad=grad,
        moments=KnownMoments(
            mean=np.array([0.0, 303.0]), covariance=cov, correlation=_correlation_from(cov)
        ),
        log_concave=False,
        sampler=sampler,
        kernel_offset=const,
    )


def make_logistic_regression(data: DatasetFixture, prior_scale=0.5):
    """Logistic regression with iid ``Laplace(0, prior_scale)`` priors on ``(b0, b1, b2)``."""
    if not prior_scale > 0:
        raise InvalidParameter(f"prior scale must be positive, got {prior_scale}")
    data.require("y", "x1", "x2")
    y = data["y"]
    x = np.column_stack([np.ones(data.n_rows), data["x1"], data["x2"]])
    b = float(prior_scale)

    def logp(z):
        eta = z @ x.T
        return eta @ y - np.sum(np.logaddexp(0.0, eta), axis=1) - np.sum(np.abs(z), axis=1) / b

    def grad(z):
        return (y - expit(z @ x.T)) @ x - np.sign(z) / b

    return TargetDensity(
        name=f"logistic_n{data.n_rows}",
        dim=3,
        logp=logp,
        grad=grad,
        moments=KnownMoments(symmetry_point=np.zeros(3)) if data.n_rows == 0 else KnownMoments(),
        log_concave=True,
        normalized=False,
        kinks=((0, 0.0), (1, 0.0), (2, 0.0)),
    )


def make_eight_schools(data: DatasetFixture, centered=True, likelihood=True):
    """Hierarchical eight-schools model on ``(mu, log tau, theta_1..8)`` or ``(mu, log tau, eps_1..8)``.

    Priors are ``mu ~ N(5, 3^2)`` and ``tau ~ N+(0, 5^2)``; the log transform of
    ``tau`` contributes the Jacobian term ``log tau``. ``likelihood=False``
    drops the ``y`` terms.
    """
    data.require("y", "sigma", length=8)
    y, var = data["y"], data["sigma"] ** 2
    use_lik = 1.0 if likelihood else 0.0

    def prior(z):
        mu, lt = z[:, 0], z[:, 1]
        return -((mu - 5.0) ** 2) / 18.0 - np.exp(2.0 * lt) / 50.0 + lt

    def prior_grad(z):
        g = np.zeros_like(z)
        g[:, 0] = -(z[:, 0] - 5.0) / 9.0
        g[:, 1] = -np.exp(2.0 * z[:, 1]) / 25.0 + 1.0
        return g

    if centered:

        def logp(z):
            mu, lt, theta = z[:, :1], z[:, 1], z[:, 2:]
            dev = np.sum((theta - mu) ** 2, axis=1)
            return (
                prior(z)
                - 8.0 * lt
                - 0.5 * dev * np.exp(-2.0 * lt)
                - use_lik * 0.5 * np.sum((y - theta) ** 2 / var, axis=1)
            )

        def grad(z):
            mu, lt, theta = z[:, :1], z[:, 1], z[:, 2:]
            inv_t2 = np.exp(-2.0 * lt)
            g = prior_grad(z)
            g[:, 0] += np.sum(theta - mu, axis=1) * inv_t2
            g[:, 1] += -8.0 + np.sum((theta - mu) ** 2, axis=1) * inv_t2
            g[:, 2:] = -(theta - mu) * inv_t2[:, None] + use_lik * (y - theta) / var
            return g

    else:

        def logp(z):
            mu, lt, eps = z[:, :1], z[:, 1:2], z[:, 2:]
            theta = mu + np.exp(lt) * eps
            return (
                prior(z)
                - 0.5 * np.sum(eps**2, axis=1)
                - use_lik * 0.5 * np.sum((y - theta) ** 2 / var, axis=1)
            )

        def grad(z):
            mu, lt, eps = z[:, :1], z[:, 1:2], z[:, 2:]
            tau = np.exp(lt)
            r = use_lik * (y - (mu + tau * eps)) / var
            g = prior_grad(z)
            g[:, 0] += np.sum(r, axis=1)
            g[:, 1] += tau[:, 0] * np.sum(r * eps, axis=1)
            g[:, 2:] = -eps + tau * r
            return g

    return TargetDensity(
        name="8schools" if centered else "8schools_nc",
        dim=10,
        logp=logp,
        grad=grad,
        log_concave=False,
        normalized=False,
    )


def make_binomial_glm(data: DatasetFixture, prior_sd=100.0):
    """Binomial regression ``C ~ B(N, logit^-1(a + b1 ye + b2 ye^2))`` with ``N(0, 100^2)`` priors."""
    data.require("N", "C", "ye")
    trials, succ, ye = data["N"], data["C"], data["ye"]
    x = np.column_stack([np.ones_like(ye), ye, ye**2])
    prec = 1.0 / prior_sd**2

    def logp(z):
        eta = z @ x.T
        return eta @ succ - np.logaddexp(0.0, eta) @ trials - 0.5 * prec * np.sum(z * z, axis=1)

    def grad(z):
        return (succ - trials * expit(z @ x.T)) @ x - prec * z

    return TargetDensity(
        name="GLM",
        dim=3,
        logp=logp,
        grad=grad,
        log_concave=True,
        normalized=False,
    )

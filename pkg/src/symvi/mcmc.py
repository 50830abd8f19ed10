"""Baseline MCMC samplers used as a stand-in for ground truth.

Two samplers are provided: random-walk Metropolis with a proposal covariance
adapted during warmup, and Hamiltonian Monte Carlo with a fixed number of
leapfrog steps whose step size (and diagonal metric) are tuned during warmup.
All adaptation stops at the end of warmup.
"""

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .elbo import NonFiniteDensity

__all__ = [
    "ChainConfig",
    "ChainOutput",
    "ZeroAcceptanceWarning",
    "run_chain",
    "run_chains",
    "effective_sample_size",
    "default_config",
]

ALGORITHMS = ("rwm_adaptive", "hmc_fixed")


class ZeroAcceptanceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class ChainConfig:
    n_warmup: int = 1000
    n_samples: int = 20000
    seed: int = 0
    algorithm: str = "rwm_adaptive"
    init: Optional[tuple] = None
    step_size: float = 0.05
    n_leapfrog: int = 32
    adapt: bool = True
    target_accept: Optional[float] = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if self.n_warmup < 0 or self.n_samples < 1 or self.n_leapfrog < 1:
            raise ValueError("chain lengths and leapfrog count must be positive")
        if not self.step_size > 0:
            raise ValueError("step size must be positive")

    @classmethod
    def from_dict(cls, raw):
        raw = dict(raw)
        if raw.get("init") is not None:
            raw["init"] = tuple(raw["init"])
        return cls(**raw)


@dataclass(frozen=True)
class ChainOutput:
    draws: np.ndarray
    acceptance_rate: float
    ess_per_coordinate: np.ndarray
    step_size: float
    n_warmup: int


def default_config(dim, **overrides):
    """Random-walk Metropolis up to three dimensions, HMC beyond."""
    algorithm = "rwm_adaptive" if dim <= 3 else "hmc_fixed"
    return ChainConfig(algorithm=algorithm, **overrides)


def _init_point(target, cfg):
    z = np.zeros(target.dim) if cfg.init is None else np.asarray(cfg.init, dtype=float)
    if z.shape != (target.dim,):
        raise ValueError(f"init has shape {z.shape}, expected ({target.dim},)")
    lp = target.log_density(z)
    if not np.isfinite(lp):
        raise NonFiniteDensity("log density is not finite at the initial point")
    return z, lp


def _rwm(target, cfg, rng):
    d = target.dim
    z, lp = _init_point(target, cfg)
    goal = cfg.target_accept or (0.44 if d == 1 else 0.3)
    log_scale = np.log(2.38 / np.sqrt(d))
    chol = np.eye(d)
    history = []
    total = cfg.n_warmup + cfg.n_samples
    out = np.empty((cfg.n_samples, d))
    accepted = 0
    noise = rng.standard_normal((total, d))
    unif = np.log(rng.random(total))
    for t in range(total):
        prop = z + np.exp(log_scale) * (chol @ noise[t])
        with np.errstate(over="ignore", invalid="ignore"):
            lp_prop = target.log_density(prop)
        alpha = min(1.0, np.exp(lp_prop - lp)) if np.isfinite(lp_prop) else 0.0
        if unif[t] < lp_prop - lp:
            z, lp = prop, lp_prop
            if t >= cfg.n_warmup:
                accepted += 1
        if t < cfg.n_warmup:
            if cfg.adapt:
                log_scale += (alpha - goal) / (t + 1) ** 0.6
                history.append(z)
                if t >= 199 and (t + 1) % 100 == 0:
                    cov = np.cov(np.asarray(history[len(history) // 2 :]).T).reshape(d, d)
                    try:
                        chol = np.linalg.cholesky(cov + 1e-10 * np.trace(cov) / d * np.eye(d))
                    except np.linalg.LinAlgError:
                        pass
        else:
            out[t - cfg.n_warmup] = z
    return out, accepted / cfg.n_samples, float(np.exp(log_scale))


def _leapfrog(target, z, p, grad, eps, inv_mass, n):
    p = p + 0.5 * eps * grad
    for i in range(n):
        z = z + eps * inv_mass * p
        grad = target.grad_log_density(z)
        if i < n - 1:
            p = p + eps * grad
    p = p + 0.5 * eps * grad
    return z, p, grad


def _hmc(target, cfg, rng):
    d = target.dim
    z, lp = _init_point(target, cfg)
    grad = target.grad_log_density(z)
    inv_mass = np.ones(d)
    eps = cfg.step_size
    goal = cfg.target_accept or 0.8
    total = cfg.n_warmup + cfg.n_samples
    out = np.empty((cfg.n_samples, d))
    accept_sum = 0.0
    metric_at = cfg.n_warmup // 2
    warm = []

    # dual averaging of log step size
    def da_reset(eps):
        return {"mu": np.log(10 * eps), "hbar": 0.0, "log_bar": np.log(eps), "t": 0}

    da = da_reset(eps)
    for t in range(total):
        p0 = rng.standard_normal(d) / np.sqrt(inv_mass)
        # divergent trajectories overflow; they are rejected below
        with np.errstate(over="ignore", invalid="ignore"):
            z1, p1, g1 = _leapfrog(target, z, p0, grad, eps, inv_mass, cfg.n_leapfrog)
            lp1 = target.log_density(z1)
            h1 = -lp1 + 0.5 * np.sum(inv_mass * p1 * p1)
        h0 = -lp + 0.5 * np.sum(inv_mass * p0 * p0)
        log_alpha = -(h1 - h0) if np.isfinite(h1) and np.all(np.isfinite(g1)) else -np.inf
        alpha = float(np.exp(min(0.0, log_alpha)))
        if np.log(rng.random()) < log_alpha:
            z, lp, grad = z1, lp1, g1
        if t < cfg.n_warmup:
            if cfg.adapt:
                da["t"] += 1
                k = da["t"]
                da["hbar"] += ((goal - alpha) - da["hbar"]) / (k + 10)
                log_eps = da["mu"] - np.sqrt(k) / 0.05 * da["hbar"]
                w = k**-0.75
                da["log_bar"] = w * log_eps + (1 - w) * da["log_bar"]
                eps = float(np.exp(log_eps))
                if t >= metric_at // 2:
                    warm.append(z)
                if t == metric_at and len(warm) > 10:
                    var = np.var(np.asarray(warm), axis=0)
                    inv_mass = np.where(var > 0, var, 1.0)
                    da = da_reset(eps)
                if t == cfg.n_warmup - 1:
                    eps = float(np.exp(da["log_bar"]))
        else:
            out[t - cfg.n_warmup] = z
            accept_sum += alpha
    return out, accept_sum / cfg.n_samples, eps


def run_chain(target, cfg: ChainConfig):
    """Run one chain; deterministic given ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    runner = _rwm if cfg.algorithm == "rwm_adaptive" else _hmc
    draws, acc, tuned = runner(target, cfg, rng)
    if acc < 0.01:
        warnings.warn(f"acceptance rate {acc:.4f} on {target.name}", ZeroAcceptanceWarning)
    ess = effective_sample_size(draws) if len(draws) >= 100 else np.ones(target.dim)
    return ChainOutput(draws, float(acc), ess, tuned, cfg.n_warmup)


def run_chains(target, cfg: ChainConfig, n_chains=4, inits=None):
    """Independent chains with seeds ``cfg.seed + i``, pooled after all complete."""
    outs = []
    for i in range(n_chains):
        init = cfg.init if inits is None else tuple(inits[i])
        outs.append(run_chain(target, ChainConfig(**{**cfg.__dict__, "seed": cfg.seed + i, "init": init})))
    draws = np.concatenate([o.draws for o in outs])
    ess = np.sum([o.ess_per_coordinate for o in outs], axis=0)
    acc = float(np.mean([o.acceptance_rate for o in outs]))
    return ChainOutput(draws, acc, ess, float(np.mean([o.step_size for o in outs])), cfg.n_warmup)


def _autocorr(x):
    n = len(x)
    f = np.fft.rfft(x, 2 * n)
    acov = np.fft.irfft(f * np.conj(f))[:n] / n
    return acov / acov[0]


def effective_sample_size(draws):
    """Per-coordinate ESS with Geyer's initial positive sequence truncation.

    Autocorrelations are summed in adjacent pairs until the first negative
    pair. Results are clipped to ``[1, n]``; a constant coordinate gets 1.
    """
    x = np.asarray(draws, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n < 100:
        raise ValueError("effective sample size needs at least 100 draws")
    out = np.empty(x.shape[1])
    for j in range(x.shape[1]):
        xc = x[:, j] - x[:, j].mean()
        if not np.any(xc):
            out[j] = 1.0
            continue
        rho = _autocorr(xc)
        pairs = rho[: 2 * (n // 2)].reshape(-1, 2).sum(axis=1)
        neg = np.nonzero(pairs < 0)[0]
        k = neg[0] if len(neg) else len(pairs)
        tau = -1.0 + 2.0 * pairs[:k].sum()
        out[j] = np.clip(n / tau, 1.0, n) if tau > 0 else float(n)
    return out

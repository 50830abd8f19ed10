import numpy as np
import pytest

from symvi import datasets, mcmc
from symvi.elbo import NonFiniteDensity
from symvi.mcmc import ChainConfig, effective_sample_size, run_chain, run_chains
from symvi.targets import (
    equicorrelation,
    make_binomial_glm,
    make_crescent,
    make_gaussian_mixture_2d,
    make_multi_student_t,
    make_mvn,
    make_univariate,
)


def _se_check(out, mean, var):
    se = np.sqrt(var / out.ess_per_coordinate)
    assert np.all(np.abs(out.draws.mean(axis=0) - mean) <= 4 * se)


def test_standard_normal():
    out = run_chain(make_mvn([0.0], [[1.0]]), ChainConfig(n_samples=20000, seed=0))
    _se_check(out, 0.0, 1.0)
    assert out.draws.var() == pytest.approx(1.0, rel=0.1)
    assert out.draws.shape == (20000, 1)
    assert np.all(out.ess_per_coordinate <= 20000)


def test_correlated_mvn():
    t = make_mvn([0.0, 0.0], equicorrelation(2, 0.5))
    out = run_chains(t, ChainConfig(n_samples=20000, seed=1), n_chains=2)
    assert np.min(out.ess_per_coordinate) >= 2000
    assert np.corrcoef(out.draws.T)[0, 1] == pytest.approx(0.5, abs=0.02)


def test_student_correlation():
    t = make_multi_student_t(10.0, [0.0, 0.0], equicorrelation(2, 0.9))
    out = run_chains(t, ChainConfig(n_samples=20000, seed=2), n_chains=4)
    assert np.corrcoef(out.draws.T)[0, 1] == pytest.approx(0.9, abs=0.02)


def test_hmc_mvn():
    t = make_mvn(np.arange(5.0), equicorrelation(5, 0.3))
    out = run_chain(t, mcmc.default_config(5, n_samples=5000, seed=3))
    assert 0.5 <= out.acceptance_rate <= 1.0
    _se_check(out, t.moments.mean, np.diag(t.moments.covariance))


@pytest.mark.parametrize("target", [
    make_univariate("laplace", 1.0, 2.0),
    make_univariate("skew_normal", alpha=3.0),
    make_gaussian_mixture_2d(),
    make_crescent(),
], ids=lambda t: t.name)
def test_agrees_with_known_moments(target):
    init = tuple(target.moments.mean)
    out = run_chains(target, ChainConfig(n_warmup=2000, n_samples=20000, seed=4, init=init), n_chains=4)
    _se_check(out, target.moments.mean, np.diag(target.moments.covariance))


def test_deterministic_per_seed():
    t = make_mvn([0.0, 0.0], np.eye(2))
    for algo in mcmc.ALGORITHMS:
        cfg = ChainConfig(n_warmup=200, n_samples=500, seed=7, algorithm=algo)
        a, b = run_chain(t, cfg), run_chain(t, cfg)
        assert np.array_equal(a.draws, b.draws)


def test_accepted_moves_even_symmetric():
    # negating the init of a centred gaussian chain negates the whole path under the same seed stream
    t = make_mvn([0.0, 0.0], equicorrelation(2, 0.4))
    a = run_chain(t, ChainConfig(n_warmup=500, n_samples=5000, seed=8, init=(1.0, -2.0), adapt=False))
    b = run_chain(t, ChainConfig(n_warmup=500, n_samples=5000, seed=9, init=(-1.0, 2.0), adapt=False))
    da, db = np.diff(a.draws, axis=0), np.diff(b.draws, axis=0)
    ma, mb = da[np.any(da != 0, axis=1)], -db[np.any(db != 0, axis=1)]
    se = np.sqrt(ma.var(axis=0) / len(ma) + mb.var(axis=0) / len(mb))
    assert np.all(np.abs(ma.mean(axis=0) - mb.mean(axis=0)) <= 4 * se)
    se2 = np.sqrt(np.var(ma**2, axis=0) / len(ma) + np.var(mb**2, axis=0) / len(mb))
    assert np.all(np.abs((ma**2).mean(axis=0) - (mb**2).mean(axis=0)) <= 4 * se2)


def test_glm_chain_finite():
    t = make_binomial_glm(datasets.load_builtin("binomial_glm"))
    out = run_chain(t, ChainConfig(n_warmup=500, n_samples=2000, seed=0))
    assert np.all(np.isfinite(out.draws))
    assert 0.1 <= out.acceptance_rate <= 0.6


def test_nonfinite_init():
    class Bad:
        dim = 1
        name = "bad"

        def log_density(self, z):
            return -np.inf

    with pytest.raises(NonFiniteDensity):
        run_chain(Bad(), ChainConfig(n_samples=10))


def test_zero_acceptance_warning():
    t = make_mvn([0.0], [[1e-8]])
    with pytest.warns(mcmc.ZeroAcceptanceWarning):
        run_chain(t, ChainConfig(n_warmup=0, n_samples=200, init=(0.0,), adapt=False))


def test_config_validation():
    with pytest.raises(ValueError):
        ChainConfig(algorithm="nuts")
    with pytest.raises(ValueError):
        ChainConfig(step_size=0.0)
    with pytest.raises(ValueError):
        ChainConfig(n_samples=0)
    assert mcmc.default_config(3).algorithm == "rwm_adaptive"
    assert mcmc.default_config(4).algorithm == "hmc_fixed"


def test_ess_iid():
    x = np.random.default_rng(0).normal(size=(20000, 2))
    ess = effective_sample_size(x)
    assert np.all(np.abs(ess / 20000 - 1) <= 0.2)


def test_ess_constant_chain():
    assert effective_sample_size(np.ones((500, 1)))[0] == 1.0


def test_ess_ar1():
    rng = np.random.default_rng(1)
    n, rho = 100_000, 0.5
    x = np.empty(n)
    x[0] = rng.normal()
    e = rng.normal(size=n) * np.sqrt(1 - rho**2)
    for i in range(1, n):
        x[i] = rho * x[i - 1] + e[i]
    ess = effective_sample_size(x)[0]
    assert ess == pytest.approx(n / 3, rel=0.25)


def test_ess_needs_draws():
    with pytest.raises(ValueError):
        effective_sample_size(np.zeros((50, 1)))

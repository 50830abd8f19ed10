import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from symvi import elbo, families
from symvi.elbo import (
    Diverged,
    NonFiniteDensity,
    OptimizerConfig,
    QuadratureFailure,
    estimate_elbo,
    grid_search_1d,
    kl_location_quadrature,
    optimize,
    value_and_grad,
)
from symvi.families import BaseDensity, LocationScaleApprox
from symvi.targets import (
    equicorrelation,
    make_gaussian_mixture_1d,
    make_multi_student_t,
    make_mvn,
    make_univariate,
)


def _gauss(d, mode="full_rank", nu=None, scale=1.0):
    return LocationScaleApprox.standard(BaseDensity("gaussian", d), mode, nu=nu, scale=scale)


def test_elbo_zero_at_target():
    sigma = equicorrelation(2, 0.5)
    p = make_mvn([1.0, 2.0], sigma)
    q = LocationScaleApprox.from_scale_matrix(BaseDensity("gaussian", 2), [1.0, 2.0], sigma)
    est = estimate_elbo(p, q, 10_000, 0)
    assert abs(est.value) <= 3 * max(est.std_error, 1e-12)


def test_elbo_location_shift_kl():
    est = estimate_elbo(make_mvn([0.0], [[1.0]]), _gauss(1, nu=[0.5]), 100_000, 1)
    assert abs(-est.value - 0.125) <= 3 * est.std_error


def test_elbo_scale_mismatch_kl():
    est = estimate_elbo(make_mvn([0.0], [[4.0]]), _gauss(1), 100_000, 2)
    oracle = np.log(2) + 1 / 8 - 0.5
    assert abs(-est.value - oracle) <= 3 * est.std_error


def test_elbo_fields_and_determinism():
    p = make_univariate("cauchy")
    a = estimate_elbo(p, _gauss(1), 500, 9)
    b = estimate_elbo(p, _gauss(1), 500, 9)
    assert a.value == b.value and a.n_draws == 500 and a.seed == 9
    assert a.value == pytest.approx(a.per_draw.mean())
    assert a.std_error == pytest.approx(a.per_draw.std(ddof=1) / np.sqrt(500))


def test_sampled_entropy_path_for_student_base():
    p = make_mvn([0.0], [[1.0]])
    q = LocationScaleApprox.standard(BaseDensity("student_t_iid", 1, 5.0))
    est = estimate_elbo(p, q, 200_000, 0)
    h = families.entropy(q, 400_000, 1)
    # E log p under a t5 is -0.5 log 2pi - 0.5 * 5/3
    oracle = -0.5 * np.log(2 * np.pi) - 0.5 * 5 / 3 + h.value
    assert abs(est.value - oracle) <= 3 * np.hypot(est.std_error, h.std_error)


def test_non_finite_density_budget():
    # a log-density that is -inf on half the line
    class HalfLine:
        dim = 1
        name = "half"

        def log_density(self, z):
            z = np.atleast_2d(z)
            return np.where(z[:, 0] > 0, -z[:, 0], -np.inf)

    with pytest.raises(NonFiniteDensity):
        estimate_elbo(HalfLine(), _gauss(1), 100, 0)
    est = estimate_elbo(HalfLine(), _gauss(1), 100, 0, max_rejections=100)
    assert est.n_draws < 100


def test_gradient_zero_at_optimum():
    sigma = equicorrelation(2, 0.5)
    p = make_mvn([1.0, 2.0], sigma)
    q = LocationScaleApprox.from_scale_matrix(BaseDensity("gaussian", 2), [1.0, 2.0], sigma)
    grads = np.array([value_and_grad(p, q, 1000, s)[1] for s in range(30)])
    se = grads.std(axis=0, ddof=1) / np.sqrt(len(grads))
    assert np.all(np.abs(grads.mean(axis=0)) <= 3 * np.maximum(se, 1e-12))


@pytest.mark.parametrize("mode", families.MODES)
def test_gradient_matches_central_differences(mode):
    p = make_multi_student_t(10.0, [0.5, -0.5], equicorrelation(2, 0.5))
    l = np.array([[0.8, 0.0], [0.3, 1.1]]) if mode == "full_rank" else np.array([0.8, 1.1])
    q = LocationScaleApprox.from_factor(BaseDensity("gaussian", 2), [0.1, 0.2], l, mode)
    _, g = value_and_grad(p, q, 10_000, 5)
    theta = families.pack(q)
    h = 1e-5
    fd = np.empty_like(theta)
    for i in range(len(theta)):
        e = np.zeros_like(theta)
        e[i] = h
        up = estimate_elbo(p, families.unpack(theta + e, q), 10_000, 5).value
        dn = estimate_elbo(p, families.unpack(theta - e, q), 10_000, 5).value
        fd[i] = (up - dn) / (2 * h)
    rel = np.abs(g - fd) / np.maximum(np.abs(fd), 1.0)
    assert np.all(rel <= 1e-3)


def test_location_gradient_vanishes_at_symmetry_point():
    p = make_multi_student_t(3.0, [1.0, -1.0], equicorrelation(2, 0.8))
    q = _gauss(2, nu=[1.0, -1.0], scale=1.5)
    zeta = families.base_draws(q, 100_000, 0)
    g = p.grad_log_density(q.nu + zeta @ q.factor.T)
    se = g.std(axis=0, ddof=1) / np.sqrt(len(g))
    assert np.all(np.abs(g.mean(axis=0)) <= 3 * se)


def test_optimize_recovers_exact_member():
    p = make_mvn([3.0], [[1.0]])
    q, trace = optimize(p, _gauss(1), OptimizerConfig(max_steps=3000, seed=0))
    assert q.nu[0] == pytest.approx(3.0, abs=0.02)
    assert np.exp(q.log_diag[0]) == pytest.approx(1.0, abs=0.05)
    assert trace.steps_used <= 3000


def test_optimize_seed_self_consistency():
    p = make_multi_student_t(10.0, [1.0, 2.0], equicorrelation(2, 0.5))
    a, _ = optimize(p, _gauss(2), OptimizerConfig(seed=1))
    b, _ = optimize(p, _gauss(2), OptimizerConfig(seed=2))
    assert np.max(np.abs(a.nu - b.nu)) <= 0.05


def test_optimize_mixture_stays_in_mode():
    p = make_gaussian_mixture_1d(10.0)
    q, _ = optimize(p, _gauss(1, nu=[9.0]), OptimizerConfig(seed=0))
    assert q.nu[0] == pytest.approx(10.0, abs=0.2)


def test_optimize_replay_is_bit_exact():
    p = make_multi_student_t(10.0, [0.0, 0.0], equicorrelation(2, 0.5))
    cfg = OptimizerConfig(max_steps=300, seed=4)
    qa, ta = optimize(p, _gauss(2), cfg)
    qb, tb = optimize(p, _gauss(2), cfg)
    assert ta.elbo == tb.elbo
    assert np.array_equal(families.pack(qa), families.pack(qb))
    assert ta.to_jsonl() == tb.to_jsonl()


def test_optimize_diverges_on_huge_step():
    p = make_mvn([0.0], [[1.0]])
    with pytest.raises(Diverged) as info:
        optimize(p, _gauss(1), OptimizerConfig(step_size=1e308, max_steps=50))
    assert info.value.trace is not None


def test_optimizer_config_validation():
    with pytest.raises(ValueError):
        OptimizerConfig(step_decay=1.5)
    with pytest.raises(ValueError):
        OptimizerConfig(n_draws_per_step=0)


def test_step_seeds_distinct():
    seeds = {elbo.step_seed(0, t) for t in range(1000)}
    assert len(seeds) == 1000


def test_grid_search_gaussian():
    grid = np.linspace(-2, 2, 41)
    res = grid_search_1d(make_mvn([0.0], [[1.0]]), _gauss(1), grid)
    assert res.best_nu == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(res.kl, res.kl[::-1], atol=1e-12)
    np.testing.assert_allclose(res.kl, grid**2 / 2, atol=1e-12)


def test_grid_search_cauchy_recovers_median():
    res = grid_search_1d(make_univariate("cauchy"), _gauss(1), np.linspace(-2, 2, 41))
    assert res.best_nu == pytest.approx(0.0, abs=1e-12)


def test_skew_normal_gap_grows():
    lap = LocationScaleApprox.standard(BaseDensity("laplace_iid", 1))
    grid = np.linspace(-3, 3, 601)
    gaps = []
    for alpha in (0.0, 1.0, 3.0, 10.0):
        p = make_univariate("skew_normal", alpha=alpha)
        gaps.append(abs(grid_search_1d(p, lap, grid).best_nu - p.moments.mean[0]))
    assert gaps[0] <= 0.01
    assert all(a < b for a, b in zip(gaps, gaps[1:]))


@settings(max_examples=20, deadline=None)
@given(st.floats(-5, 5), st.floats(-3, 3), st.sampled_from(["laplace", "student_t", "cauchy"]),
       st.sampled_from(["gaussian", "laplace_iid"]))
def test_translation_equivariance(c, nu, kind, base_kind):
    p = make_univariate(kind, df=5.0)
    template = LocationScaleApprox.standard(BaseDensity(base_kind, 1), "location_only", scale=0.7)
    a = kl_location_quadrature(p, template, [nu])
    b = kl_location_quadrature(p.shifted([c]), template, [nu + c])
    assert abs(a[0] - b[0]) <= 1e-8


@pytest.mark.parametrize("target", [make_mvn([0.0], [[2.0]]), make_univariate("laplace"),
                                    make_gaussian_mixture_1d(1.0)], ids=lambda t: t.name)
def test_log_concave_kl_curve_convex(target):
    grid = np.linspace(-3, 3, 61)
    kl = kl_location_quadrature(target, _gauss(1), grid)
    assert np.min(np.diff(kl, 2)) >= -1e-8
    assert grid[np.argmin(kl)] == pytest.approx(0.0, abs=1e-12)


def test_kl_quadrature_matches_monte_carlo_for_student_base():
    p = make_univariate("laplace", 0.0, 1.5)
    q = LocationScaleApprox.standard(BaseDensity("student_t_iid", 1, 5.0), nu=[0.4])
    kl = kl_location_quadrature(p, q, [0.4])[0]
    est = estimate_elbo(p, q, 400_000, 0)
    assert abs(-est.value - kl) <= 3 * est.std_error


def test_quadrature_failure_on_infinite_integrand():
    class Bad:
        dim = 1
        kinks = ()

        def log_density(self, z):
            return np.full(len(np.atleast_2d(z)), -np.inf)

    with pytest.raises(QuadratureFailure):
        kl_location_quadrature(Bad(), _gauss(1), [0.0])


def test_grid_must_be_sorted():
    with pytest.raises(ValueError):
        grid_search_1d(make_mvn([0.0], [[1.0]]), _gauss(1), [0.0, -1.0])

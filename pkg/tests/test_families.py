import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import integrate, stats

from symvi import families
from symvi.elbo import estimate_elbo
from symvi.families import BaseDensity, LocationScaleApprox
from symvi.linalg import DimensionMismatch, cholesky
from symvi.targets import equicorrelation, make_mvn

BASES = [BaseDensity("gaussian", 1), BaseDensity("laplace_iid", 1), BaseDensity("student_t_iid", 1, 5.0)]


def test_location_only_sample_mean():
    q = LocationScaleApprox.standard(BaseDensity("gaussian", 2), "location_only")
    n = 100_000
    z = families.sample(q, n, 0)
    assert np.all(np.abs(z.mean(axis=0)) <= 4 / np.sqrt(n))


def test_full_rank_correlation():
    q = LocationScaleApprox.from_factor(BaseDensity("gaussian", 2), [0.0, 0.0], cholesky(equicorrelation(2, 0.9)))
    z = families.sample(q, 1_000_000, 1)
    assert np.corrcoef(z.T)[0, 1] == pytest.approx(0.9, abs=0.003)


@pytest.mark.parametrize("base", [BaseDensity("gaussian", 3), BaseDensity("laplace_iid", 3),
                                  BaseDensity("student_t_iid", 3)], ids=lambda b: b.kind)
def test_affine_equivariance(base):
    l = np.tril(np.random.default_rng(0).normal(size=(3, 3)))
    np.fill_diagonal(l, [0.5, 1.0, 2.0])
    nu = np.array([1.0, -2.0, 0.5])
    q = LocationScaleApprox.from_factor(base, nu, l)
    q0 = LocationScaleApprox.standard(base)
    np.testing.assert_array_equal(families.sample(q, 50, 7), nu + families.sample(q0, 50, 7) @ q.factor.T)
    np.testing.assert_array_equal(families.sample(q, 50, 7), families.sample(q, 50, 7))


def test_log_density_standard_normal():
    q = LocationScaleApprox.standard(BaseDensity("gaussian", 2))
    z = np.random.default_rng(0).normal(size=(5, 2))
    np.testing.assert_allclose(families.log_density(q, z), stats.multivariate_normal(np.zeros(2)).logpdf(z))


def test_log_density_scaling_1d():
    b = BaseDensity("gaussian", 1)
    q2 = LocationScaleApprox.standard(b, scale=2.0)
    q1 = LocationScaleApprox.standard(b)
    assert families.log_density(q2, [0.0]) == pytest.approx(families.log_density(q1, [0.0]) - np.log(2))


@pytest.mark.parametrize("base", BASES, ids=lambda b: b.kind)
def test_density_integrates_to_one(base):
    q = LocationScaleApprox.standard(base, nu=[0.7], scale=1.8)
    f = lambda z: np.exp(families.log_density(q, [z]))
    total = sum(integrate.quad(f, a, b, limit=200, epsabs=1e-12)[0]
                for a, b in ((-np.inf, 0.7), (0.7, np.inf)))
    assert total == pytest.approx(1.0, abs=1e-8)


def test_dimension_mismatch():
    q = LocationScaleApprox.standard(BaseDensity("gaussian", 2))
    with pytest.raises(DimensionMismatch):
        families.log_density(q, np.zeros(3))


def test_entropy_closed_forms():
    q = LocationScaleApprox.standard(BaseDensity("gaussian", 1))
    assert families.entropy(q).value == pytest.approx(0.5 * np.log(2 * np.pi * np.e))
    b2 = BaseDensity("gaussian", 2)
    l = np.array([[1.0, 0.0], [0.3, 0.7]])
    h1 = families.entropy(LocationScaleApprox.from_factor(b2, [0, 0], l)).value
    h2 = families.entropy(LocationScaleApprox.from_factor(b2, [0, 0], l * np.array([[2, 1], [1, 2]]))).value
    assert h2 - h1 == pytest.approx(2 * np.log(2))
    lap = LocationScaleApprox.standard(BaseDensity("laplace_iid", 1))
    assert families.entropy(lap).value == pytest.approx(stats.laplace.entropy())


def test_student_entropy_mc_matches_quadrature():
    q = LocationScaleApprox.standard(BaseDensity("student_t_iid", 1, 5.0), scale=1.5)
    est = families.entropy(q, n_mc=200_000, seed=3)
    assert not est.exact
    oracle = stats.t(5, scale=1.5).entropy()
    assert abs(est.value - oracle) <= 3 * est.std_error


def test_pack_lengths():
    b = BaseDensity("gaussian", 3)
    assert families.pack(LocationScaleApprox.standard(b, "mean_field")).shape == (6,)
    assert families.pack(LocationScaleApprox.standard(b, "full_rank")).shape == (9,)
    assert families.pack(LocationScaleApprox.standard(b, "location_only")).shape == (3,)


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(families.MODES), st.integers(1, 5), st.data())
def test_pack_unpack_round_trip(mode, d, data):
    template = LocationScaleApprox.standard(BaseDensity("gaussian", d), mode, scale=1.3)
    p = data.draw(arrays(np.float64, (families.n_params(mode, d),), elements=st.floats(-20, 20)))
    q = families.unpack(p, template)
    assert np.array_equal(families.pack(q), p)
    assert np.all(np.diag(q.factor) > 0)
    back = families.unpack(families.pack(q), template)
    assert np.array_equal(back.factor, q.factor) and np.array_equal(back.nu, q.nu)


def test_unpack_wrong_length():
    template = LocationScaleApprox.standard(BaseDensity("gaussian", 2))
    with pytest.raises(DimensionMismatch):
        families.unpack(np.zeros(4), template)


def test_location_only_keeps_scale():
    template = LocationScaleApprox.standard(BaseDensity("gaussian", 2), "location_only", scale=3.0)
    q = families.unpack(np.array([1.0, 2.0]), template)
    np.testing.assert_array_equal(q.factor, template.factor)
    families.sample(q, 10, 0)
    np.testing.assert_array_equal(q.factor, template.factor)


@pytest.mark.parametrize("kind", families.BASE_KINDS)
def test_base_even_symmetry(kind):
    b = BaseDensity(kind, 4)
    zeta = np.random.default_rng(0).normal(size=(1000, 4)) * 3
    assert np.max(np.abs(b.log_density(zeta) - b.log_density(-zeta))) <= 1e-12


def test_gaussian_base_spherical_others_not():
    b = BaseDensity("gaussian", 3)
    rng = np.random.default_rng(1)
    zeta = rng.normal(size=(100, 3))
    rot, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    np.testing.assert_allclose(b.log_density(zeta), b.log_density(zeta @ rot.T), atol=1e-10)
    assert b.spherical
    assert not BaseDensity("laplace_iid", 3).spherical
    assert not BaseDensity("student_t_iid", 3).spherical


def test_student_base_df_rules():
    assert BaseDensity("student_t_iid", 2).df == 10.0
    with pytest.raises(ValueError):
        BaseDensity("student_t_iid", 2, 2.0)


def test_gaussian_kl_pipeline_matches_closed_form():
    sigma = np.array([[2.0, 0.6], [0.6, 1.0]])
    p = make_mvn([1.0, -1.0], sigma)
    l = np.array([[1.2, 0.0], [0.2, 0.8]])
    nu = np.array([0.5, -0.5])
    q = LocationScaleApprox.from_factor(BaseDensity("gaussian", 2), nu, l)
    s = l @ l.T
    inv = np.linalg.inv(sigma)
    diff = np.array([1.0, -1.0]) - nu
    kl = 0.5 * (np.trace(inv @ s) + diff @ inv @ diff - 2 + np.log(np.linalg.det(sigma) / np.linalg.det(s)))
    est = estimate_elbo(p, q, n=200_000, seed=4)
    assert abs(-est.value - kl) <= 3 * est.std_error


def test_json_round_trip():
    q = LocationScaleApprox.from_factor(BaseDensity("student_t_iid", 2, 7.0), [1.0, 2.0],
                                        np.array([[1.0, 0.0], [0.5, 2.0]]))
    raw = families.to_dict(q)
    assert set(raw) == {"base", "nu", "scale_factor", "mode"}
    back = families.from_dict(raw)
    np.testing.assert_allclose(back.factor, q.factor, rtol=1e-15)
    assert back.base == q.base

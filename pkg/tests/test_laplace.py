import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from branchimm import kernels as kern
from branchimm import point_processes as pp
from branchimm.errors import EmptySample, SpecError, TruncationTooLoose
from branchimm.laplace import (ClanTransform, TestFunction, _brute_terms, _elementary_symmetric,
                               empirical_laplace, empirical_transform, laplace_cox_mc,
                               laplace_dpp_fredholm, laplace_dpp_series, laplace_fpp_mc,
                               laplace_poisson, process_transform, series_terms, tail_bound)
from branchimm.simulation import simulate_batch

LN2_ON_UNIT = TestFunction.indicator(math.log(2.0), 0.0, 1.0)


def test_poisson_closed_form():
    assert laplace_poisson(LN2_ON_UNIT, 1.0).value == pytest.approx(math.exp(-0.5), abs=1e-12)


def test_zero_function_gives_one():
    z = TestFunction.zero(3.0)
    kernels = [kern.PoissonIdentity(1.0), kern.GinibreGaussian(1.0),
               kern.spectral_cosine([0.5, 0.2], 3.0)]
    assert laplace_poisson(z, 2.0).value == 1.0
    for k in kernels:
        assert laplace_dpp_series(z, k).value == 1.0
        assert laplace_dpp_fredholm(z, k).value == 1.0
    rng = np.random.default_rng(0)
    assert laplace_fpp_mc(z, 0.7, 1.0, 10, rng).value == 1.0
    assert laplace_cox_mc(z, pp.Cox(pp.ShotNoise(1.0, 1.0)), 10, rng).value == 1.0


def test_rank_one_closed_form():
    k = kern.spectral_cosine([0.5], 1.0)
    assert laplace_dpp_series(LN2_ON_UNIT, k).value == pytest.approx(0.75, abs=1e-12)
    assert laplace_dpp_fredholm(LN2_ON_UNIT, k).value == pytest.approx(0.75, abs=1e-8)


def test_identity_kernel_series_is_poisson():
    k = kern.PoissonIdentity(1.0)
    for c in (0.5, 1.0, 2.0):
        tf = TestFunction.from_f(lambda x, c=c: c * np.exp(-x), 3.0)
        ref = laplace_poisson(tf, 1.0).value
        assert laplace_dpp_series(tf, k, n_max=20, tol=1e-9).value == pytest.approx(ref, abs=1e-8)


def test_identity_terms_are_exponential_expansion():
    k = kern.PoissonIdentity(1.0)
    tf = TestFunction.from_f(lambda x: 0.7 * x, 2.0)
    terms = laplace_dpp_series(tf, k, n_max=20, tol=1e-9).terms
    m = -math.log(laplace_poisson(tf, 1.0).value)
    for n in range(1, 6):
        assert terms[n - 1] == pytest.approx((-m) ** n / math.factorial(n), abs=1e-10)


def test_ginibre_series_vs_fredholm():
    k = kern.GinibreGaussian(1.0)
    tf = TestFunction.indicator(1.0, 0.0, 2.0)
    s = laplace_dpp_series(tf, k, n_max=12)
    f = laplace_dpp_fredholm(tf, k)
    assert abs(s.value - f.value) <= max(1e-6, s.error)


def test_brute_force_terms_match_eigen_identity():
    k = kern.GinibreGaussian(0.7)
    x, w = kern.gauss_legendre(0.0, 2.0, 12)
    ww = w * 0.4
    K = k.matrix(x, x)
    r = np.sqrt(ww)
    e = _elementary_symmetric(np.linalg.eigvalsh(r[:, None] * K * r[None, :]), 3)
    for n in (1, 2, 3):
        assert _brute_terms(K, ww, n) == pytest.approx(math.factorial(n) * e[n], rel=1e-12)


def test_truncation_too_loose():
    tf = TestFunction.indicator(5.0, 0.0, 30.0)
    with pytest.raises(TruncationTooLoose):
        laplace_dpp_series(tf, kern.GinibreGaussian(1.0), n_max=4)


def test_tail_bound():
    assert tail_bound(0.0, 5) == 0.0
    c, n = 0.8, 6
    exact_tail = math.exp(c) - sum(c**k / math.factorial(k) for k in range(n + 1))
    assert exact_tail <= tail_bound(c, n)


def test_gamma_mixed_cox():
    a, b = 2.0, 1.0
    rng = np.random.default_rng(1)
    est = laplace_cox_mc(LN2_ON_UNIT, pp.Cox(pp.GammaMixedRate(a, b)), 20_000, rng)
    assert est.within((b / (b + 0.5)) ** a)


def test_deterministic_cox_is_poisson():
    rng = np.random.default_rng(2)
    est = laplace_cox_mc(LN2_ON_UNIT, pp.Cox(pp.DeterministicRate(1.0)), 50, rng)
    assert est.value == pytest.approx(math.exp(-0.5), abs=1e-10)


def test_cox_vs_sampler():
    spec = pp.Cox(pp.ShotNoise(1.0, 0.8, 1.5))
    tf = TestFunction.from_f(lambda x: 0.3 * (1 + np.sin(x)), 4.0)
    est = laplace_cox_mc(tf, spec, 20_000, np.random.default_rng(3))
    rng = np.random.default_rng(4)
    emp = empirical_laplace(tf, [pp.sample_cox(spec, 4.0, rng) for _ in range(20_000)])
    assert est.agrees(emp)


def test_fpp_near_one_is_poisson():
    est = laplace_fpp_mc(LN2_ON_UNIT, 0.999, 1.0, 4000, np.random.default_rng(5), h=1e-3)
    assert est.within(math.exp(-0.5))


def test_fpp_vs_sampler():
    tf = TestFunction.from_f(lambda x: 0.5 * np.exp(-0.2 * x), 5.0)
    est = laplace_fpp_mc(tf, 0.7, 1.0, 4000, np.random.default_rng(6), h=1e-3)
    rng = np.random.default_rng(7)
    emp = empirical_laplace(tf, [pp.sample_fpp(0.7, 1.0, 5.0, rng) for _ in range(20_000)])
    assert est.agrees(emp)


def test_critical_clan_closed_form(critical):
    # F' = (1 - F)^2 / 2, so 1 - F(t) = h0 / (1 + h0 t / 2)
    clan = ClanTransform(critical, [0.3], 10.0)
    t = np.linspace(0, 10, 11)
    np.testing.assert_allclose(clan.one_particle(t)[:, 0], 1 - 0.7 / (1 + 0.35 * t), rtol=1e-10)


def test_clan_validation(critical):
    with pytest.raises(SpecError):
        ClanTransform(critical, [1.5], 1.0)
    with pytest.raises(SpecError):
        ClanTransform(critical, [-1.0], 1.0, mode="laplace")
    with pytest.raises(SpecError):
        ClanTransform(critical, [0.5, 0.5], 1.0)


def test_process_transform_trivial_cases(subcritical):
    imms = [pp.HomogeneousPoisson(1.0), pp.DPP(kern.GinibreGaussian(1.0)),
            pp.FPP(0.7, 1.0), pp.Cox(pp.GammaMixedRate(2.0, 1.0))]
    rng = np.random.default_rng(8)
    for imm in imms:
        assert process_transform(subcritical, imm, 3.0, [1.0], "pgf", n_rep=20,
                                 rng=rng).value == pytest.approx(1.0, abs=1e-12)
        assert process_transform(subcritical, imm, 0.0, [0.3], "pgf", n_rep=20,
                                 rng=rng).value == 1.0


def test_process_transform_vs_simulation(subcritical):
    val = process_transform(subcritical, pp.HomogeneousPoisson(1.0), 5.0, [0.5], "pgf")
    Z = simulate_batch(subcritical, pp.HomogeneousPoisson(1.0), 5.0, 20_000, seed=9)[:, 0, :]
    assert empirical_transform(Z, [0.5], "pgf").within(val.value)


def test_process_transform_critical_laplace(critical):
    val = process_transform(critical, pp.HomogeneousPoisson(1.0), 4.0, [0.4], "laplace")
    Z = simulate_batch(critical, pp.HomogeneousPoisson(1.0), 4.0, 20_000, seed=10)[:, 0, :]
    assert empirical_transform(Z, [0.4], "laplace").within(val.value)


def test_empirical_transform_edge_cases():
    Z = np.zeros((5, 2), dtype=int)
    assert empirical_transform(Z, [0.3, 0.7]).value == 1.0
    assert empirical_transform(np.array([[2, 1]]), [1.0, 1.0]).value == 1.0
    with pytest.raises(EmptySample):
        empirical_transform(np.zeros((0, 2)), [0.5, 0.5])


def test_invalid_test_function():
    tf = TestFunction.from_phi(lambda x: -np.ones_like(x), 1.0)
    with pytest.raises(SpecError):
        laplace_poisson(tf, 1.0)


@settings(max_examples=25, deadline=None)
@given(a=st.floats(0.0, 3.0), b=st.floats(0.0, 3.0), scale=st.floats(0.5, 2.0),
       end=st.floats(0.5, 4.0))
def test_monotone_and_bounded(a, b, scale, end):
    lo, hi = min(a, b), max(a, b)
    f_lo = TestFunction.from_f(lambda x: lo * np.exp(-x), end)
    f_hi = TestFunction.from_f(lambda x: hi * np.exp(-x), end)
    k = kern.GinibreGaussian(scale)
    for ev in (lambda tf: laplace_poisson(tf, 1.0), lambda tf: laplace_dpp_fredholm(tf, k)):
        v_lo, v_hi = ev(f_lo).value, ev(f_hi).value
        assert 0.0 < v_hi <= v_lo + 1e-12 <= 1.0 + 1e-12


@settings(max_examples=15, deadline=None)
@given(eigs=st.lists(st.floats(0.0, 1.0), min_size=1, max_size=4),
       c=st.floats(0.05, 1.5), end=st.floats(0.5, 3.0))
def test_series_fredholm_agree_spectral(eigs, c, end):
    k = kern.spectral_cosine(eigs, 3.0)
    tf = TestFunction.from_f(lambda x: c * (1 + np.cos(x)), end)
    s = laplace_dpp_series(tf, k, n_max=12, n_quad=48, tol=1e-5)
    f = laplace_dpp_fredholm(tf, k)
    assert abs(s.value - f.value) <= max(1e-6, s.error)


def test_series_terms_shape():
    J, c = series_terms(LN2_ON_UNIT, kern.GinibreGaussian(1.0), n_max=6)
    assert J.shape == (6,)
    assert np.all(J <= c ** np.arange(1, 7) * (1 + 1e-12))

import itertools

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from branchimm.errors import Degenerate, NonPrimitive, SpecError, ZeroQ
from branchimm.model import (BranchingSpec, Criticality, DiscreteLaw, build_generator,
                             eigen_convert, generator_matrix, is_primitive, limit_constants,
                             perron_data, random_primitive_spec, single_type)

from conftest import binary


def brute_Q(spec, gen):
    # sum over support atoms x of (x.u)^2 - sum_j x_j u_j^2, weighted by v_i / mu_i
    total = 0.0
    for i, law in enumerate(spec.offspring):
        acc = 0.0
        for x, p in zip(law.support, law.probs):
            acc += p * ((x @ gen.u) ** 2 - x @ gen.u**2)
        total += gen.v[i] / spec.lifetimes[i] * acc
    return 0.5 * total


def dense_perron(A):
    w, vl, vr = scipy.linalg.eig(A, left=True)
    k = int(np.argmax(w.real))
    u = np.abs(vr[:, k].real)
    v = np.abs(vl[:, k].real)
    u = u / u.sum()
    return w[k].real, u, v / (u @ v)


def test_single_type_critical(critical):
    gen = build_generator(critical)
    assert gen.A.shape == (1, 1) and gen.A[0, 0] == 0.0
    assert gen.rho == 0.0
    assert gen.u[0] == pytest.approx(1.0) and gen.v[0] == pytest.approx(1.0)
    assert gen.criticality is Criticality.CRITICAL


def test_two_type_closed_form(two_type):
    gen = build_generator(two_type)
    np.testing.assert_allclose(gen.M, [[0.5, 0.5], [0.25, 0.75]], atol=1e-15)
    assert abs(gen.rho) < 1e-12
    np.testing.assert_allclose(gen.u, [0.5, 0.5], atol=1e-12)
    np.testing.assert_allclose(gen.v, [2 / 3, 4 / 3], atol=1e-12)
    assert gen.criticality is Criticality.CRITICAL


def test_subcritical_lifetime_two():
    spec = binary(0.75, 0.25, lifetime=2.0)
    gen = build_generator(spec)
    assert gen.A[0, 0] == pytest.approx(-0.25)
    assert gen.rho == pytest.approx(-0.25, abs=1e-14)
    assert gen.criticality is Criticality.SUBCRITICAL


def test_generator_formula(two_type):
    spec = two_type.with_lifetimes([2.0, 0.5])
    A = generator_matrix(spec)
    np.testing.assert_allclose(A, [[-0.25, 0.25], [0.5, -0.5]])


def test_nonprimitive_rejected():
    # type 1 never produces type 0
    spec = BranchingSpec.from_pairs(
        [1.0, 1.0],
        [[([1, 1], 0.5), ([0, 0], 0.5)], [([0, 2], 0.5), ([0, 0], 0.5)]],
        [([1, 0], 1.0)],
    )
    with pytest.raises(NonPrimitive):
        build_generator(spec)


def test_periodic_matrix_is_not_primitive():
    assert not is_primitive(np.array([[0, 1], [1, 0]]))
    assert is_primitive(np.array([[0, 1], [1, 1]]))


def test_degenerate_and_invalid_specs():
    with pytest.raises(Degenerate):
        single_type(1.0, [(1, 1.0)])
    with pytest.raises(SpecError):
        single_type(1.0, [(0, 0.5), (2, 0.4)])
    with pytest.raises(SpecError):
        single_type(-1.0, [(0, 0.5), (2, 0.5)])
    with pytest.raises(SpecError):
        DiscreteLaw.from_pairs([([1, 0], 1.0)], d=1)


def test_limit_constants_critical_binary(critical):
    gen = build_generator(critical)
    lc = limit_constants(critical, gen)
    assert lc.Q == pytest.approx(0.5, abs=1e-15)
    assert lc.beta_gamma == pytest.approx(2.0, abs=1e-14)
    np.testing.assert_allclose(lc.a, [1.0])
    triple = critical.with_immigrant(DiscreteLaw.point_mass([3]))
    assert limit_constants(triple, gen).beta_gamma == pytest.approx(6.0, abs=1e-13)


def test_Q_two_type_brute_force(two_type):
    gen = build_generator(two_type)
    lc = limit_constants(two_type, gen, kernel_diag=0.7)
    assert lc.Q == pytest.approx(brute_Q(two_type, gen), abs=1e-12)
    assert lc.K_star == 0.7
    assert np.all(lc.a > 0)


def test_zero_Q():
    # subcritical but all reproduction is of single particles: no pairs, Q = 0
    spec = single_type(1.0, [(0, 0.5), (1, 0.5)])
    with pytest.raises(ZeroQ):
        limit_constants(spec, build_generator(spec))


def test_weiner_identity_for_unit_lifetimes(two_type):
    gen = build_generator(two_type)
    uW, vW = eigen_convert(gen, two_type, "weiner")
    np.testing.assert_allclose(uW, gen.u, atol=1e-15)
    np.testing.assert_allclose(vW, gen.v, atol=1e-15)


def test_weiner_from_scratch(two_type):
    spec = two_type.with_lifetimes([1.0, 2.0])
    gen = build_generator(spec)
    uW, vW = eigen_convert(gen, spec, "weiner")
    # left null vector of M - I, normalized so that <u, v_W> = 1
    w, vl = scipy.linalg.eig((spec.mean_matrix() - np.eye(2)).T)
    k = int(np.argmin(np.abs(w)))
    oracle = np.abs(vl[:, k].real)
    oracle = oracle / (oracle @ gen.u)
    np.testing.assert_allclose(vW, oracle, atol=1e-12)
    assert uW.sum() == pytest.approx(1.0, abs=1e-12)
    assert uW @ vW == pytest.approx(1.0, abs=1e-12)


def test_holte_identities(two_type):
    spec = two_type.with_lifetimes([1.0, 2.0])
    gen = build_generator(spec)
    uH, vH = eigen_convert(gen, spec, "holte")
    mu = spec.lifetimes
    D2 = np.sum(gen.u * gen.v / mu)
    assert uH @ vH == pytest.approx(1.0, abs=1e-12)
    assert vH.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.sum(mu * uH * vH) == pytest.approx(1.0 / D2, abs=1e-12)
    # critical: u_H is a right eigenvector of M for eigenvalue 1
    M = spec.mean_matrix()
    np.testing.assert_allclose(M @ uH, uH, atol=1e-12)


def test_native_convention_unchanged(two_type):
    gen = build_generator(two_type)
    u, v = eigen_convert(gen, two_type, "native")
    np.testing.assert_array_equal(u, gen.u)
    with pytest.raises(ValueError):
        eigen_convert(gen, two_type, "other")


def test_perron_of_diagonal_dominant():
    rho, u, v = perron_data(np.array([[-1.0, 2.0], [3.0, -4.0]]))
    oracle = dense_perron(np.array([[-1.0, 2.0], [3.0, -4.0]]))
    assert rho == pytest.approx(oracle[0], abs=1e-12)
    np.testing.assert_allclose(u, oracle[1], atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(1, 5), critical=st.booleans())
def test_perron_matches_dense_eigensolver(seed, d, critical):
    spec = random_primitive_spec(np.random.default_rng(seed), d, critical=critical)
    gen = build_generator(spec)
    rho, u, v = dense_perron(gen.A)
    assert abs(gen.rho - rho) < 1e-10
    np.testing.assert_allclose(gen.u, u, atol=1e-9)
    assert abs(gen.u.sum() - 1) < 1e-12 and abs(gen.u @ gen.v - 1) < 1e-12
    assert gen.residual < 1e-10
    if critical:
        assert gen.criticality is Criticality.CRITICAL


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(1, 4),
       c=st.floats(0.1, 10.0, allow_nan=False))
def test_lifetime_scaling(seed, d, c):
    spec = random_primitive_spec(np.random.default_rng(seed), d)
    g1 = build_generator(spec)
    g2 = build_generator(spec.with_lifetimes(c * spec.lifetimes))
    np.testing.assert_allclose(g2.A, g1.A / c, rtol=1e-14, atol=1e-14)
    assert g2.rho == pytest.approx(g1.rho / c, rel=1e-9, abs=1e-11)
    np.testing.assert_allclose(g2.u, g1.u, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(1, 4))
def test_Q_brute_force_random(seed, d):
    spec = random_primitive_spec(np.random.default_rng(seed), d, critical=True)
    gen = build_generator(spec)
    lc = limit_constants(spec, gen)
    assert lc.Q == pytest.approx(brute_Q(spec, gen), rel=1e-12, abs=1e-14)
    assert lc.beta_gamma * lc.Q == pytest.approx(gen.u @ spec.immigrant_mean(), rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(1, 3))
def test_pgf_complement_matches_direct(seed, d):
    rng = np.random.default_rng(seed)
    law = random_primitive_spec(rng, d).offspring[0]
    h = rng.uniform(0.0, 1.0, size=d)
    direct = 1.0 - law.pgf(1.0 - h)
    assert law.pgf_complement(h) == pytest.approx(direct, abs=1e-14)


def test_pgf_gradient_matches_mean(two_type):
    law = two_type.offspring[1]
    np.testing.assert_allclose(law.pgf_gradient(np.ones(2)), law.mean())


def test_factorial_second_brute_force(two_type):
    law = two_type.offspring[1]
    F = np.zeros((2, 2))
    for x, p in zip(law.support, law.probs):
        for j, k in itertools.product(range(2), repeat=2):
            F[j, k] += p * x[j] * (x[k] - (j == k))
    np.testing.assert_allclose(law.factorial_second(), F)

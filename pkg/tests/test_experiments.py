import json
import math

import numpy as np
import pytest

from branchimm import kernels as kern
from branchimm import point_processes as pp
from branchimm.errors import ConditionViolated, NotCritical, NotSubcritical
from branchimm.experiments import (ExperimentVerdict, experiment_gamma_limit,
                                   experiment_l2_rates, experiment_rescaled_limit,
                                   experiment_subcritical_limit, halfline_functional,
                                   limit_constant_delta, limit_constant_rho,
                                   rescaled_limit_transform, subcritical_limit_transform)
from branchimm.model import build_generator, single_type


def sub_limit_closed_form(s, lam=1.0):
    # 1 - F solves H' = -H (H + 2) / 4, so int_0^inf H = 4 ln(1 + H0 / 2)
    h0 = -math.expm1(-s)
    return (1 + h0 / 2) ** (-4 * lam)


def super_limit_closed_form(s, lam=1.0):
    # 1 - L_W(c) = 2c / (3c + 2) for the (1/4, 3/4) binary law
    return (1 + 1.5 * s) ** (-4 * lam / 3)


@pytest.mark.parametrize("s", [0.25, 0.5, 1.0, 2.0])
def test_subcritical_limit_poisson_closed_form(subcritical, s):
    gen = build_generator(subcritical)
    lim = subcritical_limit_transform(subcritical, gen, kern.PoissonIdentity(1.0), [s])
    assert lim.value == pytest.approx(sub_limit_closed_form(s), abs=1e-8)
    assert lim.fredholm == pytest.approx(lim.value, abs=1e-8)


def test_subcritical_limit_zero_s(subcritical):
    gen = build_generator(subcritical)
    assert subcritical_limit_transform(subcritical, gen, kern.GinibreGaussian(1.0), [0.0]).value == 1.0


def test_subcritical_limit_ginibre_series(subcritical):
    gen = build_generator(subcritical)
    lim = subcritical_limit_transform(subcritical, gen, kern.GinibreGaussian(1.0), [1.0])
    assert abs(lim.value - lim.fredholm) < 1e-8
    # repulsion: fewer immigrants than Poisson at rate 1, more than at rate 1/pi
    assert sub_limit_closed_form(1.0) < lim.value
    assert lim.value < 1.0


def test_series_partial_sums_alternate(subcritical):
    gen = build_generator(subcritical)
    lim = subcritical_limit_transform(subcritical, gen, kern.GinibreGaussian(1.0), [2.0])
    diffs = np.array(lim.partial_sums) - lim.value
    tail = diffs[3:-1]
    tail = tail[np.abs(tail) > 1e-13]
    assert np.all(np.sign(tail[1:]) == -np.sign(tail[:-1]))
    ratios = np.abs(np.diff(lim.partial_sums))[3:]
    ratios = ratios[1:] / ratios[:-1]
    assert np.all(ratios[np.isfinite(ratios)] < 1)


def test_halfline_identity_is_exponential():
    lim = halfline_functional(kern.PoissonIdentity(1.0), 2.0, lambda x: np.exp(-x), 1.0)
    assert lim.value == pytest.approx(math.exp(-2.0), abs=1e-8)


@pytest.mark.parametrize("s", [0.5, 1.0])
def test_rescaled_limit_closed_form(supercritical, s):
    gen = build_generator(supercritical)
    lim = rescaled_limit_transform(supercritical, gen, kern.PoissonIdentity(1.0), [s])
    assert lim.value == pytest.approx(super_limit_closed_form(s), abs=1e-7)


def test_rescaled_limit_rejects_subcritical(subcritical):
    with pytest.raises(ConditionViolated):
        rescaled_limit_transform(subcritical, build_generator(subcritical),
                                 kern.PoissonIdentity(1.0), [1.0])


def test_limit_constant_delta(subcritical):
    gen = build_generator(subcritical)
    A = limit_constant_delta(subcritical, gen, 1.0, 1.0, 0.2)
    assert A[0] == pytest.approx(1 / 0.7, rel=1e-12)
    assert limit_constant_delta(subcritical, gen, 1.0, 2.0, 0.2)[0] == pytest.approx(2 * A[0])
    with pytest.raises(ConditionViolated):
        limit_constant_delta(subcritical, gen, 1.0, 1.0, -0.1)


def test_limit_constant_rho():
    spec = single_type(1.0, [(0, 0.35), (2, 0.65)])
    gen = build_generator(spec)
    assert gen.rho == pytest.approx(0.3, abs=1e-12)
    assert limit_constant_rho(spec, gen, 1.0, 1.0)[0] == pytest.approx(1.0, abs=1e-12)


def test_limit_constant_delta_two_type(two_type):
    # direct integral int_0^inf e^{-delta x} E[I] e^{Ax} dx against the solve
    from scipy import integrate, linalg
    spec = two_type.with_lifetimes([1.0, 2.0])
    gen = build_generator(spec)
    EI = spec.immigrant_mean()
    direct = np.array([
        integrate.quad(lambda x: math.exp(-0.4 * x) * (EI @ linalg.expm(gen.A * x))[j], 0, np.inf)[0]
        for j in range(2)])
    np.testing.assert_allclose(limit_constant_delta(spec, gen, 1.0, 1.0, 0.4), direct, rtol=1e-8)


def test_precondition_errors(subcritical, critical, supercritical):
    k = kern.PoissonIdentity(1.0)
    with pytest.raises(NotCritical):
        experiment_gamma_limit(subcritical, build_generator(subcritical), k, 10.0, 10)
    with pytest.raises(NotSubcritical):
        experiment_subcritical_limit(critical, build_generator(critical), k, (1.0, 2.0),
                                     (1.0,), 10)
    with pytest.raises(ConditionViolated):
        experiment_l2_rates(supercritical, build_generator(supercritical),
                            kern.PoissonIdentity(kern.ExponentialDensity(1.0, 0.2)),
                            "delta_dominant", [1.0, 2.0], 10)
    with pytest.raises(ConditionViolated):
        experiment_l2_rates(subcritical, build_generator(subcritical),
                            kern.spectral_cosine([0.5], 2.0), "delta_dominant", [1.0, 2.0], 10)


def test_small_gamma_run_is_reproducible(critical):
    gen = build_generator(critical)
    k = kern.PoissonIdentity(1.0)
    a = experiment_gamma_limit(critical, gen, k, 50.0, 300, seed=3)
    b = experiment_gamma_limit(critical, gen, k, 50.0, 300, seed=3, threads=2)
    assert json.dumps(a.record(), sort_keys=True) == json.dumps(b.record(), sort_keys=True)
    assert a.details["shape"] == pytest.approx(2.0) and a.details["rate"] == pytest.approx(2.0)
    assert "runtime" not in a.record()
    assert a.summary().split()[0] in ("PASS", "FAIL")


def test_gamma_tripled_immigrant_groups():
    spec = single_type(1.0, [(0, 0.5), (2, 0.5)], [(3, 1.0)])
    v = experiment_gamma_limit(spec, build_generator(spec), kern.PoissonIdentity(1.0),
                               300.0, 1000, seed=5)
    assert v.details["shape"] == pytest.approx(6.0)
    assert v.details["target_mean"] == pytest.approx(3.0)
    assert v.details["mean_ok"]


def test_short_horizon_negative_control(critical):
    # t = 5 is pre-asymptotic: the KS test is expected to reject
    v = experiment_gamma_limit(critical, build_generator(critical), kern.PoissonIdentity(1.0),
                               5.0, 2000, seed=6)
    assert not v.passed


def test_small_subcritical_run(subcritical):
    v = experiment_subcritical_limit(subcritical, build_generator(subcritical),
                                     kern.PoissonIdentity(1.0), (20.0, 30.0), (0.5, 1.0), 500,
                                     seed=7)
    assert set(v.details["per_s"]) == {"s=0.5", "s=1"}
    assert v.samples["Z_t30"].shape == (500, 1)


def test_small_rescaled_run(supercritical):
    v = experiment_rescaled_limit(supercritical, build_generator(supercritical),
                                  kern.PoissonIdentity(1.0), (6.0, 8.0), (1.0,), 400, seed=8)
    row = v.details["per_s"]["s=1"]
    assert row["limit"] == pytest.approx(super_limit_closed_form(1.0), abs=1e-7)


def test_small_l2_run(subcritical):
    k = kern.PoissonIdentity(kern.ExponentialDensity(1.0, 0.2))
    v = experiment_l2_rates(subcritical, build_generator(subcritical), k, "delta_dominant",
                            [5.0, 10.0], 300, seed=9)
    assert v.details["limit_constant"][0] == pytest.approx(1 / 0.7)
    assert len(v.details["rel_mse"]) == 2


def test_verdict_record_is_json():
    v = ExperimentVerdict("x", {"a": np.float64(1.5)}, {"a": 2.0}, True, 10, 1, 3.2,
                          {"arr": np.arange(3)})
    rec = json.loads(json.dumps(v.record()))
    assert rec["details"]["arr"] == [0, 1, 2]
    assert v.summary().startswith("PASS")

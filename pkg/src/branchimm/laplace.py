"""Laplace functionals of immigration point processes and transforms of the branching process.

Every evaluator works with ``phi = 1 - exp(-f)`` rather than ``f`` itself, so
test functions that take the value ``+inf`` (a generating function hitting
zero) are handled without overflow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from . import kernels as kern
from . import point_processes as pp
from .errors import EmptySample, QuadratureFailure, SpecError, TruncationTooLoose
from .mittag_leffler import sample_inverse_subordinator
from .stats import MCEstimate, mc_mean

POISSON_ABS_TOL = 1e-10
SERIES_TAIL_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class TestFunction:
    """Nonnegative function on ``[0, end]``, vanishing beyond ``end``.

    Stored through ``phi = 1 - exp(-f)``; ``breakpoints`` list interior
    discontinuities so that quadrature rules can split there.
    """

    __test__ = False  # not a pytest class

    phi_fn: Callable
    end: float
    breakpoints: tuple = ()

    def __post_init__(self):
        if not self.end >= 0:
            raise SpecError("support end must be nonnegative")
        bps = tuple(sorted(float(b) for b in self.breakpoints if 0.0 < b < self.end))
        object.__setattr__(self, "breakpoints", bps)

    @classmethod
    def from_f(cls, f, end, breakpoints=()):
        return cls(lambda x: -np.expm1(-np.asarray(f(x), dtype=float)), end, breakpoints)

    @classmethod
    def from_phi(cls, phi, end, breakpoints=()):
        return cls(phi, end, breakpoints)

    @classmethod
    def indicator(cls, value, a, b):
        """``value * 1_[a, b]``."""
        p = -math.expm1(-value)

        def phi(x):
            x = np.asarray(x, dtype=float)
            return np.where((x >= a) & (x <= b), p, 0.0)

        return cls(phi, float(b), (a,) if a > 0 else ())

    @classmethod
    def zero(cls, end=1.0):
        return cls(lambda x: np.zeros(np.shape(x)), end)

    def phi(self, x):
        x = np.asarray(x, dtype=float)
        vals = np.asarray(self.phi_fn(x), dtype=float)
        vals = np.where((x >= 0) & (x <= self.end), np.broadcast_to(vals, x.shape), 0.0)
        if np.any(vals < -1e-15) or np.any(vals > 1.0 + 1e-15):
            raise SpecError("test function must be nonnegative")
        return np.clip(vals, 0.0, 1.0)

    def f(self, x):
        with np.errstate(divide="ignore"):
            return -np.log1p(-self.phi(x))

    def scaled(self, c):
        """Test function ``c * f``."""
        return TestFunction.from_f(lambda x: c * self.f(x), self.end, self.breakpoints)


@dataclass(frozen=True)
class FunctionalValue:
    """Deterministic functional value with the error bound attached to it."""

    value: float
    error: float
    method: str
    terms: tuple = field(default=(), repr=False)

    def __float__(self):
        return float(self.value)


def _quad(g, a, b, points=(), epsabs=POISSON_ABS_TOL):
    if b <= a:
        return 0.0, 0.0
    pts = [p for p in points if a < p < b]
    val, err = integrate.quad(
        lambda x: float(g(np.array([x]))[0]),
        a,
        b,
        points=pts or None,
        epsabs=0.1 * epsabs,
        epsrel=1e-12,
        limit=500,
    )
    if not err <= epsabs:
        raise QuadratureFailure(f"quadrature error {err:.3g} exceeds {epsabs:.3g}")
    return val, err


def laplace_poisson(tf, density):
    """``exp(-int (1 - e^-f) lam)`` by adaptive quadrature."""
    density = kern.as_density(density)
    if tf.end == 0:
        return FunctionalValue(1.0, 0.0, "poisson")
    integral, err = _quad(lambda x: tf.phi(x) * density(x), 0.0, tf.end, tf.breakpoints)
    value = math.exp(-integral)
    return FunctionalValue(value, value * err, "poisson")


def _window(tf, kernel):
    end = tf.end
    if isinstance(kernel, kern.SpectralExpansion):
        end = min(end, kernel.window)
    return end


def _weighted_nodes(tf, kernel, n_quad):
    end = _window(tf, kernel)
    x, w = kern.gauss_legendre(0.0, end, n_quad, tf.breakpoints)
    return x, w * kernel.density(x) * tf.phi(x)


def _brute_terms(K, ww, n):
    """Tensor-product quadrature of ``int det K(x_i, x_j) prod phi`` for ``n <= 3``."""
    k = np.diag(K)
    if n == 1:
        return float(ww @ k)
    if n == 2:
        return float(ww @ (np.outer(k, k) - K**2) @ ww)
    if n == 3:
        # det of a symmetric 3x3 matrix expanded over the index triple
        a = np.einsum("i,j,k->ijk", k, k, k)
        b = np.einsum("i,jk->ijk", k, K**2)
        c = np.einsum("ij,jk,ki->ijk", K, K, K)
        det = a - b - b.transpose(1, 0, 2) - b.transpose(2, 1, 0) + 2.0 * c
        return float(np.einsum("ijk,i,j,k->", det, ww, ww, ww))
    raise ValueError("brute-force terms are only tabulated up to n = 3")


def _elementary_symmetric(lam, n_max):
    e = np.zeros(n_max + 1)
    e[0] = 1.0
    for x in lam:
        e[1:] = e[1:] + x * e[:-1]
    return e


def series_terms(tf, kernel, n_max=12, n_quad=24):
    """Integrals ``J_n = int det K(x_i, x_j) prod phi(x_i) Lambda(dx)`` for ``n = 1..n_max``.

    For ``n <= 3`` the tensor-product rule is summed directly. For larger
    ``n`` the same tensor rule is evaluated exactly as ``n! e_n(eig)`` with
    ``eig`` the spectrum of the weighted Nystrom matrix (sum of principal
    minors), which avoids the ``n_quad^n`` grid.
    """
    if isinstance(kernel, kern.PoissonIdentity):
        c = laplace_poisson(tf, kernel.density)
        mass = -math.log(c.value) if c.value > 0 else math.inf
        return np.array([mass**n for n in range(1, n_max + 1)]), mass
    x, ww = _weighted_nodes(tf, kernel, n_quad)
    K = kernel.matrix(x, x)
    r = np.sqrt(ww)
    eig = np.linalg.eigvalsh(r[:, None] * K * r[None, :])
    e = _elementary_symmetric(eig, n_max)
    J = np.array([math.factorial(n) * e[n] for n in range(1, n_max + 1)])
    for n in range(1, min(3, n_max) + 1):
        J[n - 1] = _brute_terms(K, ww, n)
    hadamard = float(ww @ np.diag(K))
    return J, hadamard


def tail_bound(c, n_max):
    """``sum_{n > n_max} c^n / n!`` bounded by ``c^(n_max+1) / (n_max+1)! * e^c``."""
    if c == 0:
        return 0.0
    log_b = (n_max + 1) * math.log(c) - math.lgamma(n_max + 2) + c
    return math.exp(log_b)


def laplace_dpp_series(tf, kernel, n_max=12, n_quad=24, tol=SERIES_TAIL_TOL):
    """Alternating expansion ``1 + sum (-1)^n / n! J_n`` of a DPP Laplace functional.

    The truncation error is certified with Hadamard's inequality,
    ``J_n <= c^n`` for ``c = int K(x, x) phi Lambda``.
    """
    J, c = series_terms(tf, kernel, n_max, n_quad)
    terms = np.array([(-1) ** n * J[n - 1] / math.factorial(n) for n in range(1, n_max + 1)])
    bound = tail_bound(c, n_max)
    if bound > tol:
        raise TruncationTooLoose(
            f"tail bound {bound:.3g} exceeds {tol:.3g}; raise n_max (c = {c:.3g})"
        )
    value = 1.0 + math.fsum(terms)
    return FunctionalValue(value, bound, "dpp-series", tuple(terms))


def laplace_dpp_fredholm(tf, kernel, n_quad=200):
    """``det(I - K_phi)`` with the symmetrized Nystrom discretization."""
    if isinstance(kernel, kern.PoissonIdentity):
        return laplace_poisson(tf, kernel.density)
    end = _window(tf, kernel)
    if end == 0:
        return FunctionalValue(1.0, 0.0, "dpp-fredholm")
    _, _, Kphi = kern.nystrom_matrix(kernel, 0.0, end, n_quad, tf.phi, tf.breakpoints)
    eig = kern.check_eigenvalues(np.linalg.eigvalsh(Kphi))
    value = float(np.exp(np.sum(np.log1p(-eig)))) if np.all(eig < 1) else 0.0
    # eigenvalues within rounding of zero carry the discretization noise floor
    err = float(n_quad * np.finfo(float).eps * max(1.0, np.abs(eig).sum()))
    return FunctionalValue(value, err, "dpp-fredholm")


def laplace_cox_mc(tf, spec, n_rep, rng):
    """Average of ``exp(-int phi d eta)`` over draws of the directing measure."""
    if n_rep < 1:
        raise EmptySample("n_rep must be positive")
    vals = np.empty(n_rep)
    base = None
    for r in range(n_rep):
        eta = pp.sample_directing_measure(spec.directing, tf.end, rng)
        if eta.kind == "rate":
            # eta = R * Leb: the integral against Lebesgue is shared by all draws
            if base is None:
                base = _quad(tf.phi, 0.0, tf.end, tf.breakpoints)[0]
            vals[r] = math.exp(-eta.rate * base)
        else:
            vals[r] = math.exp(-eta.integrate(tf.phi, tf.end, tf.breakpoints))
    return mc_mean(vals, "cox-mc")


def laplace_fpp_mc(tf, order, rate, n_rep, rng, h=None):
    """Average of ``exp(-rate int phi dY)`` over inverse-subordinator paths ``Y``.

    The Stieltjes integral is a midpoint sum on the path grid. Order one is
    the Poisson case and is evaluated deterministically.
    """
    if order == 1.0:
        v = laplace_poisson(tf, rate)
        return MCEstimate(v.value, v.error, n_rep, "poisson")
    if tf.end == 0:
        return MCEstimate(1.0, 0.0, n_rep, "fpp-mc")
    vals = np.empty(n_rep)
    for r in range(n_rep):
        path = sample_inverse_subordinator(order, tf.end, rng, h=h)
        mid = 0.5 * (path.times[1:] + path.times[:-1])
        vals[r] = math.exp(-rate * float(tf.phi(mid) @ np.diff(path.values)))
    return mc_mean(vals, "fpp-mc")


def empirical_laplace(tf, patterns):
    """Sample mean of ``exp(-sum f(T_i))`` over point patterns."""
    vals = []
    for pat in patterns:
        phi = tf.phi(pat.times)
        vals.append(float(np.prod(1.0 - phi)))
    return mc_mean(vals, "empirical")


# -- transforms of the branching process ---------------------------------


class ClanTransform:
    """Generating function of a clan founded by one immigrant group.

    ``F_k(x)`` is the generating function at ``s`` of the population at age
    ``x`` descending from one type-``k`` particle. It solves the backward
    equation ``F' = (G_nu(F) - F) / mu`` with ``F(0) = s``; the clan value is
    ``G_I(F(x))``. Laplace mode starts from ``exp(-s)``. The equation is
    integrated for ``H = 1 - F`` so that arguments close to one keep their
    relative accuracy.
    """

    def __init__(self, spec, s, horizon, mode="pgf", rtol=1e-11, atol=1e-22):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if s.size != spec.d:
            raise SpecError(f"s must have length {spec.d}")
        if mode == "pgf":
            if np.any(np.abs(s) > 1):
                raise SpecError("pgf mode needs |s_i| <= 1")
            h0 = 1.0 - s
        elif mode == "laplace":
            if np.any(s < 0):
                raise SpecError("laplace mode needs s >= 0")
            h0 = -np.expm1(-s)
        else:
            raise ValueError(f"unknown mode {mode!r}")
        self.spec = spec
        self.mode = mode
        self.s = s
        self.horizon = float(horizon)
        self._h0 = h0
        mu = spec.lifetimes

        def rhs(_t, H):
            g = np.array([law.pgf_complement(H) for law in spec.offspring])
            return (g - H) / mu

        if self.horizon > 0:
            self._sol = integrate.solve_ivp(
                rhs, (0.0, self.horizon), h0, method="DOP853",
                rtol=rtol, atol=atol, dense_output=True,
            )
            if not self._sol.success:
                raise QuadratureFailure(f"backward equation failed: {self._sol.message}")
        else:
            self._sol = None

    def _complement_one(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(x < 0) or np.any(x > self.horizon * (1 + 1e-12)):
            raise ValueError("age outside the integrated range")
        if self._sol is None:
            return np.tile(self._h0, (x.size, 1))
        return self._sol.sol(np.clip(x, 0.0, self.horizon)).T

    def one_particle(self, x):
        """``F(x)`` with shape ``(len(x), d)``."""
        return 1.0 - self._complement_one(x)

    def complement(self, x):
        """``1 - G_I(F(x))``, accurate when the clan value is close to one."""
        return self.spec.immigrant.pgf_complement(self._complement_one(x))

    def __call__(self, x):
        return 1.0 - self.complement(x)


def transform_test_function(clan, t):
    """Test function ``x -> 1 - G_I(F(t - x))`` on ``[0, t]``."""
    def phi(x):
        x = np.asarray(x, dtype=float)
        ages = np.clip(t - x, 0.0, t)
        return clan.complement(ages.ravel()).reshape(x.shape)

    return TestFunction.from_phi(phi, float(t))


def process_transform(spec, imm, t, s, mode="pgf", n_rep=2000, rng=None,
                      dpp_method="fredholm", n_quad=200):
    """Generating function (``pgf``) or Laplace transform of ``Z(t)``.

    Poisson and determinantal immigration give deterministic values
    (``FunctionalValue``); Cox and fractional Poisson immigration give
    ``MCEstimate``s and need ``rng``.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return FunctionalValue(1.0, 0.0, "empty-window")
    clan = ClanTransform(spec, s, t, mode)
    tf = transform_test_function(clan, t)
    if isinstance(imm, pp.HomogeneousPoisson):
        return laplace_poisson(tf, imm.rate)
    if isinstance(imm, pp.InhomogeneousPoisson):
        return laplace_poisson(tf, imm.density)
    if isinstance(imm, pp.DPP):
        if dpp_method == "series":
            return laplace_dpp_series(tf, imm.kernel)
        return laplace_dpp_fredholm(tf, imm.kernel, n_quad)
    if rng is None:
        raise ValueError("Monte Carlo families need an rng")
    if isinstance(imm, pp.Cox):
        return laplace_cox_mc(tf, imm, n_rep, rng)
    if isinstance(imm, pp.FPP):
        return laplace_fpp_mc(tf, imm.order, imm.rate, n_rep, rng)
    raise SpecError(f"unknown immigration family {imm!r}")


def empirical_transform(samples, s, mode="pgf"):
    """Sample mean of ``prod s_i^Z_i`` or ``exp(-<Z, s>)`` over population vectors."""
    Z = np.asarray(samples)
    if Z.size == 0:
        raise EmptySample("no population samples")
    Z = Z.reshape(Z.shape[0], -1) if Z.ndim > 1 else Z[:, None]
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if mode == "pgf":
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.prod(np.where(Z == 0, 1.0, s ** Z), axis=1)
    elif mode == "laplace":
        vals = np.exp(-(Z @ s))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return mc_mean(vals, f"empirical-{mode}")

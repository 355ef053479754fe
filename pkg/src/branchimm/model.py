"""Branching model definition and the linear algebra derived from it.

A model has ``d`` particle types. A type-``i`` particle lives an exponential
time with mean ``lifetimes[i]`` and is then replaced by a random offspring
vector drawn from ``offspring[i]``. Immigrant groups are drawn from
``immigrant``. All laws have finite support, so every moment is a finite sum.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
import numpy as np

from .errors import Degenerate, NonPrimitive, SpecError, ZeroQ

PMF_TOL = 1e-12
CRITICAL_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class DiscreteLaw:
    """Finite-support law on ``N_0^d``: row ``k`` of ``support`` has mass ``probs[k]``."""

    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        support = np.atleast_2d(np.asarray(self.support, dtype=np.int64))
        probs = np.asarray(self.probs, dtype=float).ravel()
        if support.shape[0] != probs.size:
            raise SpecError("support and probs have different lengths")
        if probs.size == 0:
            raise SpecError("empty law")
        if np.any(support < 0):
            raise SpecError("support vectors must be nonnegative")
        if np.any(probs < 0):
            raise SpecError("negative probability")
        if abs(probs.sum() - 1.0) > PMF_TOL:
            raise SpecError(f"probabilities sum to {float(probs.sum())!r}, not 1")
        support.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_pairs(cls, pairs, d=None):
        """Build from ``[(vector, prob), ...]``; scalars are allowed when ``d == 1``."""
        vecs, probs = [], []
        for vec, p in pairs:
            vecs.append(np.atleast_1d(np.asarray(vec, dtype=np.int64)))
            probs.append(float(p))
        support = np.vstack(vecs)
        if d is not None and support.shape[1] != d:
            raise SpecError(f"expected vectors of length {d}, got {support.shape[1]}")
        return cls(support, np.array(probs))

    @classmethod
    def point_mass(cls, vec):
        return cls(np.atleast_2d(vec), np.array([1.0]))

    @property
    def dim(self):
        return self.support.shape[1]

    @property
    def n_atoms(self):
        """Number of support points carrying positive mass."""
        return int(np.count_nonzero(self.probs > 0))

    def mean(self):
        return self.probs @ self.support

    def factorial_second(self):
        """Matrix ``E[X_j (X_k - 1{j=k})]``."""
        x = self.support.astype(float)
        second = np.einsum("m,mj,mk->jk", self.probs, x, x)
        return second - np.diag(self.mean())

    def pgf(self, s):
        """Generating function at ``s``; the last axis of ``s`` has length ``d``."""
        s = np.asarray(s, dtype=float)
        terms = np.prod(s[..., None, :] ** self.support, axis=-1)
        return terms @ self.probs

    def pgf_complement(self, h):
        """``1 - G(1 - h)`` computed without cancellation for small ``h``."""
        h = np.asarray(h, dtype=float)
        if np.any(h >= 1.0):
            return 1.0 - self.pgf(1.0 - h)
        logs = np.log1p(-h)[..., None, :] * self.support
        return -np.expm1(logs.sum(axis=-1)) @ self.probs

    def pgf_gradient(self, s):
        """Gradient of the generating function at a single point ``s``."""
        s = np.asarray(s, dtype=float)
        d = self.dim
        grad = np.zeros(d)
        for row, p in zip(self.support, self.probs):
            if p == 0:
                continue
            for j in range(d):
                if row[j] == 0:
                    continue
                e = row.copy()
                e[j] -= 1
                grad[j] += p * row[j] * np.prod(s**e)
        return grad

    def to_pairs(self):
        return [(row.tolist(), float(p)) for row, p in zip(self.support, self.probs)]


@dataclass(frozen=True, eq=False)
class BranchingSpec:
    """Full model: lifetimes, per-type offspring laws and the immigrant law."""

    lifetimes: np.ndarray
    offspring: tuple
    immigrant: DiscreteLaw

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.lifetimes, dtype=float))
        if mu.ndim != 1 or mu.size == 0:
            raise SpecError("lifetimes must be a nonempty vector")
        if not np.all(np.isfinite(mu)) or np.any(mu <= 0):
            raise SpecError("lifetimes must be positive")
        d = mu.size
        offspring = tuple(self.offspring)
        if len(offspring) != d:
            raise SpecError(f"need {d} offspring laws, got {len(offspring)}")
        for i, law in enumerate(offspring):
            if law.dim != d:
                raise SpecError(f"offspring law of type {i} has dimension {law.dim}, expected {d}")
        if self.immigrant.dim != d:
            raise SpecError(f"immigrant law has dimension {self.immigrant.dim}, expected {d}")
        if all(law.n_atoms < 2 for law in offspring):
            raise Degenerate("every offspring law is almost surely constant")
        mu.setflags(write=False)
        object.__setattr__(self, "lifetimes", mu)
        object.__setattr__(self, "offspring", offspring)

    @classmethod
    def from_pairs(cls, lifetimes, offspring, immigrant):
        """Convenience constructor from lists of ``(vector, probability)`` pairs."""
        mu = np.atleast_1d(np.asarray(lifetimes, dtype=float))
        d = mu.size
        laws = tuple(DiscreteLaw.from_pairs(p, d) for p in offspring)
        return cls(mu, laws, DiscreteLaw.from_pairs(immigrant, d))

    @property
    def d(self):
        return self.lifetimes.size

    def mean_matrix(self):
        """``M[i, j] = E[(nu_i)_j]``."""
        return np.vstack([law.mean() for law in self.offspring])

    def offspring_factorial(self):
        """Tensor ``F[i, j, k] = E[(nu_i)_j ((nu_i)_k - 1{j=k})]``."""
        return np.stack([law.factorial_second() for law in self.offspring])

    def immigrant_mean(self):
        return self.immigrant.mean()

    def with_lifetimes(self, lifetimes):
        return BranchingSpec(np.asarray(lifetimes, dtype=float), self.offspring, self.immigrant)

    def with_immigrant(self, immigrant):
        return BranchingSpec(self.lifetimes, self.offspring, immigrant)

    def to_dict(self):
        return {
            "lifetimes": self.lifetimes.tolist(),
            "offspring": [
                {"support": law.support.tolist(), "probs": law.probs.tolist()}
                for law in self.offspring
            ],
            "immigrant": {
                "support": self.immigrant.support.tolist(),
                "probs": self.immigrant.probs.tolist(),
            },
        }


def single_type(lifetime, offspring, immigrant=((1, 1.0),)):
    """Single-type model from ``{count: prob}`` style pairs, e.g. ``[(0, .5), (2, .5)]``."""
    return BranchingSpec.from_pairs([lifetime], [list(offspring)], list(immigrant))


class Criticality(str, enum.Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    SUPERCRITICAL = "supercritical"


@dataclass(frozen=True, eq=False)
class GeneratorSummary:
    """Generator ``A``, mean matrix ``M`` and normalized Perron data."""

    A: np.ndarray
    M: np.ndarray
    rho: float
    u: np.ndarray
    v: np.ndarray
    criticality: Criticality
    residual: float = field(default=0.0)


@dataclass(frozen=True, eq=False)
class LimitConstants:
    Q: float
    beta_gamma: float
    a: np.ndarray
    K_star: float


def generator_matrix(spec):
    """``A[i, j] = (E[(nu_i)_j] - 1{i=j}) / mu_i``."""
    M = spec.mean_matrix()
    return (M - np.eye(spec.d)) / spec.lifetimes[:, None]


def is_primitive(M):
    """Exact primitivity test on the zero pattern of a nonnegative matrix.

    A nonnegative ``d x d`` matrix is primitive iff its ``(d-1)^2 + 1``-th
    power is strictly positive (Wielandt), checked with boolean products.
    """
    P = np.asarray(M) > 0
    d = P.shape[0]
    if d == 1:
        return bool(P[0, 0])
    power = P.copy()
    for _ in range((d - 1) ** 2):
        power = (power.astype(np.int64) @ P.astype(np.int64)) > 0
    return bool(power.all())


def _power_iteration(B, x0, tol=1e-12, max_iter=100_000):
    x = x0 / x0.sum()
    for _ in range(max_iter):
        y = B @ x
        y = y / y.sum()
        if np.max(np.abs(y - x)) < tol:
            return y
        x = y
    return x


def _inverse_refine(A, lam, x, steps=3):
    d = A.shape[0]
    scale = 1.0 + np.max(np.abs(A))
    for _ in range(steps):
        sigma = lam + 1e-9 * scale
        try:
            y = np.linalg.solve(A - sigma * np.eye(d), x)
        except np.linalg.LinAlgError:
            break
        x = y / y.sum()
    return x


def perron_data(A):
    """Perron root and positive right/left eigenvectors of an irreducible ``A``.

    Power iteration on ``A + c I`` with ``c`` large enough to make the shifted
    matrix nonnegative, then inverse-iteration refinement of both vectors.
    Returns ``(rho, u, v)`` with ``sum(u) = 1`` and ``sum(u * v) = 1``.
    """
    A = np.asarray(A, dtype=float)
    d = A.shape[0]
    c = max(0.0, -np.min(np.diag(A))) + 1.0
    B = A + c * np.eye(d)
    u = _power_iteration(B, np.ones(d))
    v = _power_iteration(B.T, np.ones(d))
    lam = float(v @ A @ u / (v @ u))
    u = _inverse_refine(A, lam, u)
    v = _inverse_refine(A.T, lam, v)
    rho = float(v @ A @ u / (v @ u))
    u = u / u.sum()
    v = v / (u @ v)
    return rho, u, v


def build_generator(spec, critical_tol=CRITICAL_TOL):
    """Generator, Perron root and eigenvectors for a primitive model."""
    M = spec.mean_matrix()
    if not is_primitive(M):
        raise NonPrimitive("mean offspring matrix is not primitive")
    A = generator_matrix(spec)
    rho, u, v = perron_data(A)
    if np.any(u <= 0) or np.any(v <= 0):
        raise NonPrimitive("Perron vectors are not strictly positive")
    residual = max(np.max(np.abs(A @ u - rho * u)), np.max(np.abs(v @ A - rho * v)))
    if abs(rho) < critical_tol:
        crit = Criticality.CRITICAL
    elif rho < 0:
        crit = Criticality.SUBCRITICAL
    else:
        crit = Criticality.SUPERCRITICAL
    for arr in (A, M, u, v):
        arr.setflags(write=False)
    return GeneratorSummary(A, M, rho, u, v, crit, float(residual))


def quadratic_constant(spec, gen):
    """``Q = 1/2 sum_{ijk} d^2 G_i / dx_j dx_k (1) v_i u_j u_k / mu_i``."""
    F = spec.offspring_factorial()
    return 0.5 * float(np.einsum("ijk,i,j,k->", F, gen.v / spec.lifetimes, gen.u, gen.u))


def limit_constants(spec, gen, kernel_diag=1.0):
    """Constants of the long-time limits: ``Q``, the Gamma shape factor, ``a`` and ``K_star``.

    ``beta_gamma`` is computed as ``E[<I, u>] / Q`` by summing over the
    immigrant support and checked against ``<u, E[I]> / Q``.
    """
    Q = quadratic_constant(spec, gen)
    if Q <= 0:
        raise ZeroQ("quadratic constant Q vanished; offspring laws are degenerate")
    u_mean_I = float(gen.u @ spec.immigrant_mean())
    by_support = float(spec.immigrant.probs @ (spec.immigrant.support @ gen.u))
    assert abs(by_support - u_mean_I) <= 1e-12 * max(1.0, abs(u_mean_I))
    beta = by_support / Q
    a = u_mean_I * np.asarray(gen.v)
    return LimitConstants(Q, beta, a, float(kernel_diag))


def eigen_convert(gen, spec, convention="native"):
    """Renormalize ``(u, v)`` for another author's convention.

    ``weiner``: vectors for ``M - I`` with ``<u_W, 1> = 1`` and
    ``<u_W, v_W> = 1``. ``holte``: vectors for ``M`` with
    ``<u_H, v_H> = 1`` and ``<v_H, 1> = 1``. In general they satisfy
    ``(M - I) x = rho mu x``; they are eigenvectors only when ``rho = 0``.
    ``native`` returns ``(u, v)`` unchanged.
    """
    mu = spec.lifetimes
    u, v = np.asarray(gen.u), np.asarray(gen.v)
    if convention == "native":
        return u.copy(), v.copy()
    if convention == "weiner":
        D2 = np.sum(u * v / mu)
        return u.copy(), (v / mu) / D2
    if convention == "holte":
        D1 = np.sum(v / mu)
        D2 = np.sum(u * v / mu)
        return (D1 / D2) * u, v / (D1 * mu)
    raise ValueError(f"unknown convention {convention!r}")


def random_primitive_spec(rng, d, max_offspring=3, n_atoms=3, critical=False):
    """Random primitive model used by tests and demos.

    Offspring supports are random vectors with entries in ``0..max_offspring``.
    With ``critical=True`` every law is thinned towards the zero vector so
    that the Perron root of ``M`` becomes exactly one (when it exceeds one).
    """
    while True:
        laws = []
        for _ in range(d):
            support = rng.integers(0, max_offspring + 1, size=(n_atoms, d))
            probs = rng.dirichlet(np.ones(n_atoms))
            laws.append((support, probs))
        M = np.vstack([p @ s for s, p in laws])
        if not is_primitive(M):
            continue
        r = float(np.max(np.abs(np.linalg.eigvals(M))))
        if critical:
            if r <= 1.0:
                continue
            thinned = []
            for s, p in laws:
                s2 = np.vstack([s, np.zeros(d, dtype=np.int64)])
                p2 = np.append(p / r, 1.0 - 1.0 / r)
                thinned.append((s2, p2))
            laws = thinned
        lifetimes = rng.uniform(0.5, 2.0, size=d)
        imm = (rng.integers(0, 3, size=(2, d)), np.array([0.5, 0.5]))
        try:
            return BranchingSpec(
                lifetimes,
                tuple(DiscreteLaw(s, p / p.sum()) for s, p in laws),
                DiscreteLaw(*imm),
            )
        except Degenerate:
            continue


"""Determinantal kernels, reference densities and Nystrom discretization.

A kernel is paired with the density ``lam(x)`` of its reference measure
``Lambda(dx) = lam(x) dx``. Joint intensities are taken with respect to
``Lambda``, so the first intensity of the point process is
``K(x, x) lam(x)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .errors import EigenOutOfRange, SpecError

EIGEN_CLIP_TOL = 1e-8


@dataclass(frozen=True)
class ConstantDensity:
    rate: float

    def __post_init__(self):
        if not self.rate >= 0:
            raise SpecError("density rate must be nonnegative")

    def __call__(self, x):
        return np.full(np.shape(x), float(self.rate))

    def sup(self, a, b):
        return float(self.rate)

    def integral(self, a, b):
        return float(self.rate) * (b - a)

    @property
    def limit(self):
        return float(self.rate)

    def to_dict(self):
        return {"kind": "constant", "rate": self.rate}


@dataclass(frozen=True)
class ExponentialDensity:
    """``lam(x) = rate_inf * exp(delta * x)``."""

    rate_inf: float
    delta: float = 0.0

    def __post_init__(self):
        if not self.rate_inf > 0:
            raise SpecError("rate_inf must be positive")

    def __call__(self, x):
        return self.rate_inf * np.exp(self.delta * np.asarray(x, dtype=float))

    def sup(self, a, b):
        return float(max(self(a), self(b)))

    def integral(self, a, b):
        if self.delta == 0:
            return self.rate_inf * (b - a)
        return self.rate_inf * (np.exp(self.delta * b) - np.exp(self.delta * a)) / self.delta

    def to_dict(self):
        return {"kind": "exponential", "rate_inf": self.rate_inf, "delta": self.delta}


def as_density(density):
    """Accept a number, a density object or a vectorized callable."""
    if isinstance(density, (int, float, np.floating, np.integer)):
        return ConstantDensity(float(density))
    if callable(density):
        return density
    raise SpecError(f"cannot interpret {density!r} as a density")


def density_sup(density, a, b, envelope=None):
    if envelope is not None:
        return float(envelope)
    if hasattr(density, "sup"):
        return density.sup(a, b)
    raise SpecError("a callable density needs an explicit envelope bound")


@dataclass(frozen=True)
class PoissonIdentity:
    """``K(x, y) = 1{x = y}``: with a diffuse reference measure, the Poisson process."""

    density: Callable = field(default_factory=lambda: ConstantDensity(1.0))
    stationary = True

    def __post_init__(self):
        object.__setattr__(self, "density", as_density(self.density))

    def diag(self, x):
        return np.ones(np.shape(x))

    def matrix(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return (x[:, None] == y[None, :]).astype(float)

    @property
    def k_star(self):
        return 1.0


@dataclass(frozen=True)
class GinibreGaussian:
    """``K(x, y) = exp(-(x - y)^2 / (2 scale^2)) / pi``."""

    scale: float = 1.0
    density: Callable = field(default_factory=lambda: ConstantDensity(1.0))
    stationary = True

    def __post_init__(self):
        if not self.scale > 0:
            raise SpecError("scale must be positive")
        object.__setattr__(self, "density", as_density(self.density))

    def diag(self, x):
        return np.full(np.shape(x), 1.0 / np.pi)

    def matrix(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        diff = x[:, None] - y[None, :]
        return np.exp(-0.5 * (diff / self.scale) ** 2) / np.pi

    @property
    def k_star(self):
        return 1.0 / np.pi


@dataclass(frozen=True)
class SpectralExpansion:
    """``K(x, y) = sum_n eig_n phi_n(x) phi_n(y)`` on ``[0, window]``.

    ``basis`` holds vectorized callables orthonormal in ``L^2(Lambda)`` on
    the window; the kernel vanishes outside it.
    """

    eigenvalues: tuple
    basis: tuple
    window: float
    density: Callable = field(default_factory=lambda: ConstantDensity(1.0))
    stationary = False

    def __post_init__(self):
        eig = tuple(float(e) for e in self.eigenvalues)
        if len(eig) != len(self.basis):
            raise SpecError("need one basis function per eigenvalue")
        bad = [e for e in eig if not 0.0 <= e <= 1.0]
        if bad:
            raise EigenOutOfRange(f"spectral eigenvalues must lie in [0, 1], got {bad}")
        if not self.window > 0:
            raise SpecError("window must be positive")
        object.__setattr__(self, "eigenvalues", eig)
        object.__setattr__(self, "basis", tuple(self.basis))
        object.__setattr__(self, "density", as_density(self.density))

    @property
    def rank(self):
        return len(self.eigenvalues)

    def features(self, x):
        """Matrix ``Phi[k, n] = phi_n(x_k)``, zero outside the window."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        inside = (x >= 0) & (x <= self.window)
        cols = [np.where(inside, np.broadcast_to(phi(x), x.shape), 0.0) for phi in self.basis]
        return np.stack(cols, axis=-1) if cols else np.zeros((x.size, 0))

    def diag(self, x):
        F = self.features(x)
        return (F**2) @ np.asarray(self.eigenvalues)

    def matrix(self, x, y):
        Fx = self.features(x)
        Fy = self.features(y)
        return (Fx * np.asarray(self.eigenvalues)) @ Fy.T


def cosine_basis(rank, window, rate=1.0):
    """Cosine functions orthonormal in ``L^2(rate * dx)`` on ``[0, window]``."""
    c0 = 1.0 / np.sqrt(rate * window)
    cn = np.sqrt(2.0 / (rate * window))

    def make(n):
        if n == 0:
            return lambda x: np.full(np.shape(x), c0)
        return lambda x: cn * np.cos(n * np.pi * np.asarray(x, dtype=float) / window)

    return tuple(make(n) for n in range(rank))


def spectral_cosine(eigenvalues, window, rate=1.0):
    """Spectral kernel with a cosine basis and constant reference density."""
    basis = cosine_basis(len(eigenvalues), window, rate)
    return SpectralExpansion(tuple(eigenvalues), basis, window, ConstantDensity(rate))


def joint_intensity(kernel, points):
    """``det(K(x_i, x_j))``, the n-point correlation density w.r.t. ``Lambda^n``."""
    x = np.atleast_1d(np.asarray(points, dtype=float))
    if x.size == 0:
        raise ValueError("need at least one point")
    return float(np.linalg.det(kernel.matrix(x, x)))


@lru_cache(maxsize=64)
def legendre_nodes(n):
    """Gauss-Legendre nodes and weights on ``[-1, 1]`` (cached, read-only)."""
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(a, b, n, breakpoints=()):
    """Composite Gauss-Legendre rule on ``[a, b]`` split at ``breakpoints``.

    Nodes are shared between pieces in proportion to their length (at least 4
    per piece).
    """
    cuts = sorted({float(a), float(b), *[float(c) for c in breakpoints if a < c < b]})
    lengths = np.diff(cuts)
    total = cuts[-1] - cuts[0]
    nodes, weights = [], []
    for lo, hi, length in zip(cuts[:-1], cuts[1:], lengths):
        m = max(4, int(round(n * length / total)))
        xi, wi = legendre_nodes(m)
        nodes.append(0.5 * (hi - lo) * xi + 0.5 * (hi + lo))
        weights.append(0.5 * (hi - lo) * wi)
    return np.concatenate(nodes), np.concatenate(weights)


def nystrom_matrix(kernel, a, b, n_quad, weight=None, breakpoints=()):
    """Symmetrized Nystrom matrix ``W^1/2 K W^1/2`` with ``W = diag(w lam g)``.

    ``weight`` is an optional nonnegative function ``g`` multiplying the
    reference measure (used for ``1 - exp(-f)`` in Fredholm determinants).
    Returns ``(nodes, effective_weights, matrix)``.
    """
    x, w = gauss_legendre(a, b, n_quad, breakpoints)
    w = w * kernel.density(x)
    if weight is not None:
        w = w * np.asarray(weight(x), dtype=float)
    r = np.sqrt(np.clip(w, 0.0, None))
    K = kernel.matrix(x, x)
    return x, w, r[:, None] * K * r[None, :]


def check_eigenvalues(eigvals, tol=EIGEN_CLIP_TOL):
    """Clip eigenvalues in ``(1, 1 + tol]`` to one; raise beyond that."""
    eigvals = np.asarray(eigvals, dtype=float)
    top = eigvals.max(initial=0.0)
    if top > 1.0 + tol:
        raise EigenOutOfRange(f"kernel eigenvalue {top:.6g} exceeds 1 on the window")
    bottom = eigvals.min(initial=0.0)
    if bottom < -tol:
        raise EigenOutOfRange(f"kernel is not nonnegative definite (eigenvalue {bottom:.3g})")
    return np.clip(eigvals, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class NystromEigen:
    """Discrete eigen-decomposition of a kernel operator on ``[a, b]``."""

    kernel: object
    nodes: np.ndarray
    weights: np.ndarray
    eigenvalues: np.ndarray
    vectors: np.ndarray

    def eigenfunctions(self, x, idx):
        """Nystrom-interpolated eigenfunctions ``phi_n(x)`` for ``n in idx``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        r = np.sqrt(self.weights)
        Kx = self.kernel.matrix(x, self.nodes)
        coeff = (r[:, None] * self.vectors[:, idx]) / self.eigenvalues[idx]
        return Kx @ coeff


@lru_cache(maxsize=32)
def nystrom_eigen(kernel, a, b, n_quad):
    """Cached eigen-decomposition used by the DPP sampler."""
    x, w, K = nystrom_matrix(kernel, a, b, n_quad)
    eigvals, vecs = np.linalg.eigh(K)
    eigvals = check_eigenvalues(eigvals)
    return NystromEigen(kernel, x, w, eigvals, vecs)

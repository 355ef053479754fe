"""Immigration mechanisms and their samplers on a window ``(0, T]``."""
from __future__ import annotations

import csv
import io
from functools import lru_cache
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from . import kernels as kern
from .errors import BadEnvelope, SpecError
from .mittag_leffler import (
    sample_inverse_subordinator,
    sample_mittag_leffler,
)


@dataclass(frozen=True, eq=False)
class PointPattern:
    """Sorted, duplicate-free epochs in ``(0, window_end]``."""

    times: np.ndarray
    window_end: float

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).ravel()
        if t.size:
            if np.any(np.diff(t) <= 0):
                raise ValueError("times must be strictly increasing")
            if t[0] <= 0 or t[-1] > self.window_end:
                raise ValueError("times must lie in (0, window_end]")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    def __len__(self):
        return self.times.size

    def count(self, a=0.0, b=None):
        b = self.window_end if b is None else b
        return int(np.count_nonzero((self.times > a) & (self.times <= b)))

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time"])
        for t in self.times:
            w.writerow([repr(float(t))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path, window_end):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        return cls(np.array([float(r[0]) for r in rows[1:]]), window_end)


def _pattern(times, T):
    times = np.sort(np.asarray(times, dtype=float))
    times = times[(times > 0) & (times <= T)]
    if times.size > 1:
        # ties have probability zero; drop any produced by rounding
        keep = np.concatenate([[True], np.diff(times) > 0])
        times = times[keep]
    return PointPattern(times, float(T))


# -- directing measures for Cox processes ---------------------------------


@dataclass(frozen=True)
class DeterministicRate:
    """Degenerate directing measure ``rate * Leb``."""

    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise SpecError("rate must be positive")


@dataclass(frozen=True)
class GammaMixedRate:
    """``eta = R * Leb`` with ``R ~ Gamma(shape, rate)``."""

    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise SpecError("shape and rate must be positive")


@dataclass(frozen=True)
class ShotNoise:
    """Shot-noise intensity ``sum_j amplitude * exp(-decay (x - c_j)) 1{x >= c_j}``.

    Shot epochs ``c_j`` form a Poisson process of rate ``arrival_rate`` started
    at time zero.
    """

    arrival_rate: float
    decay: float
    amplitude: float = 1.0

    def __post_init__(self):
        if not (self.arrival_rate > 0 and self.decay > 0 and self.amplitude > 0):
            raise SpecError("shot-noise parameters must be positive")

    def mean_mass(self, T):
        """Campbell formula for ``E[eta((0, T])]``."""
        k = self.decay
        return self.arrival_rate * self.amplitude / k * (T - (1.0 - np.exp(-k * T)) / k)


@dataclass(frozen=True, eq=False)
class DirectingRealization:
    """One draw of a Cox directing measure on ``(0, T]``."""

    kind: str
    T: float
    rate: float = 0.0
    shots: np.ndarray = field(default_factory=lambda: np.zeros(0))
    decay: float = 0.0
    amplitude: float = 0.0

    def mass(self, a=0.0, b=None):
        b = self.T if b is None else b
        if self.kind == "rate":
            return self.rate * (b - a)
        k, c = self.decay, self.shots
        lo = np.maximum(a, c)
        hi = np.full_like(c, b)
        ok = hi > lo
        vals = (np.exp(-k * (lo[ok] - c[ok])) - np.exp(-k * (hi[ok] - c[ok]))) / k
        return self.amplitude * float(vals.sum())

    def integrate(self, phi, end=None, breakpoints=(), n_nodes=32):
        """``int_0^end phi d eta``; ``breakpoints`` mark discontinuities of ``phi``."""
        end = self.T if end is None else min(end, self.T)
        if self.kind == "rate":
            xs, ws = kern.gauss_legendre(0.0, end, 4 * n_nodes, breakpoints)
            return self.rate * float(ws @ phi(xs))
        xi, wi = kern.legendre_nodes(n_nodes)
        total = 0.0
        for c in self.shots[self.shots < end]:
            cuts = sorted({c, end, *[b for b in breakpoints if c < b < end]})
            for lo, hi in zip(cuts[:-1], cuts[1:]):
                x = 0.5 * (hi - lo) * xi + 0.5 * (hi + lo)
                vals = phi(x) * np.exp(-self.decay * (x - c))
                total += 0.5 * (hi - lo) * float(wi @ vals)
        return self.amplitude * total


def sample_directing_measure(directing, T, rng):
    if isinstance(directing, DeterministicRate):
        return DirectingRealization("rate", T, rate=directing.rate)
    if isinstance(directing, GammaMixedRate):
        r = rng.gamma(directing.shape, 1.0 / directing.rate)
        return DirectingRealization("rate", T, rate=float(r))
    if isinstance(directing, ShotNoise):
        shots = sample_poisson(directing.arrival_rate, T, rng).times
        return DirectingRealization(
            "shots", T, shots=shots, decay=directing.decay, amplitude=directing.amplitude
        )
    raise SpecError(f"unknown directing measure {directing!r}")


# -- immigration families -------------------------------------------------


@dataclass(frozen=True)
class HomogeneousPoisson:
    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise SpecError("rate must be positive")


@dataclass(frozen=True)
class InhomogeneousPoisson:
    """Poisson immigration with density ``density``; ``envelope`` bounds it on the window."""

    density: Callable
    envelope: float = None


@dataclass(frozen=True)
class Cox:
    directing: Union[DeterministicRate, GammaMixedRate, ShotNoise]


@dataclass(frozen=True)
class FPP:
    order: float
    rate: float

    def __post_init__(self):
        if not 0.0 < self.order <= 1.0:
            raise SpecError("FPP order must lie in (0, 1]")
        if not self.rate > 0:
            raise SpecError("rate must be positive")


@dataclass(frozen=True)
class DPP:
    kernel: object


ImmigrationSpec = Union[HomogeneousPoisson, InhomogeneousPoisson, Cox, FPP, DPP]


# -- samplers -------------------------------------------------------------


def _exponential_epochs(rate, T, rng):
    mean = rate * T
    chunk = int(mean + 6.0 * np.sqrt(mean) + 16)
    out = []
    level = 0.0
    while level <= T:
        cs = level + np.cumsum(rng.standard_exponential(chunk)) / rate
        out.append(cs)
        level = cs[-1]
    t = np.concatenate(out)
    return t[t <= T]


def sample_poisson(density, T, rng, envelope=None):
    """Poisson pattern on ``(0, T]`` with intensity ``density``.

    Constant rates use exponential interarrivals; other densities are thinned
    from a homogeneous process at ``envelope`` (or ``density.sup``).
    """
    if isinstance(density, (int, float, np.floating, np.integer)) or isinstance(
        density, kern.ConstantDensity
    ):
        rate = float(density.rate if isinstance(density, kern.ConstantDensity) else density)
        if rate < 0:
            raise SpecError("rate must be nonnegative")
        if rate == 0 or T <= 0:
            return PointPattern(np.zeros(0), float(T))
        return _pattern(_exponential_epochs(rate, T, rng), T)
    bound = kern.density_sup(density, 0.0, T, envelope)
    if bound <= 0:
        return PointPattern(np.zeros(0), float(T))
    proposals = _exponential_epochs(bound, T, rng)
    lam = np.asarray(density(proposals), dtype=float)
    if np.any(lam > bound * (1 + 1e-12)):
        raise BadEnvelope(f"density {lam.max():.6g} exceeds envelope {bound:.6g}")
    keep = rng.random(proposals.size) * bound < lam
    return _pattern(proposals[keep], T)


def sample_cox(spec, T, rng):
    """Draw a directing measure, then a Poisson pattern given it."""
    eta = sample_directing_measure(spec.directing, T, rng)
    if eta.kind == "rate":
        return sample_poisson(eta.rate, T, rng)
    # each shot seeds Poisson offspring with a truncated exponential profile
    k, amp = eta.decay, eta.amplitude
    pts = []
    for c in eta.shots:
        span = T - c
        mass = amp * (1.0 - np.exp(-k * span)) / k
        n = rng.poisson(mass)
        if n:
            u = rng.random(n)
            pts.append(c - np.log1p(-u * (1.0 - np.exp(-k * span))) / k)
    times = np.concatenate(pts) if pts else np.zeros(0)
    return _pattern(times, T)


def sample_fpp(order, rate, T, rng):
    """Renewal pattern with Mittag-Leffler interarrivals truncated to ``(0, T]``."""
    chunk = 64
    out = []
    level = 0.0
    while level <= T:
        cs = level + np.cumsum(sample_mittag_leffler(order, rate, rng, chunk))
        out.append(cs)
        level = cs[-1]
        chunk = min(chunk * 2, 1 << 16)
    t = np.concatenate(out)
    return _pattern(t[t <= T], T)


def fpp_time_change_count(order, rate, T, rng, h=None):
    """Counting variable ``N(Y(T))`` built from the time-change representation.

    Returns ``(count, Y(T))``; ``rate * Y(T)`` is its conditional mean.
    """
    y = sample_inverse_subordinator(order, T, rng, h=h).values[-1]
    return int(rng.poisson(rate * y)), float(y)


def _hkpv(features, n_sel, T, density, rng, bound_grid=2049, batch=64, bound=None):
    """Sequential sampler for the projection DPP spanned by ``features``.

    ``features(x)`` returns the ``(len(x), n_sel)`` matrix of the selected
    eigenfunctions, orthonormal in ``L^2(density dx)`` on ``[0, T]``. Points
    are drawn by rejection from the uniform law on the window. ``bound``
    overrides the grid estimate of ``max sum features^2 density``.
    """
    if bound is None:
        grid = np.linspace(0.0, T, bound_grid)
        bound = float(np.max(np.sum(features(grid) ** 2, axis=1) * density(grid)))
    bound = 1.25 * bound
    basis = np.zeros((0, n_sel))
    pts = []
    for _ in range(n_sel):
        while True:
            x = T * rng.random(batch)
            V = features(x)
            norm2 = np.sum(V**2, axis=1)
            proj = V @ basis.T
            dens = (norm2 - np.sum(proj**2, axis=1)) * density(x)
            if dens.max() > bound:
                bound = 1.5 * float(dens.max())
                continue
            accept = rng.random(batch) * bound < dens
            if accept.any():
                j = int(np.argmax(accept))
                xj = x[j]
                break
        pts.append(xj)
        w = V[j] - basis.T @ proj[j]
        nw = np.linalg.norm(w)
        if nw > 0:
            basis = np.vstack([basis, w / nw])
    return np.array(pts)


def sample_dpp(kernel, T, rng, n_quad=None, envelope=None):
    """DPP pattern on ``(0, T]``.

    The identity kernel delegates to the Poisson sampler. Spectral kernels
    thin their eigenfunctions by Bernoulli(eigenvalue) coins; Gaussian
    kernels are first Nystrom-discretized on the window.
    """
    if isinstance(kernel, kern.PoissonIdentity):
        return sample_poisson(kernel.density, T, rng, envelope=envelope)
    density = kernel.density
    if isinstance(kernel, kern.SpectralExpansion):
        if T > kernel.window:
            raise SpecError("window exceeds the spectral kernel's support")
        eig = np.asarray(kernel.eigenvalues)
        sel = np.flatnonzero(rng.random(eig.size) < eig)
        if sel.size == 0:
            return PointPattern(np.zeros(0), float(T))
        feats = lambda x: kernel.features(x)[:, sel]  # noqa: E731
        return _pattern(_hkpv(feats, sel.size, T, density, rng), T)
    if n_quad is None:
        # resolve the correlation length across the whole window
        n_quad = max(200, int(np.ceil(12.0 * T / getattr(kernel, "scale", 1.0))))
    ny = kern.nystrom_eigen(kernel, 0.0, float(T), int(n_quad))
    eig = ny.eigenvalues
    usable = np.flatnonzero(eig > 1e-12)
    sel = usable[rng.random(usable.size) < eig[usable]]
    if sel.size == 0:
        return PointPattern(np.zeros(0), float(T))
    grid_sq = _grid_squares(ny, float(T))
    bound = float(np.max(grid_sq[:, sel].sum(axis=1)))
    feats = lambda x: ny.eigenfunctions(x, sel)  # noqa: E731
    return _pattern(_hkpv(feats, sel.size, T, density, rng, bound=bound), T)


@lru_cache(maxsize=32)
def _grid_squares(ny, T, bound_grid=2049):
    """``phi_n(x)^2 density(x)`` for every usable eigenfunction on a fine grid."""
    grid = np.linspace(0.0, T, bound_grid)
    idx = np.arange(ny.eigenvalues.size)
    out = np.zeros((grid.size, idx.size))
    usable = idx[ny.eigenvalues > 1e-12]
    out[:, usable] = ny.eigenfunctions(grid, usable) ** 2 * ny.kernel.density(grid)[:, None]
    return out


def sample_immigration(spec, T, rng, **opts):
    """Dispatch on the immigration family."""
    if isinstance(spec, HomogeneousPoisson):
        return sample_poisson(spec.rate, T, rng)
    if isinstance(spec, InhomogeneousPoisson):
        return sample_poisson(spec.density, T, rng, envelope=spec.envelope)
    if isinstance(spec, Cox):
        return sample_cox(spec, T, rng)
    if isinstance(spec, FPP):
        return sample_fpp(spec.order, spec.rate, T, rng)
    if isinstance(spec, DPP):
        return sample_dpp(spec.kernel, T, rng, **opts)
    raise SpecError(f"unknown immigration family {spec!r}")


def first_intensity(spec):
    """Callable ``x -> E[Phi(dx)] / dx`` where it is deterministic, else ``None``."""
    if isinstance(spec, HomogeneousPoisson):
        return kern.ConstantDensity(spec.rate)
    if isinstance(spec, InhomogeneousPoisson):
        return spec.density
    if isinstance(spec, DPP):
        k = spec.kernel
        return lambda x: k.diag(x) * k.density(x)
    if isinstance(spec, Cox):
        d = spec.directing
        if isinstance(d, DeterministicRate):
            return kern.ConstantDensity(d.rate)
        if isinstance(d, GammaMixedRate):
            return kern.ConstantDensity(d.shape / d.rate)
    return None

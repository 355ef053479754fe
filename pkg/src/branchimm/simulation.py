"""Exact event-driven simulation of the branching process with and without immigration.

The inner loop is compiled with numba. Each clan (the descendants of one
immigrant group) is simulated on its own; the population at a snapshot is
the sum of the clans founded before it.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np

from . import point_processes as pp
from .errors import PopulationOverflow, SpecError

DEFAULT_CAP = 10_000_000


def replicate_rng(seed, index, stream=0):
    """Generator for replicate ``index`` of batch ``stream``; a pure function of its arguments."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(index)))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True, eq=False)
class CompiledSpec:
    """Flat arrays for the compiled kernel; law ``d`` is the immigrant law."""

    d: int
    rates: np.ndarray
    cdf: np.ndarray
    support: np.ndarray
    n_atoms: np.ndarray


def compile_spec(spec):
    laws = list(spec.offspring) + [spec.immigrant]
    width = max(law.support.shape[0] for law in laws)
    d = spec.d
    cdf = np.ones((d + 1, width))
    support = np.zeros((d + 1, width, d), dtype=np.int64)
    n_atoms = np.zeros(d + 1, dtype=np.int64)
    for i, law in enumerate(laws):
        m = law.support.shape[0]
        c = np.cumsum(law.probs)
        c[-1] = 1.0
        cdf[i, :m] = c
        support[i, :m] = law.support
        n_atoms[i] = m
    return CompiledSpec(d, 1.0 / spec.lifetimes, cdf, support, n_atoms)


@numba.njit(cache=True, nogil=True)
def _draw_atom(cdf_row, m, u):
    for a in range(m - 1):
        if u < cdf_row[a]:
            return a
    return m - 1


@numba.njit(cache=True, nogil=True)
def _run_clan(counts, ages, out, rates, cdf, support, n_atoms, cap, gen):
    """Evolve ``counts`` through the sorted ``ages`` and add the state at each to ``out``.

    Returns 0, or 1 when the population exceeds ``cap``.
    """
    d = counts.shape[0]
    t = 0.0
    j = 0
    n_age = ages.shape[0]
    while j < n_age:
        rate = 0.0
        for i in range(d):
            rate += counts[i] * rates[i]
        if rate == 0.0:
            break
        t += gen.standard_exponential() / rate
        while j < n_age and ages[j] < t:
            for i in range(d):
                out[j, i] += counts[i]
            j += 1
        if j == n_age:
            break
        u = gen.random() * rate
        k = d - 1
        acc = 0.0
        for i in range(d):
            acc += counts[i] * rates[i]
            if u < acc:
                k = i
                break
        while counts[k] == 0:  # guard against rounding at the top of the range
            k -= 1
        a = _draw_atom(cdf[k], n_atoms[k], gen.random())
        counts[k] -= 1
        total = 0
        for i in range(d):
            counts[i] += support[k, a, i]
            total += counts[i]
        if total > cap:
            return 1
    while j < n_age:
        for i in range(d):
            out[j, i] += counts[i]
        j += 1
    return 0


@numba.njit(cache=True, nogil=True)
def _run_superposition(epochs, snaps, out, rates, cdf, support, n_atoms, cap, gen):
    """Clans founded at ``epochs`` (sorted), each with a fresh immigrant group."""
    d = out.shape[1]
    imm = d
    counts = np.zeros(d, dtype=np.int64)
    n_snap = snaps.shape[0]
    ages = np.empty(n_snap)
    for e in range(epochs.shape[0]):
        te = epochs[e]
        first = 0
        while first < n_snap and snaps[first] < te:
            first += 1
        if first == n_snap:
            break
        a = _draw_atom(cdf[imm], n_atoms[imm], gen.random())
        for i in range(d):
            counts[i] = support[imm, a, i]
        m = n_snap - first
        for q in range(m):
            ages[q] = snaps[first + q] - te
        status = _run_clan(
            counts, ages[:m], out[first:], rates, cdf, support, n_atoms, cap, gen
        )
        if status != 0:
            return status
    return 0


def _init_counts(spec, init, rng, cs):
    d = spec.d
    if isinstance(init, str):
        if init != "immigrant":
            raise SpecError(f"unknown initial condition {init!r}")
        k = int(np.searchsorted(cs.cdf[d, : cs.n_atoms[d]], rng.random(), side="right"))
        return cs.support[d, min(k, cs.n_atoms[d] - 1)].copy()
    if np.isscalar(init):
        c = np.zeros(d, dtype=np.int64)
        c[int(init)] = 1
        return c
    c = np.asarray(init, dtype=np.int64).copy()
    if c.shape != (d,) or np.any(c < 0):
        raise SpecError("initial vector must be a nonnegative length-d vector")
    return c


def _snapshots(horizon, snapshots):
    if snapshots is None:
        snaps = np.array([float(horizon)])
    else:
        snaps = np.asarray(snapshots, dtype=float).ravel()
        if np.any(np.diff(snaps) < 0):
            raise ValueError("snapshots must be sorted")
        if snaps.size and (snaps[0] < 0 or snaps[-1] > horizon):
            raise ValueError("snapshots must lie in [0, horizon]")
    return snaps


@dataclass(frozen=True, eq=False)
class SimPath:
    """Population vectors at snapshot times for one replicate."""

    times: np.ndarray
    counts: np.ndarray
    pattern: object = None
    seed: object = None

    def at(self, t):
        idx = int(np.searchsorted(self.times, t, side="right")) - 1
        if idx < 0:
            raise ValueError("time precedes the first snapshot")
        return self.counts[idx]


def simulate_no_immigration(spec, init, horizon, rng, snapshots=None, cap=DEFAULT_CAP,
                            compiled=None):
    """Population of a clan started from ``init`` at ``horizon`` (or at ``snapshots``).

    ``init`` is a type index (one particle of that type), ``"immigrant"`` (a
    group drawn from the immigrant law) or an explicit count vector. Returns a
    count vector, or a ``SimPath`` when ``snapshots`` are given.
    """
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    cs = compiled or compile_spec(spec)
    counts = _init_counts(spec, init, rng, cs)
    snaps = _snapshots(horizon, snapshots)
    out = np.zeros((snaps.size, spec.d), dtype=np.int64)
    status = _run_clan(counts, snaps, out, cs.rates, cs.cdf, cs.support, cs.n_atoms,
                       int(cap), rng)
    if status:
        raise PopulationOverflow(f"population exceeded the cap of {int(cap)} particles")
    if snapshots is None:
        return out[0]
    return SimPath(snaps, out)


def simulate_with_immigration(spec, imm, horizon, rng, snapshots=None, cap=DEFAULT_CAP,
                              founding_immigrant=False, compiled=None, seed=None, **opts):
    """One replicate of ``Z`` at the snapshot times.

    The immigration pattern on ``(0, horizon]`` is drawn first, then every
    clan is simulated forward from its founding epoch. With
    ``founding_immigrant`` an extra group joins at time zero.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    cs = compiled or compile_spec(spec)
    snaps = _snapshots(horizon, snapshots)
    pattern = pp.sample_immigration(imm, horizon, rng, **opts)
    epochs = pattern.times
    if founding_immigrant:
        epochs = np.concatenate([[0.0], epochs])
    out = np.zeros((snaps.size, spec.d), dtype=np.int64)
    status = _run_superposition(epochs, snaps, out, cs.rates, cs.cdf, cs.support,
                                cs.n_atoms, int(cap), rng)
    if status:
        raise PopulationOverflow(f"population exceeded the cap of {int(cap)} particles")
    return SimPath(snaps, out, pattern, seed)


def clan_contributions(spec, imm, horizon, rng, cap=DEFAULT_CAP):
    """Per-clan populations at ``horizon``: array ``(n_clans, d)`` plus the epochs."""
    cs = compile_spec(spec)
    pattern = pp.sample_immigration(imm, horizon, rng)
    rows = []
    for te in pattern.times:
        counts = _init_counts(spec, "immigrant", rng, cs)
        out = np.zeros((1, spec.d), dtype=np.int64)
        status = _run_clan(counts, np.array([horizon - te]), out, cs.rates, cs.cdf,
                           cs.support, cs.n_atoms, int(cap), rng)
        if status:
            raise PopulationOverflow("clan exceeded the population cap")
        rows.append(out[0])
    arr = np.array(rows, dtype=np.int64).reshape(-1, spec.d)
    return arr, pattern.times


def _chunks(n, k):
    bounds = np.linspace(0, n, k + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def simulate_batch(spec, imm, horizon, n_rep, seed, snapshots=None, threads=1,
                   founding_immigrant=False, cap=DEFAULT_CAP, stream=0, **opts):
    """``n_rep`` replicates of ``Z`` as an int64 array ``(n_rep, n_snap, d)``.

    ``imm=None`` simulates clans without immigration started from
    ``opts["init"]`` (default: one immigrant group). Replicate ``r`` uses
    ``replicate_rng(seed, r, stream)``, so results do not depend on
    ``threads``.
    """
    cs = compile_spec(spec)
    snaps = _snapshots(horizon, snapshots)
    out = np.zeros((n_rep, snaps.size, spec.d), dtype=np.int64)
    init = opts.pop("init", "immigrant")

    def work(lo, hi):
        for r in range(lo, hi):
            rng = replicate_rng(seed, r, stream)
            if imm is None:
                path = simulate_no_immigration(spec, init, horizon, rng, snaps, cap, cs)
            else:
                path = simulate_with_immigration(
                    spec, imm, horizon, rng, snaps, cap, founding_immigrant, cs, **opts
                )
            out[r] = path.counts

    threads = max(1, int(threads))
    if threads == 1:
        work(0, n_rep)
    else:
        with ThreadPoolExecutor(threads) as ex:
            futures = [ex.submit(work, a, b) for a, b in _chunks(n_rep, 4 * threads)]
            for f in futures:
                f.result()
    return out

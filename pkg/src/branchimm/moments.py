"""First and second moments of the branching process, with and without immigration."""
from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg

from . import kernels as kern
from . import point_processes as pp
from .errors import QuadratureFailure, SpecError


class CloneMoments:
    """Means and second moments of a clan as functions of its age.

    ``mean(a)[k, j] = E_k[Z_j(a)]`` and ``second(a)[k, j, l] = E_k[Z_j Z_l](a)``
    for a clan started by one type-``k`` particle. Means are matrix
    exponentials; factorial second moments solve the backward system

        D_k' = (sum_{i,i'} F[k,i,i'] m_i m_i'^T + sum_i M[k,i] D_i - D_k) / mu_k

    with ``D(0) = 0``.
    """

    def __init__(self, spec, gen, horizon, rtol=1e-11, atol=1e-13):
        self.spec = spec
        self.gen = gen
        self.horizon = float(horizon)
        d = spec.d
        A = np.asarray(gen.A)
        M = np.asarray(gen.M)
        F = spec.offspring_factorial()
        inv_mu = 1.0 / spec.lifetimes

        def rhs(_t, y):
            m = y[: d * d].reshape(d, d)
            D = y[d * d :].reshape(d, d, d)
            dm = A @ m
            drive = np.einsum("kab,aj,bl->kjl", F, m, m)
            dD = (drive + np.einsum("ki,ijl->kjl", M, D) - D) * inv_mu[:, None, None]
            return np.concatenate([dm.ravel(), dD.ravel()])

        y0 = np.concatenate([np.eye(d).ravel(), np.zeros(d**3)])
        if self.horizon > 0:
            sol = integrate.solve_ivp(rhs, (0.0, self.horizon), y0, method="DOP853",
                                      rtol=rtol, atol=atol, dense_output=True)
            if not sol.success:
                raise QuadratureFailure(f"moment equations failed: {sol.message}")
            self._sol = sol.sol
        else:
            self._sol = lambda a: np.repeat(y0[:, None], np.size(a), axis=1)

    def _state(self, a):
        a = np.atleast_1d(np.asarray(a, dtype=float))
        if np.any(a < 0) or np.any(a > self.horizon * (1 + 1e-12)):
            raise ValueError("age outside the integrated range")
        return self._sol(np.clip(a, 0.0, self.horizon)).T

    def mean(self, a):
        d = self.spec.d
        return np.stack([linalg.expm(self.gen.A * x) for x in np.atleast_1d(a)]).reshape(-1, d, d)

    def factorial(self, a):
        d = self.spec.d
        return self._state(a)[:, d * d :].reshape(-1, d, d, d)

    def second(self, a):
        m = self.mean(a)
        idx = np.arange(self.spec.d)
        out = self.factorial(a).copy()
        out[:, :, idx, idx] += m
        return out

    def group_mean(self, a):
        """``E[Z(a)]`` for a clan founded by a random immigrant group."""
        return self.mean(a).transpose(0, 2, 1) @ self.spec.immigrant_mean()

    def group_second(self, a):
        """``E[Z_j Z_l](a)`` for a random immigrant group (multilinear in the group)."""
        law = self.spec.immigrant
        EI = law.mean()
        FI = law.factorial_second()
        m = self.mean(a)
        S = self.second(a)
        return np.einsum("k,nkjl->njl", EI, S) + np.einsum("kq,nkj,nql->njl", FI, m, m)


def moments_no_immigration(spec, gen, t):
    """``(mean[k, j], second[k, j, l])`` at time ``t`` for a clan started by one type-``k`` particle."""
    cm = CloneMoments(spec, gen, t)
    return cm.mean(t)[0], cm.second(t)[0]


def as_kernel(imm):
    """Kernel view of an immigration spec with a deterministic correlation structure."""
    if isinstance(imm, (kern.PoissonIdentity, kern.GinibreGaussian, kern.SpectralExpansion)):
        return imm
    if isinstance(imm, pp.DPP):
        return imm.kernel
    if isinstance(imm, pp.HomogeneousPoisson):
        return kern.PoissonIdentity(imm.rate)
    if isinstance(imm, pp.InhomogeneousPoisson):
        return kern.PoissonIdentity(imm.density)
    raise SpecError(f"no closed-form moments for {type(imm).__name__} immigration")


def _breaks(kernel, t):
    if isinstance(kernel, kern.SpectralExpansion) and 0 < kernel.window < t:
        return (kernel.window,)
    return ()


def _quad_vec(g, t, points, epsrel):
    val, err = integrate.quad_vec(g, 0.0, t, epsrel=epsrel, epsabs=1e-14, points=points or None,
                                  limit=2000)
    if not err <= max(epsrel * np.max(np.abs(val)), 1e-12) * 10:
        raise QuadratureFailure(f"integral error estimate {err:.3g} too large")
    return val, err


def mean_with_immigration(spec, gen, kernel, t, epsrel=1e-10, clan=None):
    """``E[Z(t)] = int_0^t K(x, x) E[Z_clan(t - x)] Lambda(dx)``; returns ``(mean, error)``."""
    kernel = as_kernel(kernel)
    if t == 0:
        return np.zeros(spec.d), 0.0
    cm = clan or CloneMoments(spec, gen, t)

    def g(x):
        w = kernel.diag(np.array([x]))[0] * kernel.density(np.array([x]))[0]
        return w * cm.group_mean(t - x)[0]

    return _quad_vec(g, t, _breaks(kernel, t), epsrel)


def _panel_rule(t, n_panels, order):
    xi, wi = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, t, n_panels + 1)
    h = np.diff(edges)
    x = (edges[:-1, None] + 0.5 * h[:, None] * (xi[None, :] + 1.0)).ravel()
    w = (0.5 * h[:, None] * wi[None, :]).ravel()
    return x, w


def pair_correction(spec, gen, kernel, t, clan=None, order=8, panel_width=None):
    """``int int K(x, y)^2 E[Z_clan(t-x)] E[Z_clan(t-y)]^T Lambda(dx) Lambda(dy)`` and an error estimate.

    Tensor Gauss-Legendre on panels narrower than the kernel's correlation
    length, compared with a rule on twice as many panels.
    """
    kernel = as_kernel(kernel)
    d = spec.d
    if isinstance(kernel, kern.PoissonIdentity) or t == 0:
        return np.zeros((d, d)), 0.0
    cm = clan or CloneMoments(spec, gen, t)
    if panel_width is None:
        panel_width = 0.5 * getattr(kernel, "scale", 1.0)
        if isinstance(kernel, kern.SpectralExpansion):
            panel_width = kernel.window / (4.0 * max(kernel.rank, 1))
    n_panels = max(2, int(np.ceil(t / panel_width)))

    def rule(n):
        x, w = _panel_rule(t, n, order)
        w = w * kernel.density(x)
        m = cm.group_mean(t - x)  # (n, d)
        K2 = kernel.matrix(x, x) ** 2
        wm = w[:, None] * m
        return wm.T @ K2 @ wm

    coarse = rule(n_panels)
    fine = rule(2 * n_panels)
    return 0.5 * (fine + fine.T), float(np.max(np.abs(fine - coarse)))


def covariance_with_immigration(spec, gen, kernel, t, epsrel=1e-10, clan=None):
    """Covariance matrix of ``Z(t)`` and an error estimate.

    Single integral of the clan second moments against ``K(x, x) Lambda(dx)``
    minus the pair-correction double integral of ``K^2``.
    """
    kernel = as_kernel(kernel)
    d = spec.d
    if t == 0:
        return np.zeros((d, d)), 0.0
    cm = clan or CloneMoments(spec, gen, t)

    def g(x):
        w = kernel.diag(np.array([x]))[0] * kernel.density(np.array([x]))[0]
        return w * cm.group_second(t - x)[0]

    single, err1 = _quad_vec(g, t, _breaks(kernel, t), epsrel)
    pair, err2 = pair_correction(spec, gen, kernel, t, cm)
    cov = single - pair
    cov = 0.5 * (cov + cov.T)
    err = float(np.max(err1) + err2)
    diag = np.diag(cov).copy()
    neg = diag < 0
    if np.any(neg):
        if np.any(diag[neg] < -10 * max(err, 1e-12)):
            raise QuadratureFailure("negative variance beyond the quadrature error")
        warnings.warn("clamping tiny negative variances to zero", RuntimeWarning, stacklevel=2)
        cov[np.flatnonzero(neg), np.flatnonzero(neg)] = 0.0
    return cov, err


@dataclass(frozen=True, eq=False)
class MomentReport:
    t: float
    mean: np.ndarray
    cov: np.ndarray
    mean_err: float
    cov_err: float

    def rows(self):
        d = self.mean.size
        for i in range(d):
            for j in range(d):
                yield (self.t, i, j, float(self.mean[i]), float(self.cov[i, j]),
                       float(max(self.mean_err if i == j else 0.0, self.cov_err)))


def moment_report(spec, gen, kernel, t):
    cm = CloneMoments(spec, gen, t) if t > 0 else None
    mean, me = mean_with_immigration(spec, gen, kernel, t, clan=cm)
    cov, ce = covariance_with_immigration(spec, gen, kernel, t, clan=cm)
    return MomentReport(float(t), np.asarray(mean), cov, float(np.max(me)), float(ce))


def moment_csv(reports):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "i", "j", "mean_i", "cov_ij", "quad_err"])
    for rep in reports:
        for row in rep.rows():
            w.writerow([repr(float(row[0])), row[1], row[2], *(repr(v) for v in row[3:])])
    return buf.getvalue()


# -- convolution asymptotics ------------------------------------------------


@dataclass(frozen=True, eq=False)
class ConvDiagnostics:
    t: np.ndarray
    integral: np.ndarray
    predictor: np.ndarray

    @property
    def ratio(self):
        return self.integral / self.predictor


def conv_asymptote(alpha, beta, t_grid, delta=None, alpha_inf=None, beta_inf=None):
    """Compare ``int_0^t beta(t-x) alpha(x) dx`` with its large-``t`` predictor.

    With ``delta`` given the predictor is ``alpha(t) int_0^inf e^(-delta x) beta(x) dx``
    (``alpha`` growing like ``e^(delta t)``). Otherwise ``alpha`` and ``beta``
    tend to ``alpha_inf`` and ``beta_inf`` and the predictor is
    ``alpha_inf beta_inf t``.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    vals = np.array([
        integrate.quad(lambda x: beta(t - x) * alpha(x), 0.0, t, epsrel=1e-12, limit=500)[0]
        for t in t_grid
    ])
    if delta is not None:
        c, _ = integrate.quad(lambda x: np.exp(-delta * x) * beta(x), 0.0, np.inf,
                              epsrel=1e-12, limit=500)
        pred = np.array([alpha(t) for t in t_grid]) * c
    else:
        if alpha_inf is None or beta_inf is None:
            raise ValueError("need delta, or both limits alpha_inf and beta_inf")
        pred = alpha_inf * beta_inf * t_grid
    return ConvDiagnostics(t_grid, vals, pred)

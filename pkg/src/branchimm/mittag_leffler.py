"""Mittag-Leffler function, Mittag-Leffler variates and inverse stable subordinators."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from .errors import GridTooCoarse, SpecError

SERIES_RADIUS = 5.0


def _check_order(beta, allow_one=True):
    if not (0.0 < beta < 1.0 or (allow_one and beta == 1.0)):
        raise SpecError(f"order must lie in (0, 1{']' if allow_one else ')'}, got {beta}")


def _ml_series(beta, z, n_terms=600):
    """Power series; returns None when cancellation would spoil the sum."""
    x = abs(z)
    if x == 0:
        return 1.0
    k = np.arange(n_terms)
    logs = k * math.log(x) - gammaln(1.0 + beta * k)
    if logs[-1] > -40.0 or logs.max() > math.log(1e3):
        return None
    signs = np.where(k % 2 == 1, -1.0, 1.0) if z < 0 else 1.0
    return float(math.fsum(signs * np.exp(logs)))


def _ml_integral(beta, x):
    """``E_beta(-x)`` for ``x > 0`` from its completely monotone representation.

    ``E_beta(-t^beta) = int_0^inf exp(-r t) K(r) dr`` with the spectral density
    ``K``; after substituting ``r = y^(1/beta)`` the integrand is smooth.
    """
    t = x ** (1.0 / beta)
    c = math.cos(beta * math.pi)

    def integrand(y):
        return math.exp(-t * y ** (1.0 / beta)) / (y * y + 2.0 * y * c + 1.0)

    val, _ = integrate.quad(integrand, 0.0, np.inf, epsabs=1e-15, epsrel=1e-13, limit=400)
    return math.sin(beta * math.pi) / (beta * math.pi) * val


def mittag_leffler(beta, z):
    """One-parameter Mittag-Leffler function ``E_beta(z)`` for real ``z <= 0``.

    Power series for ``|z| <= 5`` (when its terms stay moderate); otherwise an
    integral representation evaluated by adaptive quadrature.
    """
    _check_order(beta)
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr > 0):
        raise ValueError("only the negative half-line is supported")
    if beta == 1.0:
        return np.exp(z_arr) if z_arr.ndim else float(np.exp(z_arr))
    out = np.empty(z_arr.shape)
    flat = out.reshape(-1)
    for i, zi in enumerate(z_arr.reshape(-1)):
        val = _ml_series(beta, zi) if abs(zi) <= SERIES_RADIUS else None
        flat[i] = _ml_integral(beta, -zi) if val is None else val
    return out if z_arr.ndim else float(out)


def ml_asymptotic(beta, z, n_terms=4):
    """Leading terms ``-sum_k z^-k / Gamma(1 - beta k)`` as ``z -> -inf``."""
    total = 0.0
    for k in range(1, n_terms + 1):
        arg = 1.0 - beta * k
        if arg <= 0 and float(arg).is_integer():
            continue
        total -= z ** (-k) / math.gamma(arg)
    return total


def ml_survival(beta, rate, t):
    """``P(T > t) = E_beta(-rate t^beta)`` for a Mittag-Leffler waiting time."""
    t = np.asarray(t, dtype=float)
    return mittag_leffler(beta, -rate * t**beta)


def sample_mittag_leffler(beta, rate, rng, size=None):
    """Mittag-Leffler waiting times with survival ``E_beta(-rate t^beta)``.

    Exact rejection-free transform of two uniforms,
    ``-ln U rate^(-1/beta) (sin(beta pi) / tan(beta pi V) - cos(beta pi))^(1/beta)``;
    for ``beta = 1`` it reduces to an exponential with the given rate.
    """
    _check_order(beta)
    if not rate > 0:
        raise SpecError("rate must be positive")
    u = 1.0 - rng.random(size)  # in (0, 1]
    v = rng.random(size)
    e = -np.log(u)
    if beta == 1.0:
        return e / rate
    bp = beta * np.pi
    factor = np.sin(bp) / np.tan(bp * v) - np.cos(bp)
    return e * (factor / rate) ** (1.0 / beta)


def sample_stable(beta, rng, size=None):
    """Positive ``beta``-stable variates with ``E[exp(-s S)] = exp(-s^beta)`` (Kanter)."""
    _check_order(beta, allow_one=False)
    u = np.pi * (1.0 - rng.random(size))  # (0, pi]
    e = rng.standard_exponential(size)
    a = np.sin(beta * u) / np.sin(u) ** (1.0 / beta)
    b = (np.sin((1.0 - beta) * u) / e) ** ((1.0 - beta) / beta)
    return a * b


@dataclass(frozen=True, eq=False)
class InverseSubordinatorPath:
    """Inverse subordinator ``Y`` evaluated on ``times``.

    ``sub_times``/``sub_values`` hold the simulated subordinator skeleton;
    ``Y`` interpolates its piecewise-linear inverse, so ``Y(0) = 0`` and the
    path is nondecreasing.
    """

    times: np.ndarray
    values: np.ndarray
    sub_times: np.ndarray
    sub_values: np.ndarray

    def __call__(self, t):
        return np.interp(t, self.sub_values, self.sub_times)

    @property
    def horizon(self):
        return float(self.times[-1])


def sample_inverse_subordinator(beta, horizon, rng, h=None, min_steps=10):
    """Simulate ``S`` on a grid of step ``h`` until it passes ``horizon``, then invert.

    Increments are ``h^(1/beta)`` times standard positive stable variates.
    The inverse is returned on the grid ``0, h, 2h, ..., horizon``.
    ``GridTooCoarse`` is raised when the expected number of steps before
    ``S`` passes the horizon, ``E[Y(horizon)] / h``, is below ``min_steps``.
    """
    _check_order(beta, allow_one=False)
    if not horizon > 0:
        raise SpecError("horizon must be positive")
    if h is None:
        h = horizon / 1e4
    if not h > 0:
        raise SpecError("grid step must be positive")
    scale = h ** (1.0 / beta)
    mean_steps = horizon**beta / math.gamma(1.0 + beta) / h
    if mean_steps < min_steps:
        raise GridTooCoarse(
            f"about {mean_steps:.3g} steps before the horizon is passed; reduce h"
        )
    chunk = int(min(max(64, 1.5 * mean_steps), 5_000_000))
    pieces = []
    level = 0.0
    n = 0
    while level <= horizon:
        inc = scale * sample_stable(beta, rng, chunk)
        cs = level + np.cumsum(inc)
        pieces.append(cs)
        level = cs[-1]
        n += chunk
        if n > 200_000_000:
            raise GridTooCoarse("subordinator failed to reach the horizon")
    S = np.concatenate([[0.0], *pieces])
    k_cross = int(np.searchsorted(S, horizon, side="right"))
    S = S[: k_cross + 1]
    u = h * np.arange(S.size)
    n_t = max(1, int(round(horizon / h)))
    times = np.linspace(0.0, horizon, n_t + 1)
    values = np.interp(times, S, u)
    return InverseSubordinatorPath(times, values, u, S)


def inverse_subordinator_mean(beta, t):
    """``E[Y_beta(t)] = t^beta / Gamma(1 + beta)``."""
    return np.asarray(t, dtype=float) ** beta / math.gamma(1.0 + beta)

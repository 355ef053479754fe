"""Monte Carlo result carrier and small estimator helpers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptySample


@dataclass(frozen=True)
class MCEstimate:
    """Monte Carlo value with its standard error and replicate count."""

    value: float
    std_error: float
    n: int
    method: str = "mc"

    def __float__(self):
        return float(self.value)

    def within(self, target, k=3.0):
        """True when ``target`` lies within ``k`` standard errors."""
        return abs(self.value - target) <= k * self.std_error

    def agrees(self, other, k=3.0):
        """Compare two independent estimates using the combined error."""
        se = np.hypot(self.std_error, getattr(other, "std_error", 0.0))
        return abs(self.value - float(other)) <= k * se


def mc_mean(values, method="mc"):
    """Sample mean with standard error ``sd / sqrt(n)``."""
    x = np.asarray(values, dtype=float).ravel()
    if x.size == 0:
        raise EmptySample("no samples")
    sd = x.std(ddof=1) if x.size > 1 else 0.0
    return MCEstimate(float(x.mean()), float(sd / np.sqrt(x.size)), int(x.size), method)


def mc_variance(values):
    """Sample variance and a large-sample standard error for it.

    The error uses ``Var(s^2) ~ (m4 - s^4) / n`` with central moments.
    """
    x = np.asarray(values, dtype=float).ravel()
    n = x.size
    if n < 2:
        raise EmptySample("need at least two samples for a variance")
    c = x - x.mean()
    s2 = c @ c / (n - 1)
    m4 = np.mean(c**4)
    se = np.sqrt(max(m4 - s2**2, 0.0) / n)
    return MCEstimate(float(s2), float(se), int(n), "mc-variance")

"""Closed-form bounds on occupation probabilities and return times.

All functions are pure. ``BoundCheck`` rows record one comparison of an
estimate against a bound with a three-standard-error allowance.
"""
import math
from dataclasses import dataclass

import numpy as np

from .graphs import ConfigurationError


def lower_bound_bounded_degree(D, t):
    """``1 / (1 + D t)``: occupation lower bound when every degree is at most ``D``."""
    if D < 1:
        raise ConfigurationError(f"D must be >= 1, got {D}")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ConfigurationError("t must be nonnegative")
    out = 1.0 / (1.0 + D * t)
    return float(out) if out.ndim == 0 else out


def gw_lower_bound_form(C, t):
    """``C / (t log t)`` for ``t > 1``; the constant ``C`` is left free."""
    if C <= 0:
        raise ConfigurationError(f"C must be positive, got {C}")
    t = np.asarray(t, dtype=float)
    if np.any(t <= 1):
        raise ConfigurationError("the form C/(t log t) needs t > 1")
    out = C / (t * np.log(t))
    return float(out) if out.ndim == 0 else out


def sigma_tail_bound_general(t, I_tu):
    """``t / (t + I(t, u))`` bounding ``P(sigma_t > u)``."""
    if t < 0 or I_tu < 0:
        raise ConfigurationError("need t >= 0 and I(t, u) >= 0")
    if t == 0:
        return 0.0
    return t / (t + I_tu)


def degree_integral(D, t, u):
    """``int_t^u ds / (1 + D s) = (log(1 + D u) - log(1 + D t)) / D``."""
    return (math.log1p(D * u) - math.log1p(D * t)) / D


def sigma_tail_bound_degree(D, t, u):
    """The general bound with ``p_s`` replaced by its lower bound ``1/(1 + D s)``."""
    if not u > t >= 0:
        raise ConfigurationError("need u > t >= 0")
    return sigma_tail_bound_general(t, degree_integral(D, t, u))


def griffeath_upper(t, eps=0.0):
    """``(1 + eps) / (2 sqrt(pi t))``, the stated asymptotic upper envelope."""
    if eps < 0:
        raise ConfigurationError("eps must be nonnegative")
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ConfigurationError("t must be positive")
    out = (1.0 + eps) / (2.0 * np.sqrt(np.pi * t))
    return float(out) if out.ndim == 0 else out


class OccupancyIntegral:
    """Trapezoid integral ``I(t, u)`` of a tabulated ``p_s`` (piecewise linear between grid points)."""

    def __init__(self, times, values):
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.times.ndim != 1 or len(self.times) < 2 or np.any(np.diff(self.times) <= 0):
            raise ConfigurationError("need at least two strictly increasing times")
        if self.values.shape != self.times.shape:
            raise ConfigurationError("times and values differ in length")
        seg = np.diff(self.times) * (self.values[1:] + self.values[:-1]) / 2
        self._cum = np.concatenate([[0.0], np.cumsum(seg)])

    @classmethod
    def from_function(cls, f, a, b, n=20001):
        s = np.linspace(a, b, n)
        return cls(s, f(s))

    @classmethod
    def from_series(cls, series):
        return cls(series.t, series.estimate)

    def _at(self, x):
        if not self.times[0] <= x <= self.times[-1]:
            raise ConfigurationError(f"{x} lies outside [{self.times[0]}, {self.times[-1]}]")
        i = min(np.searchsorted(self.times, x, side="right") - 1, len(self.times) - 2)
        h = x - self.times[i]
        slope = (self.values[i + 1] - self.values[i]) / (self.times[i + 1] - self.times[i])
        return self._cum[i] + h * (self.values[i] + slope * h / 2)

    def __call__(self, t, u):
        if u < t:
            raise ConfigurationError("need u >= t")
        return float(self._at(u) - self._at(t))


@dataclass(frozen=True)
class BoundCheck:
    """Estimate against a bound, allowing ``slack`` standard errors."""

    name: str
    t: float
    bound: float
    estimate: float
    ci_low: float
    ci_high: float
    se: float
    kind: str  # "lower": estimate >= bound - slack*se; "upper": estimate <= bound + slack*se
    slack: float = 3.0

    @property
    def passed(self):
        if self.kind == "lower":
            return self.estimate >= self.bound - self.slack * self.se
        if self.kind == "upper":
            return self.estimate <= self.bound + self.slack * self.se
        raise ConfigurationError(f"unknown bound kind {self.kind!r}")

    def row(self):
        return {"bound": self.name, "t": self.t, "bound_value": self.bound, "estimate": self.estimate,
                "ci_low": self.ci_low, "ci_high": self.ci_high, "se": self.se, "kind": self.kind,
                "pass": bool(self.passed)}


def check_series(name, series, bound_values, kind, slack=3.0):
    """One :class:`BoundCheck` per grid time of an ``EstimateSeries``."""
    lo, hi = series.ci
    return [BoundCheck(name, float(t), float(b), float(e), float(l), float(h), float(s), kind, slack)
            for t, b, e, l, h, s in zip(series.t, bound_values, series.estimate, lo, hi, series.se)]

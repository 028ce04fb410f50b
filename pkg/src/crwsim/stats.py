"""Confidence intervals and the ``EstimateSeries`` container."""
import csv
import io
import math
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

CSV_HEADER = ("t", "estimate", "ci_low", "ci_high", "replicates", "method", "cap_hit")


def z_value(level):
    return NormalDist().inv_cdf(0.5 + level / 2.0)


def wilson_interval(successes, n, level=0.99):
    """Wilson score interval for a binomial proportion (vectorised)."""
    k = np.asarray(successes, dtype=float)
    n = np.asarray(n, dtype=float)
    z = z_value(level)
    p = k / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo = np.clip(centre - half, 0.0, 1.0)
    hi = np.clip(centre + half, 0.0, 1.0)
    # guard the rounding at p = 0 or 1 so that lo <= p <= hi exactly
    return np.minimum(lo, p), np.maximum(hi, p)


def binomial_se(p, n):
    p = np.asarray(p, dtype=float)
    return np.sqrt(p * (1 - p) / n)


def ks_critical(n, m, alpha=0.01):
    """Asymptotic two-sample Kolmogorov-Smirnov critical value."""
    c = math.sqrt(-0.5 * math.log(alpha / 2.0))
    return c * math.sqrt((n + m) / (n * m))


def write_csv(rows, path=None, header=CSV_HEADER):
    """RFC-4180 text (CRLF line ends, floats by ``repr``) for ``rows``; also written to ``path`` if given."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(x) if isinstance(x, float) else x for x in row])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


@dataclass
class EstimateSeries:
    """Proportion estimates on a time grid.

    ``successes[i]`` of ``replicates`` runs had the event at ``t[i]``. The
    Wilson interval is computed at ``level``. ``cap_hit`` is the fraction of
    replicates truncated by a size cap (always 0 for uncapped methods).
    """

    t: np.ndarray
    successes: np.ndarray
    replicates: int
    method: str
    level: float = 0.99
    cap_hit: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.successes = np.asarray(self.successes, dtype=np.int64)

    @property
    def estimate(self):
        return self.successes / self.replicates

    @property
    def ci(self):
        return wilson_interval(self.successes, self.replicates, self.level)

    @property
    def se(self):
        return binomial_se(self.estimate, self.replicates)

    @property
    def cap_biased(self):
        return self.cap_hit > 0.01

    def rows(self):
        lo, hi = self.ci
        for i, t in enumerate(self.t):
            yield (float(t), float(self.estimate[i]), float(lo[i]), float(hi[i]),
                   int(self.replicates), self.method, float(self.cap_hit))

    def to_csv(self, path=None):
        return write_csv(self.rows(), path)

    @staticmethod
    def read_csv(path):
        """Rows of a series CSV as dicts of floats (``method`` kept as str)."""
        with open(path, newline="") as fh:
            out = []
            for r in csv.DictReader(fh):
                out.append({k: (v if k == "method" else float(v)) for k, v in r.items()})
        return out


@dataclass
class ExactSeries:
    """Oracle values in the series CSV layout (zero-width interval, 0 replicates)."""

    t: np.ndarray
    values: np.ndarray
    method: str = "oracle"

    def __post_init__(self):
        self.t = np.atleast_1d(np.asarray(self.t, dtype=float))
        self.values = np.atleast_1d(np.asarray(self.values, dtype=float))

    @property
    def estimate(self):
        return self.values

    def rows(self):
        for t, v in zip(self.t, self.values):
            yield (float(t), float(v), float(v), float(v), 0, self.method, 0.0)

    def to_csv(self, path=None):
        return write_csv(self.rows(), path)

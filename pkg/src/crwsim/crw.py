"""Coalescing random walk: stepper, event-stream coupling and estimators.

Each directed edge carries a unit-rate clock; when ``(u, w)`` rings a particle
at ``u`` jumps to ``w`` and merges with any particle already there. The
stepper uses the direct Gillespie method: one exponential at the aggregate
rate (sum of occupied degrees), then an occupied vertex chosen in proportion
to its degree and a uniform neighbour.
"""
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .graphs import ConfigurationError, FiniteGraph
from .rng import replicate_keys
from .stats import EstimateSeries
from .workers import fan_out


@dataclass
class CrwState:
    """Occupied set, clock and aggregate jump rate."""

    occupied: set
    clock: float = 0.0
    total_rate: int = 0
    n_events: int = field(default=0, repr=False)

    def recount_rate(self, g):
        return sum(g.degree(u) for u in self.occupied)


def crw_init(g, initial="all"):
    if isinstance(initial, str):
        if initial != "all":
            raise ConfigurationError(f"initial must be 'all' or a set of vertices, got {initial!r}")
        if not g.is_finite:
            raise ConfigurationError("'all' needs a finite graph or window; use e.g. regtree:3:12")
        occupied = set(range(g.n_vertices))
    else:
        occupied = set(int(u) for u in initial)
    if not occupied:
        raise ConfigurationError("initial set must be nonempty")
    return CrwState(occupied, 0.0, sum(g.degree(u) for u in occupied))


def apply_ring(state, g, u, w):
    """Effect of the clock on directed edge ``(u, w)``; returns True if the particle count dropped."""
    if u not in state.occupied:
        return False
    state.occupied.discard(u)
    state.total_rate -= g.degree(u)
    if w in state.occupied:
        return True
    state.occupied.add(w)
    state.total_rate += g.degree(w)
    return False


def _jump(state, g, rng):
    target = rng.integers(state.total_rate)
    for u in sorted(state.occupied):
        d = g.degree(u)
        if target < d:
            break
        target -= d
    apply_ring(state, g, u, g.neighbors(u)[int(target)])
    state.n_events += 1


def crw_step(state, g, rng):
    """Advance ``state`` (in place) by one jump and return it."""
    if state.total_rate <= 0:
        return state
    state.clock += rng.exponential(1.0 / state.total_rate)
    _jump(state, g, rng)
    return state


def run_until(state, g, rng, t):
    """Step until time ``t``; the state returned is the configuration at ``t``."""
    while state.total_rate > 0:
        dt = rng.exponential(1.0 / state.total_rate)
        if state.clock + dt > t:
            break
        state.clock += dt
        _jump(state, g, rng)
    state.clock = max(state.clock, t)
    return state


def ring_stream(g, horizon, rng):
    """Ring times of every directed edge's unit Poisson clock on ``[0, horizon]``, in time order."""
    arcs = [(u, w) for u in range(g.n_vertices) for w in g.neighbors(u)]
    n = rng.poisson(len(arcs) * horizon)
    times = np.sort(rng.uniform(0.0, horizon, n))
    which = rng.integers(len(arcs), size=n)
    return [(float(t), arcs[k]) for t, k in zip(times, which)]


def run_stream(state, g, stream):
    """Drive ``state`` with a recorded ring stream; yields the occupied set after each ring."""
    for t, (u, w) in stream:
        apply_ring(state, g, u, w)
        state.clock = t
        yield frozenset(state.occupied)


def _finite(g, what):
    if not isinstance(g, FiniteGraph):
        raise ConfigurationError(f"{what} runs on finite graphs or windows (e.g. line:50, regtree:3:12)")
    return g.to_csr()


def _grid(grid):
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) == 0 or np.any(grid < 0) or np.any(np.diff(grid) <= 0):
        raise ConfigurationError("time grid must be a nonempty strictly increasing array of times >= 0")
    return grid


def _initial(g, initial):
    if isinstance(initial, str) and initial == "all":
        return np.arange(g.n_vertices, dtype=np.int64)
    init = np.array(sorted(set(int(u) for u in initial)), dtype=np.int64)
    if len(init) == 0:
        raise ConfigurationError("initial set must be nonempty")
    if init.min() < 0 or init.max() >= g.n_vertices:
        raise ConfigurationError("initial set has vertices outside the graph")
    return init


def crw_occupancy_series(g, v, grid, reps, seed, level=0.99, initial="all"):
    """Monte Carlo estimate of ``P(v occupied at t)`` on a time grid."""
    indptr, indices = _finite(g, "direct estimation")
    if not 0 <= v < g.n_vertices:
        raise ConfigurationError(f"vertex {v} is not in the graph")
    if reps < 1:
        raise ConfigurationError("reps must be >= 1")
    grid = _grid(grid)
    init = _initial(g, initial)
    keys = replicate_keys(seed, reps)
    none = np.empty(0)
    parts = fan_out(lambda k: _kernels.crw_run(indptr, indices, v, init, grid, none, 0.0, k)[0], keys)
    counts = np.sum(parts, axis=0)
    return EstimateSeries(grid, counts, reps, "direct", level)


class SigmaSamples:
    """First occupation times after a window start ``t``, censored at ``horizon``.

    Iterating yields :class:`SigmaSample` records; the array form is in
    ``sigma`` with ``np.inf`` replaced by ``horizon`` and flagged in ``censored``.
    """

    def __init__(self, t, horizon, raw):
        self.t = float(t)
        self.horizon = float(horizon)
        self.censored = ~np.isfinite(raw)
        self.sigma = np.where(self.censored, self.horizon, raw)

    def __len__(self):
        return len(self.sigma)

    def __iter__(self):
        for s, c in zip(self.sigma, self.censored):
            yield SigmaSample(self.t, float(s), bool(c))

    def tail(self, u):
        """Empirical ``P(sigma > u)`` and its standard error (needs ``t <= u <= horizon``)."""
        if not self.t <= u <= self.horizon:
            raise ConfigurationError("u must lie in [t, horizon]")
        p = float(np.mean(self.censored | (self.sigma > u)))
        return p, float(np.sqrt(p * (1 - p) / len(self)))


@dataclass(frozen=True)
class SigmaSample:
    t: float
    sigma: float
    censored: bool


def sigma_samples(g, v, t, horizon, reps, seed, initial="all", grid=None, level=0.99):
    """First time at or after ``t`` that ``v`` is occupied, for each replicate.

    ``t`` may be a sequence of window starts, all served by one trajectory per
    replicate; a list of :class:`SigmaSamples` is returned in that case. With
    a time ``grid`` the same trajectories also give the occupancy series of
    ``v`` and the return value is ``(samples, series)``.
    """
    indptr, indices = _finite(g, "sigma sampling")
    starts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(starts < 0) or np.any(starts >= horizon):
        raise ConfigurationError("need horizon > t >= 0")
    if not 0 <= v < g.n_vertices:
        raise ConfigurationError(f"vertex {v} is not in the graph")
    occ_grid = np.empty(0) if grid is None else _grid(grid)
    order = np.argsort(starts)
    init = _initial(g, initial)
    keys = replicate_keys(seed, reps)
    parts = fan_out(lambda k: _kernels.crw_run(indptr, indices, v, init, occ_grid, starts[order],
                                               float(horizon), k), keys)
    raw = np.concatenate([p[1] for p in parts], axis=0)
    out = [None] * len(starts)
    for j, o in enumerate(order):
        out[o] = SigmaSamples(starts[o], horizon, raw[:, j])
    samples = out[0] if np.ndim(t) == 0 else out
    if grid is None:
        return samples
    counts = np.sum([p[0] for p in parts], axis=0)
    return samples, EstimateSeries(occ_grid, counts, reps, "direct", level)


def window_agreement(series_r, series_2r):
    """Per grid time, whether two window radii agree within one pooled standard error."""
    a, b = series_r, series_2r
    pooled = np.sqrt(a.se**2 + b.se**2)
    return np.abs(a.estimate - b.estimate) <= pooled

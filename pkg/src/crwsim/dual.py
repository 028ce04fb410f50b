"""The dual voter cluster of a vertex.

``zeta`` starts as ``{v}``. Every boundary edge ``{x, y}`` (``x`` inside,
``y`` outside) fires in both directions at rate 1: ``y`` joins the cluster
or ``x`` leaves it. Grow and shrink therefore each happen at rate
``boundary_out`` and the total event rate is ``2 * boundary_out``. The size
is a skip-free martingale and ``P(zeta_t != {}) = P(v occupied at t)`` for
the coalescing walk.
"""
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .crw import _grid
from .graphs import ConfigurationError, FiniteGraph, GraphUsageError, LazyTree
from .rng import replicate_keys
from .stats import EstimateSeries, binomial_se
from .workers import fan_out

DEFAULT_SIZE_CAP = 10**6
_START_CAPACITY = 1 << 16


@dataclass
class ClusterState:
    """Members of the cluster with per-member counts of outside neighbours."""

    members: set
    outside: dict
    boundary_out: int
    clock: float = 0.0
    jump_count: int = 0

    @property
    def size(self):
        return len(self.members)

    @property
    def rate(self):
        """Total event rate ``2 * boundary_out``."""
        return 2 * self.boundary_out


def cluster_init(g, v=0):
    d = g.degree(v)
    return ClusterState({v}, {v: d}, d)


def boundary_recount(state, g):
    """``boundary_out`` recomputed from the member set alone."""
    return sum(1 for x in state.members for y in g.neighbors(x) if y not in state.members)


def _pick_member(state, rng):
    target = rng.integers(state.boundary_out)
    for x in sorted(state.members):
        k = state.outside[x]
        if target < k:
            return x, int(target)
        target -= k
    raise AssertionError("boundary bookkeeping out of sync")


def _join(state, g, y):
    inside = 0
    for z in g.neighbors(y):
        if z in state.members:
            inside += 1
            state.outside[z] -= 1
    state.members.add(y)
    state.outside[y] = g.degree(y) - inside
    state.boundary_out += g.degree(y) - 2 * inside


def _leave(state, g, x):
    inside = g.degree(x) - state.outside[x]
    state.members.discard(x)
    for z in g.neighbors(x):
        if z in state.members:
            state.outside[z] += 1
    state.boundary_out += 2 * inside - g.degree(x)
    del state.outside[x]


def cluster_step(state, g, rng):
    """One jump of the cluster, in place.

    Grow: a uniform outgoing boundary edge ``(x, y)`` adds ``y``. Shrink: a
    uniform incoming boundary edge ``(y, x)`` removes ``x``. Both choices weight
    member ``x`` by its number of outside neighbours.
    """
    if not state.members:
        raise GraphUsageError("the cluster is empty (absorbed)")
    if state.boundary_out == 0:
        # the whole finite graph: nothing can change
        state.clock = np.inf
        return state
    state.clock += rng.exponential(1.0 / state.rate)
    _jump(state, g, rng)
    return state


def _jump(state, g, rng):
    x, k = _pick_member(state, rng)
    if rng.random() < 0.5:
        y = [z for z in g.neighbors(x) if z not in state.members][k]
        _join(state, g, y)
    else:
        _leave(state, g, x)
    state.jump_count += 1


def cluster_run_until(state, g, rng, t):
    """Step until time ``t``; the returned state is the cluster at ``t``."""
    while state.members and state.boundary_out > 0:
        dt = rng.exponential(1.0 / state.rate)
        if state.clock + dt > t:
            break
        state.clock += dt
        _jump(state, g, rng)
    state.clock = max(state.clock, t)
    return state


@dataclass(frozen=True)
class JumpRecord:
    index: int
    size: int
    boundary_out: int
    clock: float


@dataclass
class JumpTrace:
    """Cluster size and boundary after each jump ``t_0 = 0 < t_1 < ...``.

    With ``padded`` set, an absorbed cluster keeps jumping from 0 to 0 at rate 1
    so that every trace has the requested number of jumps.
    """

    records: list = field(default_factory=list)
    padded: bool = False

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def sizes(self):
        return np.array([r.size for r in self.records])


def jump_trace(g, v, n_jumps, rng, padded=True):
    """Run ``n_jumps`` jumps of the cluster of ``v`` with the Python stepper."""
    state = cluster_init(g, v)
    trace = JumpTrace([JumpRecord(0, 1, state.boundary_out, 0.0)], padded)
    for i in range(1, n_jumps + 1):
        if state.members and state.boundary_out > 0:
            cluster_step(state, g, rng)
        elif padded and not state.members:
            state.clock += rng.exponential(1.0)
        else:
            break
        trace.records.append(JumpRecord(i, state.size, state.boundary_out, state.clock))
    return trace


# ------------------------------------------------------------- kernel wrappers

def _kernel_graph(g, v):
    """``(lazy, indptr, indices, tree_params)`` for the cluster kernels."""
    if isinstance(g, FiniteGraph):
        if not 0 <= v < g.n_vertices:
            raise ConfigurationError(f"vertex {v} is not in the graph")
        indptr, indices = g.to_csr()
        return False, indptr, indices, np.zeros(6)
    if isinstance(g, LazyTree):
        if v != 0:
            raise ConfigurationError("on lazy trees the target vertex is the root (v=0)")
        dummy = np.zeros(2, dtype=np.int64)
        return True, dummy, dummy, np.array(g.kernel_params(), dtype=float)
    raise ConfigurationError(f"unsupported graph {g!r}")


def _tree_seeds(g, keys, fixed_tree):
    # annealed: each replicate grows its own tree, keyed by the replicate key
    if isinstance(g, LazyTree) and fixed_tree:
        return np.full(len(keys), g.tree_seed, dtype=np.uint64)
    return keys


def _with_retries(run, keys, seeds, lazy):
    """Run a kernel chunk, rerunning overflowed lazy replicates with more storage."""
    capacity = _START_CAPACITY
    out = run(keys, seeds, capacity)
    overflow = out[-1]
    while lazy and overflow.any():
        capacity *= 4
        idx = np.flatnonzero(overflow)
        redo = run(keys[idx], seeds[idx], capacity)
        out = _merge(out, redo, idx)
        overflow = out[-1]
    return out


def _merge(out, redo, idx):
    merged = []
    for a, b in zip(out, redo):
        if isinstance(a, np.ndarray) and a.ndim == 2:
            a = a.copy()
            a[idx] = b
        elif isinstance(a, np.ndarray) and a.dtype == np.bool_:
            a = a.copy()
            a[idx] = b
        else:
            a = a + b
        merged.append(a)
    return tuple(merged)


def survival_series(g, v, grid, reps, seed, size_cap=DEFAULT_SIZE_CAP, fixed_tree=False, level=0.99):
    """Estimate ``P(zeta_t^v != {})`` on ``grid``; equal to ``p_t(v)`` by duality.

    Replicates whose cluster outgrows ``size_cap`` count as surviving from
    then on and are tallied in ``cap_hit``; above 1% the series is flagged
    cap-biased and is a lower bound only if used against a lower bound claim.
    For lazy Galton-Watson trees every replicate samples its own tree
    (annealed) unless ``fixed_tree`` is set.
    """
    if size_cap < 1:
        raise ConfigurationError("size_cap must be >= 1")
    if reps < 1:
        raise ConfigurationError("reps must be >= 1")
    grid = _grid(grid)
    lazy, indptr, indices, tree = _kernel_graph(g, v)
    keys = replicate_keys(seed, reps)

    def run(k, ts, cap):
        return _kernels.cluster_survival(lazy, v, indptr, indices, tree, ts, grid, size_cap, k, cap)

    parts = fan_out(lambda k: _with_retries(run, k, _tree_seeds(g, k, fixed_tree), lazy), keys)
    counts = np.sum([p[0] for p in parts], axis=0)
    cap_hits = sum(int(p[1]) for p in parts)
    return EstimateSeries(grid, counts, reps, "dual", level, cap_hits / reps,
                          {"cap_hits": cap_hits, "fixed_tree": bool(fixed_tree)})


@dataclass
class MartingaleSummary:
    """Per-jump-index means of the cluster size and threshold exceedances of its running max."""

    indices: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    thresholds: np.ndarray
    exceed: np.ndarray
    exceed_se: np.ndarray
    replicates: int


def martingale_trace(g, v, n_jumps, reps, seed, thresholds=(), record=None, fixed_tree=False):
    """Sizes ``|zeta_{t_i}|`` at jump indices ``record`` (default: 0, 1, 10, ... up to ``n_jumps``).

    Absorbed clusters contribute 0 (padding jumps). ``exceed[j]`` estimates
    ``P(max_{i <= n_jumps} |zeta_{t_i}| > thresholds[j])``.
    """
    if n_jumps < 1:
        raise ConfigurationError("n_jumps must be >= 1")
    if record is None:
        record = sorted({0, n_jumps, *[10**k for k in range(int(np.log10(n_jumps)) + 1)]})
    record = np.array(sorted(set(int(i) for i in record)), dtype=np.int64)
    if record[0] < 0 or record[-1] > n_jumps:
        raise ConfigurationError("record indices must lie in [0, n_jumps]")
    thresholds = np.asarray(thresholds, dtype=np.int64).reshape(-1)
    lazy, indptr, indices, tree = _kernel_graph(g, v)
    keys = replicate_keys(seed, reps)

    def run(k, ts, cap):
        return _kernels.cluster_jumps(lazy, v, indptr, indices, tree, ts, n_jumps, record, thresholds, k, cap)

    parts = fan_out(lambda k: _with_retries(run, k, _tree_seeds(g, k, fixed_tree), lazy), keys)
    sizes = np.concatenate([p[0] for p in parts])
    exceed = np.concatenate([p[1] for p in parts]).mean(axis=0)
    return MartingaleSummary(record, sizes.mean(axis=0), sizes.std(axis=0, ddof=1) / np.sqrt(reps),
                             thresholds, exceed, binomial_se(exceed, reps), reps)


def comparison_walk_series(D, grid, reps, seed, level=0.99):
    """Monte Carlo survival of the walk ``k -> k +- 1`` each at rate ``D k`` from 1."""
    if D <= 0:
        raise ConfigurationError(f"D must be positive, got {D}")
    grid = _grid(grid)
    keys = replicate_keys(seed, reps)
    parts = fan_out(lambda k: _kernels.branching_walk(float(D), grid, k), keys)
    return EstimateSeries(grid, np.sum(parts, axis=0), reps, "branching", level)


def truncated_lifetime(series):
    """``E[tau ^ T]`` at every grid time ``T`` by the trapezoid rule on ``[0, T]``.

    The grid is extended to 0 with survival 1 if it does not start there.
    Recurrent graphs have ``E tau = inf``; the growth of this curve in ``T`` is
    the meaningful output, never a limit.
    """
    t = series.t
    p = series.estimate
    if t[0] > 0:
        t = np.concatenate([[0.0], t])
        p = np.concatenate([[1.0], p])
    cum = np.concatenate([[0.0], np.cumsum(np.diff(t) * (p[1:] + p[:-1]) / 2)])
    return cum[-len(series.t):]

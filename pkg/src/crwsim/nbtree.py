"""Non-backtracking coalescing walks on rooted trees, the zap model and its dual.

Every particle carries a forbidden edge (the one it arrived along) and jumps
along each other edge at rate 1, so a particle at ``x`` moves at total rate
``d_x - 1``. On a tree one step away from the root commits a particle to
moving away forever. Collisions keep the rootward particle if the two
directions differ and the mover otherwise.

Deleting particles the moment they turn away leaves the root occupation time
unchanged, which gives the zap model: off the root a particle moves up at rate
1 and is deleted at rate ``d_x - 2``; at the root it is deleted at rate
``d_root - 1``. Deletion is a jump to an absorbing vertex, and the zap model
has a voter dual in which clusters grow away from the root and members defect
to the absorbing cluster.

Root conventions
----------------
Unplanted (default): the root has ``d_root`` children and no parent.
Planted: the root hangs from the absorbing vertex by a stem that counts
towards ``d_root``, so it has ``d_root - 1`` children and moving up the stem
removes a particle. In the dual, the parent of the root is the absorbing
vertex either way; the grow and shrink rates balance exactly only for the
planted root, while an unplanted root in the cluster adds one to the grow rate.

Truncated windows keep the nominal degrees of the infinite tree. Children
beyond the window are virtual: a particle stepping onto one leaves the
system ("absorbing leaves").
"""
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels
from .graphs import ConfigurationError, FiniteGraph, GraphUsageError, LazyTree
from .rng import replicate_keys, rng_stream
from .stats import EstimateSeries, ks_critical
from .workers import fan_out

TOWARDS_ROOT = 0
AWAY = 1
SINK = -1  # the absorbing vertex, reached by the stem of a planted root


class InvariantViolation(AssertionError):
    """Exact bookkeeping identity failed."""


class Virtual(NamedTuple):
    """Child slot ``k`` of ``parent`` lying outside a truncation window."""

    parent: int
    k: int


class RootedTree:
    """A tree oriented from root 0, with nominal degrees ``d_x``.

    ``g`` is a finite tree (its ``nominal_degree`` is used when present, so
    truncated windows keep their untruncated degrees) or a lazy tree.
    ``leaf_policy="error"`` rejects vertices whose actual degree is 1 off the
    root instead of treating missing children as absorbing.
    """

    def __init__(self, g, planted=False, leaf_policy="absorbing"):
        if leaf_policy not in ("absorbing", "error"):
            raise ConfigurationError(f"leaf_policy must be 'absorbing' or 'error', got {leaf_policy!r}")
        self.g = g
        self.planted = bool(planted)
        self.leaf_policy = leaf_policy
        self.lazy = isinstance(g, LazyTree)
        if isinstance(g, FiniteGraph):
            if not g.is_tree():
                raise ConfigurationError("non-backtracking models need a tree; got a graph with cycles")
            n = g.n_vertices
            parent = np.asarray(g.parent) if g.parent is not None else _bfs_parents(g)
            nominal = (np.asarray(g.nominal_degree, dtype=np.int64).copy() if g.nominal_degree is not None
                       else np.array([g.degree(x) for x in range(n)], dtype=np.int64))
            self._parent = parent.astype(np.int64)
            self._children = [[] for _ in range(n)]
            for x in range(1, n):
                self._children[self._parent[x]].append(x)
            self._nominal = nominal
            if leaf_policy == "error":
                bad = [x for x in range(1, n) if g.degree(x) == 1]
                if bad:
                    raise ConfigurationError(f"vertex {bad[0]} is a leaf off the root; d_v - 2 < 0 is undefined "
                                             "(use leaf_policy='absorbing' for truncated trees)")
        elif not self.lazy:
            raise ConfigurationError(f"unsupported graph {g!r}")
        for x in self._known():
            if x != 0 and self.degree(x) < 2:
                raise ConfigurationError(f"vertex {x} has degree {self.degree(x)} < 2 off the root")

    def _known(self):
        return range(self.g.n_exposed)

    @property
    def n_vertices(self):
        if self.lazy:
            raise GraphUsageError("a lazy tree has no vertex count")
        return len(self._parent)

    def parent(self, x):
        return self.g.parent(x) if self.lazy else int(self._parent[x])

    def children(self, x):
        """Children present in the tree (real vertices only)."""
        return self.g.children(x) if self.lazy else list(self._children[x])

    def degree(self, x):
        """Nominal degree ``d_x`` (the stem counts for a planted root)."""
        d = self.g.degree(x) if self.lazy else int(self._nominal[x])
        return d + 1 if (x == 0 and self.planted) else d

    def has_up(self, x):
        return x != 0 or self.planted

    def n_child_slots(self, x):
        return self.degree(x) - (1 if self.has_up(x) else 0)

    def child_slot(self, x, k):
        """Vertex id of child slot ``k`` of ``x``, or a :class:`Virtual` handle."""
        kids = self.children(x)
        return kids[k] if k < len(kids) else Virtual(x, k)

    def up(self, x):
        """Neighbour towards the root: the parent, or ``SINK`` for a planted root."""
        if x == 0:
            if not self.planted:
                raise GraphUsageError("an unplanted root has no edge towards the root")
            return SINK
        return self.parent(x)

    def nominal_neighbors(self, x):
        """Up-neighbour (if any) followed by every child slot."""
        out = [self.up(x)] if self.has_up(x) else []
        return out + [self.child_slot(x, k) for k in range(self.n_child_slots(x))]

    def zap_rate(self, x):
        """Deletion rate in the zap model: ``d_x - 2``, and ``d_root - 1`` at an unplanted root."""
        return self.degree(x) - 1 - (1 if self.has_up(x) else 0)

    def kernel_arrays(self):
        """``(parent, ch_ptr, ch_idx, child_pos, nomdeg)`` for the compiled kernels."""
        if self.lazy:
            raise ConfigurationError("particle simulations need a finite tree window, e.g. bintree:6")
        n = self.n_vertices
        ch_ptr = np.zeros(n + 1, dtype=np.int64)
        ch_ptr[1:] = np.cumsum([len(c) for c in self._children])
        ch_idx = np.array([c for kids in self._children for c in kids], dtype=np.int64)
        child_pos = np.zeros(n, dtype=np.int64)
        for kids in self._children:
            for k, c in enumerate(kids):
                child_pos[c] = k
        nomdeg = np.array([self.degree(x) for x in range(n)], dtype=np.int64)
        return self._parent, ch_ptr, ch_idx, child_pos, nomdeg

    def __repr__(self):
        return f"RootedTree({self.g!r}, planted={self.planted})"


def _bfs_parents(g):
    parent = np.full(g.n_vertices, -1, dtype=np.int64)
    seen = {0}
    frontier = [0]
    while frontier:
        nxt = []
        for u in frontier:
            for w in g.neighbors(u):
                if w not in seen:
                    seen.add(w)
                    parent[w] = u
                    nxt.append(w)
        frontier = nxt
    return parent


def half_line(length):
    """The half-line ``0, 1, ..., length`` rooted at 0: root degree 1, every other degree 2."""
    from .graphs import path_graph

    g = path_graph(length + 1)
    nominal = np.full(length + 1, 2)
    nominal[0] = 1
    g.nominal_degree = nominal
    return RootedTree(g)


def as_rooted(tree, planted=False):
    return tree if isinstance(tree, RootedTree) else RootedTree(tree, planted=planted)


# ------------------------------------------------------------ full model

@dataclass
class NbParticle:
    position: int
    forbidden: object
    direction: int = TOWARDS_ROOT


@dataclass
class NbState:
    particles: dict
    clock: float = 0.0
    X: float = 0.0
    n_events: int = field(default=0, repr=False)

    @property
    def root_occupied(self):
        return 0 in self.particles


def nb_init(tree, rng):
    """One particle per vertex, each forbidden from a uniform child edge, all moving rootward."""
    tree = as_rooted(tree)
    particles = {}
    for x in range(tree.n_vertices):
        k = int(rng.integers(tree.n_child_slots(x))) if tree.n_child_slots(x) > 0 else None
        forbidden = tree.child_slot(x, k) if k is not None else None
        particles[x] = NbParticle(x, forbidden, TOWARDS_ROOT)
    return NbState(particles)


def _allowed(tree, p):
    return [w for w in tree.nominal_neighbors(p.position) if w != p.forbidden]


def _accrue(state, until):
    if 0 in state.particles:
        state.X += until - state.clock
    state.clock = until


def nb_apply(state, tree, x, rank, delete_on_turn=False):
    """The particle at ``x`` (if any) takes its ``rank``-th allowed edge.

    Allowed edges are listed up-edge first, then child slots in order, with
    the forbidden one skipped. Returns the particle's destination (``None``
    if nothing moved).
    """
    p = state.particles.get(x)
    if p is None:
        return None
    allowed = _allowed(tree, p)
    w = allowed[rank]
    del state.particles[x]
    going_up = tree.has_up(x) and w == tree.up(x)
    direction = TOWARDS_ROOT if going_up else AWAY
    if direction == AWAY and delete_on_turn:
        return w
    if w == SINK or isinstance(w, Virtual):
        return w
    mover = NbParticle(w, x, direction)
    occupant = state.particles.get(w)
    if occupant is not None and direction == AWAY and occupant.direction == TOWARDS_ROOT:
        return w  # the away-moving mover is annihilated
    state.particles[w] = mover  # otherwise the occupant is
    return w


def _nb_rate(tree, state):
    return sum(tree.degree(x) - 1 for x in state.particles)


def nb_step(state, tree, rng, delete_on_turn=False, until=np.inf):
    """One Gillespie event of the full model, in place.

    If the event would fall after ``until`` the state is only advanced to
    ``until`` (accruing root occupation) and nothing moves.
    """
    tree = as_rooted(tree)
    rate = _nb_rate(tree, state)
    dt = rng.exponential(1.0 / rate) if rate > 0 else np.inf
    if state.clock + dt > until:
        _accrue(state, until)
        return state
    if rate == 0:
        state.clock = np.inf
        return state
    _accrue(state, state.clock + dt)
    target = rng.integers(rate)
    for x in sorted(state.particles):
        w = tree.degree(x) - 1
        if target < w:
            break
        target -= w
    nb_apply(state, tree, x, int(target), delete_on_turn)
    state.n_events += 1
    return state


def nb_run_until(state, tree, rng, T, delete_on_turn=False):
    """Run the full model to time ``T``; ``state.X`` is then ``X_T``."""
    while state.clock < T:
        nb_step(state, tree, rng, delete_on_turn, until=T)
    return state


# ------------------------------------------------------------- zap model

@dataclass
class ZapState:
    occupied: set
    clock: float = 0.0
    X: float = 0.0

    @property
    def root_occupied(self):
        return 0 in self.occupied


def zap_init(tree):
    tree = as_rooted(tree)
    return ZapState(set(range(tree.n_vertices)))


def zap_apply(state, tree, x, rank):
    """Rank 0 moves the particle at ``x`` up (off the root); any other rank deletes it."""
    if x not in state.occupied:
        return
    state.occupied.discard(x)
    if rank == 0 and x != 0:
        state.occupied.add(tree.parent(x))


def zap_step(state, tree, rng, until=np.inf):
    """One event of the zap model, in place. Total rate is the sum of ``d_x - 1`` over particles."""
    tree = as_rooted(tree)
    rate = sum(tree.degree(x) - 1 for x in state.occupied)
    dt = rng.exponential(1.0 / rate) if rate > 0 else np.inf
    if state.clock + dt > until:
        dt = until - state.clock
    elif rate == 0:
        state.clock = np.inf
        return state
    if 0 in state.occupied:
        state.X += dt
    state.clock += dt
    if state.clock == until:
        return state
    target = rng.integers(rate)
    for x in sorted(state.occupied):
        w = tree.degree(x) - 1
        if target < w:
            break
        target -= w
    # rank 0 is the rate-1 move towards the root; the root has none
    rank = int(target) if x != 0 else 1
    zap_apply(state, tree, x, rank)
    return state


def zap_run_until(state, tree, rng, T):
    while state.clock < T:
        zap_step(state, tree, rng, until=T)
    return state


# ------------------------------------------------------ shared event stream

def vertex_ring_stream(tree, horizon, rng):
    """Rings ``(time, x, rank)`` with a rate ``d_x - 1`` clock at every vertex.

    ``rank`` is uniform on ``0 .. d_x - 2``. Driving both models with the same
    stream couples them: the full model reads ``rank`` as an index into the
    particle's allowed edges (up-edge first), the zap model reads 0 as the move
    up and anything else as deletion.
    """
    tree = as_rooted(tree)
    rates = np.array([tree.degree(x) - 1 for x in range(tree.n_vertices)])
    total = rates.sum()
    n = rng.poisson(total * horizon)
    times = np.sort(rng.uniform(0.0, horizon, n))
    xs = rng.choice(len(rates), size=n, p=rates / total)
    ranks = (rng.random(n) * rates[xs]).astype(np.int64)
    return [(float(t), int(x), int(r)) for t, x, r in zip(times, xs, ranks)]


def nb_run_stream(state, tree, stream, delete_on_turn=False):
    """Drive the full model with a ring stream; yields the root indicator after each ring."""
    tree = as_rooted(tree)
    for t, x, rank in stream:
        _accrue(state, t)
        nb_apply(state, tree, x, rank, delete_on_turn)
        yield state.root_occupied


def zap_run_stream(state, tree, stream):
    tree = as_rooted(tree)
    for t, x, rank in stream:
        if 0 in state.occupied:
            state.X += t - state.clock
        state.clock = t
        zap_apply(state, tree, x, rank)
        yield state.root_occupied


# ------------------------------------------------------------------- dual

@dataclass
class NbClusterState:
    """Cluster of the dual zap model; the absorbing cluster is the complement."""

    members: set
    clock: float = 0.0
    jump_count: int = 0

    @property
    def size(self):
        return len(self.members)


def nb_cluster_init(tree, v=0):
    tree = as_rooted(tree)
    if not tree.lazy:
        raise ConfigurationError("the dual runs on lazy infinite trees (e.g. bintree, regtree:3, gw:geom:0.5)")
    tree.g.neighbors(v)
    return NbClusterState({v})


def _grow_edges(tree, members):
    return [(w, u) for w in sorted(members) for u in tree.children(w) if u not in members]


def _shrink_weights(tree, members):
    # capture by a non-member parent (the root's parent is the absorbing vertex) plus zapping
    out = []
    for w in sorted(members):
        captured = 1 if (w == 0 or tree.parent(w) not in members) else 0
        out.append((w, tree.degree(w) - 2 + captured))
    return out


def nb_rates(tree, state):
    """``(r_plus, r_minus)`` computed from scratch by the closed formulas.

    ``r_plus = sum (d_w - 1) - #internal parent-child edges`` and
    ``r_minus = sum (d_w - 2) + #{w : parent(w) not in members}``, with the
    root's parent the absorbing vertex. An unplanted root has one child more
    than ``d_root - 1``, which is added to ``r_plus`` when the root is a member.
    """
    tree = as_rooted(tree)
    W = state.members
    internal = sum(1 for w in W if w != 0 and tree.parent(w) in W)
    r_plus = sum(tree.degree(w) - 1 for w in W) - internal
    if 0 in W and not tree.planted:
        r_plus += 1
    r_minus = sum(tree.degree(w) - 2 for w in W) + sum(1 for w in W if w == 0 or tree.parent(w) not in W)
    return r_plus, r_minus


def expected_rate_excess(tree, state):
    """``r_plus - r_minus`` implied by the root convention: 1 for an unplanted root member, else 0."""
    return 1 if (0 in state.members and not tree.planted) else 0


def nb_rate_audit(state, tree):
    """Recount ``(r_plus, r_minus)`` by enumerating events and check them against the formulas.

    Raises :class:`InvariantViolation` if the enumerated rates differ from
    the formulas, or if ``r_plus - r_minus`` differs from
    :func:`expected_rate_excess` (zero for planted trees and for clusters
    away from the root).
    """
    tree = as_rooted(tree)
    grow = len(_grow_edges(tree, state.members))
    shrink = sum(w for _, w in _shrink_weights(tree, state.members))
    r_plus, r_minus = nb_rates(tree, state)
    if (grow, shrink) != (r_plus, r_minus):
        raise InvariantViolation(f"enumerated rates ({grow}, {shrink}) != formulas ({r_plus}, {r_minus})")
    if r_plus - r_minus != expected_rate_excess(tree, state):
        raise InvariantViolation(f"r_plus={r_plus} r_minus={r_minus} on members {sorted(state.members)}")
    return r_plus, r_minus


def nb_cluster_step(state, tree, rng):
    """One event of the dual: grow along a down edge (rate 1 each) or lose a member."""
    tree = as_rooted(tree)
    if not state.members:
        raise GraphUsageError("the cluster is empty (absorbed)")
    grow = _grow_edges(tree, state.members)
    shrink = _shrink_weights(tree, state.members)
    total = len(grow) + sum(w for _, w in shrink)
    if total == 0:
        state.clock = np.inf
        return state
    state.clock += rng.exponential(1.0 / total)
    target = int(rng.integers(total))
    if target < len(grow):
        state.members.add(grow[target][1])
    else:
        target -= len(grow)
        for w, k in shrink:
            if target < k:
                state.members.discard(w)
                break
            target -= k
    state.jump_count += 1
    return state


def nb_cluster_trajectory(tree, v, n_steps, rng, audit=True):
    """Run ``n_steps`` dual events from ``{v}``, auditing the rates at every state; returns the sizes."""
    tree = as_rooted(tree)
    state = nb_cluster_init(tree, v)
    sizes = [state.size]
    for _ in range(n_steps):
        if audit:
            nb_rate_audit(state, tree)
        if not state.members:
            break
        nb_cluster_step(state, tree, rng)
        sizes.append(state.size)
    if audit:
        nb_rate_audit(state, tree)
    return np.array(sizes)


def nb_dual_survival(tree, grid, reps, seed, fixed_tree=False, level=0.99):
    """Survival of the dual cluster of the root on ``grid`` (Python stepper).

    By duality this is the probability that the root is occupied at ``t`` in
    the zap model on the infinite tree. Every replicate explores a fresh copy
    of the lazy tree; Galton-Watson trees are resampled per replicate unless
    ``fixed_tree`` is set.
    """
    from .crw import _grid
    from .rng import replicate_key

    tree = as_rooted(tree)
    if not tree.lazy:
        raise ConfigurationError("the dual runs on lazy infinite trees (e.g. bintree, regtree:3, gw:geom:0.5)")
    grid = _grid(grid)
    counts = np.zeros(len(grid), dtype=np.int64)
    for r in range(reps):
        rng = rng_stream(seed, r)
        g = tree.g.fresh(None if fixed_tree else replicate_key(seed, r))
        local = RootedTree(g, planted=tree.planted)
        state = nb_cluster_init(local, 0)
        gi = 0
        while gi < len(grid):
            alive = bool(state.members)
            if alive:
                nb_cluster_step(state, local, rng)
            else:
                state.clock = np.inf
            while gi < len(grid) and grid[gi] < state.clock:
                counts[gi] += alive
                gi += 1
    return EstimateSeries(grid, counts, reps, "nb_dual", level)


# ------------------------------------------------------------- estimators

@dataclass
class RootOccupation:
    """Root occupation time ``X_T`` per replicate and root occupancy on a grid."""

    model: str
    T: float
    X: np.ndarray
    occupancy: EstimateSeries

    @property
    def mean(self):
        return float(self.X.mean())

    @property
    def se(self):
        return float(self.X.std(ddof=1) / np.sqrt(len(self.X)))

    def write_samples(self, path):
        """One ``X_T`` value per line."""
        with open(path, "w") as fh:
            fh.writelines(f"{x!r}\n" for x in self.X.tolist())


MODELS = ("full_nb", "zap")


def root_occupation(model, tree, T, reps, seed, grid=None, planted=False, level=0.99):
    """Sample ``X_T`` and the root indicator on ``grid`` (default ``[T]``) for ``full_nb`` or ``zap``."""
    if model not in MODELS:
        raise ConfigurationError(f"model must be one of {MODELS}, got {model!r}")
    if T <= 0:
        raise ConfigurationError("T must be positive")
    tree = as_rooted(tree, planted)
    grid = np.array([T], dtype=float) if grid is None else np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0) or grid[0] < 0 or grid[-1] > T:
        raise ConfigurationError("grid must be strictly increasing inside [0, T]")
    parent, ch_ptr, ch_idx, child_pos, nomdeg = tree.kernel_arrays()
    keys = replicate_keys(seed, reps)
    if model == "full_nb":
        parts = fan_out(lambda k: _kernels.nb_full(parent, ch_ptr, ch_idx, child_pos, nomdeg, tree.planted,
                                                   float(T), grid, k), keys)
    else:
        parts = fan_out(lambda k: _kernels.zap(parent, nomdeg, float(T), grid, k), keys)
    X = np.concatenate([p[0] for p in parts])
    counts = np.sum([p[1] for p in parts], axis=0)
    return RootOccupation(model, float(T), X, EstimateSeries(grid, counts, reps, model, level))


@dataclass(frozen=True)
class Comparison:
    mean_full: float
    mean_zap: float
    pooled_se: float
    ks: float
    ks_critical: float

    @property
    def means_agree(self):
        return abs(self.mean_full - self.mean_zap) <= 3 * self.pooled_se

    @property
    def ks_pass(self):
        return self.ks < self.ks_critical


def compare_models(full, zap, alpha=0.01):
    """Mean difference in pooled SEs and the two-sample KS statistic of ``X_T``."""
    from scipy.stats import ks_2samp

    ks = ks_2samp(full.X, zap.X).statistic
    pooled = float(np.hypot(full.se, zap.se))
    return Comparison(full.mean, zap.mean, pooled, float(ks), ks_critical(len(full.X), len(zap.X), alpha))

"""Graph oracles: finite graphs, lattice and tree windows, lazy infinite trees.

All simulators talk to a graph through :class:`GraphOracle`, which answers
``neighbors(v)`` and ``degree(v)`` over integer vertex ids. Ids are dense and
assigned in order of first exposure; id 0 is always the distinguished vertex
(the origin of a lattice, the root of a tree).

Graph spec strings
------------------
``path:n``, ``cycle:n``, ``star:n`` (``n`` vertices, centre 0),
``complete:n``, ``torus:d:side``, ``edges:0-1,1-2,...``,
``line`` (lazy Z) or ``line:R`` (window ``[-R, R]``),
``regtree:d`` (lazy d-regular tree) or ``regtree:d:R`` (radius-R window),
``bintree`` (lazy rooted binary tree: root degree 2, others 3) or ``bintree:L``
(truncated at depth L),
``gw:geom:p``, ``gw:poisson:lam``, ``gw:uniform:a:b`` (lazy Galton-Watson tree,
offspring supported on 1, 2, ...).
"""
import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import rng as _rng


class ConfigurationError(ValueError):
    """Invalid graph, grid or experiment parameters."""


class GraphUsageError(LookupError):
    """Query on a vertex the oracle has never exposed."""


GEOMETRIC, POISSON, UNIFORM = 0, 1, 2
_FAMILY_CODES = {"geometric": GEOMETRIC, "poisson": POISSON, "uniform": UNIFORM}


@njit(cache=True, nogil=True)
def offspring_ppf(family, p1, p2, u):
    """Inverse CDF of an offspring law on {1, 2, ...} evaluated at ``u``."""
    if family == 0:
        k = np.int64(math.ceil(math.log(u) / math.log1p(-p1)))
        return max(k, 1)
    if family == 1:
        # 1 + Poisson(p1)
        term = math.exp(-p1)
        cdf = term
        k = 0
        while cdf < u and k < 10000:
            k += 1
            term *= p1 / k
            cdf += term
        return k + 1
    lo = np.int64(p1)
    hi = np.int64(p2)
    k = lo + np.int64(u * (hi - lo + 1))
    return min(k, hi)


@dataclass(frozen=True)
class OffspringDistribution:
    """Offspring law supported on the positive integers.

    ``geometric`` has ``P(k) = p (1-p)^(k-1)``; ``poisson`` is ``1 + Poisson(lam)``;
    ``uniform`` is uniform on ``{a, ..., b}`` with ``a >= 1``.
    """

    family: str
    p1: float
    p2: float = 0.0

    def __post_init__(self):
        if self.family not in _FAMILY_CODES:
            raise ConfigurationError(f"unknown offspring family {self.family!r}")
        if self.family == "geometric" and not 0.0 < self.p1 < 1.0:
            raise ConfigurationError(f"geometric parameter must lie in (0, 1), got {self.p1}")
        if self.family == "poisson" and not self.p1 > 0.0:
            raise ConfigurationError(f"poisson mean must be positive, got {self.p1}")
        if self.family == "uniform":
            if self.p1 != int(self.p1) or self.p2 != int(self.p2):
                raise ConfigurationError("uniform offspring bounds must be integers")
            if self.p1 < 1:
                raise ConfigurationError("uniform offspring support must start at 1 or above")
            if self.p1 > self.p2:
                raise ConfigurationError(f"uniform offspring needs a <= b, got a={self.p1}, b={self.p2}")

    @classmethod
    def geometric(cls, p):
        return cls("geometric", float(p))

    @classmethod
    def one_plus_poisson(cls, lam):
        return cls("poisson", float(lam))

    @classmethod
    def bounded_uniform(cls, a, b):
        return cls("uniform", float(a), float(b))

    @property
    def code(self):
        return _FAMILY_CODES[self.family]

    @property
    def tail_rate(self):
        """Largest ``c`` with ``P(X > x) <= exp(-c x)`` for large ``x`` (inf if lighter)."""
        if self.family == "geometric":
            return -math.log1p(-self.p1)
        return math.inf

    def ppf(self, u):
        return int(offspring_ppf(self.code, self.p1, self.p2, float(u)))

    def sample(self, rng, size):
        u = rng.random(size)
        u[u == 0.0] = 0.5 * 2.0**-53
        return np.array([offspring_ppf(self.code, self.p1, self.p2, x) for x in u], dtype=np.int64)

    def tail(self, x):
        """``P(X > x)``."""
        if self.family == "geometric":
            return (1.0 - self.p1) ** max(math.floor(x), 0)
        if self.family == "uniform":
            a, b = int(self.p1), int(self.p2)
            k = math.floor(x)
            return min(1.0, max(0.0, (b - k) / (b - a + 1)))
        from scipy.stats import poisson

        return float(poisson.sf(math.floor(x) - 1, self.p1))


@dataclass(frozen=True)
class ExposureStats:
    """Exposed-vertex count ``k`` and the running maximum degree ``D_k``."""

    k: int
    max_degree: int


class GraphOracle:
    """Adjacency queries over a possibly infinite graph."""

    kind = "abstract"
    is_finite = False
    root = 0

    def neighbors(self, v):
        raise NotImplementedError

    def degree(self, v):
        raise NotImplementedError

    @property
    def n_exposed(self):
        return len(self._degrees)

    @property
    def exposure_log(self):
        """``(vertex, degree)`` pairs in discovery order."""
        return list(enumerate(self._degrees))

    def exposed_max_degree(self):
        if not self._degrees:
            raise GraphUsageError("no vertex has been exposed yet")
        return ExposureStats(len(self._degrees), max(self._degrees))

    def _check(self, v):
        if not (0 <= v < len(self._degrees)):
            raise GraphUsageError(f"vertex {v} has not been exposed")


class FiniteGraph(GraphOracle):
    """Explicit finite graph on vertices ``0 .. n-1``.

    ``coords`` carries lattice coordinates when the graph is a window of a
    lattice. ``parent`` and ``nominal_degree`` are set for windows of trees:
    the nominal degree is the vertex degree in the untruncated tree.
    """

    is_finite = True

    def __init__(self, adjacency, kind="finite", params=(), coords=None, parent=None, nominal_degree=None):
        adj = [tuple(sorted(set(int(w) for w in nbrs))) for nbrs in adjacency]
        n = len(adj)
        if n < 2:
            raise ConfigurationError(f"finite graphs need at least 2 vertices, got {n}")
        for u, nbrs in enumerate(adj):
            if not nbrs:
                raise ConfigurationError(f"vertex {u} is isolated")
            for w in nbrs:
                if not 0 <= w < n or w == u:
                    raise ConfigurationError(f"bad neighbour {w} of vertex {u}")
                if u not in adj[w]:
                    raise ConfigurationError(f"adjacency is not symmetric at edge ({u}, {w})")
        self._adj = adj
        self._degrees = [len(a) for a in adj]
        self.kind = kind
        self.params = tuple(params)
        self.coords = coords
        self.parent = parent
        self.nominal_degree = nominal_degree

    @property
    def n_vertices(self):
        return len(self._adj)

    @property
    def max_degree(self):
        return max(self._degrees)

    def neighbors(self, v):
        self._check(v)
        return list(self._adj[v])

    def degree(self, v):
        self._check(v)
        return self._degrees[v]

    def edges(self):
        return [(u, w) for u, nbrs in enumerate(self._adj) for w in nbrs if u < w]

    def is_tree(self):
        return len(self.edges()) == self.n_vertices - 1 and self.is_connected()

    def is_connected(self):
        seen = {0}
        queue = deque([0])
        while queue:
            u = queue.popleft()
            for w in self._adj[u]:
                if w not in seen:
                    seen.add(w)
                    queue.append(w)
        return len(seen) == self.n_vertices

    def to_csr(self):
        indptr = np.zeros(self.n_vertices + 1, dtype=np.int64)
        indptr[1:] = np.cumsum(self._degrees)
        indices = np.fromiter((w for nbrs in self._adj for w in nbrs), dtype=np.int64, count=int(indptr[-1]))
        return indptr, indices

    def __repr__(self):
        return f"FiniteGraph(kind={self.kind!r}, params={self.params}, n={self.n_vertices})"


class LazyTree(GraphOracle):
    """Infinite rooted tree generated on demand.

    ``kind`` is ``line`` (Z, as the 2-regular tree rooted at the origin),
    ``regular_tree`` (every vertex of degree ``d``), ``binary_tree`` (two
    children everywhere, so the root has degree 2 and the rest 3) or ``gw_lazy``. For a
    Galton-Watson tree the root has ``X`` neighbours and every other vertex
    ``X + 1`` (its parent plus ``X`` children). Each vertex's offspring count is
    read off a key derived from its parent's key, so the tree is a pure
    function of ``tree_seed`` whatever the exposure order.
    """

    is_finite = False

    def __init__(self, kind, branching=None, offspring=None, tree_seed=0):
        if kind == "line":
            branching = 2
        if kind == "binary_tree":
            self.params = ()
            branching = 3
        elif kind in ("line", "regular_tree"):
            if branching is None or branching < 2:
                raise ConfigurationError(f"regular tree degree must be >= 2, got {branching}")
            self.params = (int(branching),)
        elif kind == "gw_lazy":
            if not isinstance(offspring, OffspringDistribution):
                raise ConfigurationError("gw_lazy needs an OffspringDistribution")
            self.params = (offspring,)
        else:
            raise ConfigurationError(f"unknown lazy tree kind {kind!r}")
        self.kind = kind
        self.branching = branching
        self.offspring = offspring
        self.tree_seed = int(tree_seed)
        self._parent = [-1]
        self._children = [None]
        self._keys = [_rng.root_key(self.tree_seed)]
        self._address = [()]
        self._n_children = [self._draw_children(self._keys[0], True)]
        self._degrees = [self._n_children[0]]

    def _draw_children(self, key, is_root):
        if self.kind == "gw_lazy":
            return self.offspring.ppf(_rng.key_uniform(key))
        if self.kind == "binary_tree":
            return 2
        return self.branching if is_root else self.branching - 1

    def _expose_children(self, v):
        kids = []
        for j in range(self._n_children[v]):
            key = _rng.child_key(self._keys[v], j)
            c = len(self._parent)
            self._parent.append(v)
            self._children.append(None)
            self._keys.append(key)
            self._address.append(self._address[v] + (j,))
            nc = self._draw_children(key, False)
            self._n_children.append(nc)
            self._degrees.append(nc + 1)
            kids.append(c)
        self._children[v] = kids

    def neighbors(self, v):
        self._check(v)
        if self._children[v] is None:
            self._expose_children(v)
        nbrs = list(self._children[v])
        if v != 0:
            nbrs.insert(0, self._parent[v])
        return nbrs

    def degree(self, v):
        self._check(v)
        return self._degrees[v]

    def parent(self, v):
        self._check(v)
        return self._parent[v]

    def children(self, v):
        self._check(v)
        if self._children[v] is None:
            self._expose_children(v)
        return list(self._children[v])

    def address(self, v):
        """Child-index path from the root; identifies a vertex across exposure orders."""
        self._check(v)
        return self._address[v]

    def fresh(self, tree_seed=None):
        """An unexplored copy, optionally with another tree seed."""
        seed = self.tree_seed if tree_seed is None else tree_seed
        return LazyTree(self.kind, self.branching, self.offspring, seed)

    def kernel_params(self):
        """``(mode, root_children, other_children, family, p1, p2)`` for compiled kernels."""
        if self.kind == "gw_lazy":
            o = self.offspring
            return (1, 0, 0, o.code, o.p1, o.p2)
        if self.kind == "binary_tree":
            return (0, 2, 2, 0, 0.0, 0.0)
        return (0, self.branching, self.branching - 1, 0, 0.0, 0.0)

    def __repr__(self):
        return f"LazyTree(kind={self.kind!r}, params={self.params}, tree_seed={self.tree_seed})"


# ------------------------------------------------------------------ generators

def path_graph(n):
    if n < 2:
        raise ConfigurationError(f"path needs n >= 2, got {n}")
    adj = [[w for w in (u - 1, u + 1) if 0 <= w < n] for u in range(n)]
    return FiniteGraph(adj, "path", (n,))


def cycle_graph(n):
    if n < 3:
        raise ConfigurationError(f"cycle needs n >= 3, got {n}")
    return FiniteGraph([[(u - 1) % n, (u + 1) % n] for u in range(n)], "cycle", (n,))


def star_graph(n):
    """Star on ``n`` vertices with centre 0."""
    if n < 2:
        raise ConfigurationError(f"star needs n >= 2, got {n}")
    adj = [list(range(1, n))] + [[0] for _ in range(1, n)]
    return FiniteGraph(adj, "star", (n,))


def complete_graph(n):
    if n < 2:
        raise ConfigurationError(f"complete graph needs n >= 2, got {n}")
    return FiniteGraph([[w for w in range(n) if w != u] for u in range(n)], "complete", (n,))


def torus_graph(dim, side):
    if dim < 1 or side < 3:
        raise ConfigurationError(f"torus needs dim >= 1 and side >= 3, got dim={dim}, side={side}")
    shape = (side,) * dim
    n = side**dim
    coords = [np.unravel_index(i, shape) for i in range(n)]
    adj = []
    for c in coords:
        nbrs = []
        for axis in range(dim):
            for step in (-1, 1):
                d = list(c)
                d[axis] = (d[axis] + step) % side
                nbrs.append(int(np.ravel_multi_index(d, shape)))
        adj.append(nbrs)
    return FiniteGraph(adj, "torus", (dim, side), coords=[tuple(int(x) for x in c) for c in coords])


def from_edges(edges, n=None):
    edges = [(int(a), int(b)) for a, b in edges]
    if n is None:
        n = 1 + max(max(e) for e in edges) if edges else 0
    adj = [[] for _ in range(n)]
    for a, b in edges:
        if a == b:
            raise ConfigurationError(f"self-loop at {a}")
        adj[a].append(b)
        adj[b].append(a)
    return FiniteGraph(adj, "finite", (tuple(edges),))


def _bfs_tree(root_children, other_children, depth):
    """Rooted tree down to ``depth`` with fixed child counts; ids in BFS order."""
    parent = [-1]
    level = [0]
    children = [[]]
    queue = deque([0])
    while queue:
        u = queue.popleft()
        if level[u] == depth:
            continue
        for _ in range(root_children if u == 0 else other_children):
            c = len(parent)
            parent.append(u)
            level.append(level[u] + 1)
            children.append([])
            children[u].append(c)
            queue.append(c)
    adj = [list(children[u]) + ([parent[u]] if parent[u] >= 0 else []) for u in range(len(parent))]
    return adj, parent


def line_window(radius):
    """Window ``[-R, R]`` of Z; id 0 is the origin, coordinates in ``coords``."""
    if radius < 1:
        raise ConfigurationError(f"line window needs radius >= 1, got {radius}")
    xs = [0]
    for r in range(1, radius + 1):
        xs += [-r, r]
    index = {x: i for i, x in enumerate(xs)}
    adj = [[index[y] for y in (x - 1, x + 1) if y in index] for x in xs]
    return FiniteGraph(adj, "line", (radius,), coords=[(x,) for x in xs], nominal_degree=np.full(len(xs), 2))


def regular_tree_window(d, radius):
    """Ball of radius ``R`` around the root of the d-regular tree."""
    if d < 2 or radius < 1:
        raise ConfigurationError(f"regular tree window needs d >= 2 and radius >= 1, got d={d}, R={radius}")
    adj, parent = _bfs_tree(d, d - 1, radius)
    return FiniteGraph(adj, "regular_tree", (d, radius), parent=np.array(parent),
                       nominal_degree=np.full(len(adj), d))


def binary_tree(depth):
    """Rooted binary tree: root with 2 children, every other vertex 2 children, truncated at ``depth``."""
    if depth < 1:
        raise ConfigurationError(f"binary tree needs depth >= 1, got {depth}")
    adj, parent = _bfs_tree(2, 2, depth)
    nominal = np.full(len(adj), 3)
    nominal[0] = 2
    return FiniteGraph(adj, "bintree", (depth,), parent=np.array(parent), nominal_degree=nominal)


def line():
    return LazyTree("line")


def regular_tree(d):
    return LazyTree("regular_tree", branching=d)


def galton_watson(offspring, tree_seed=0):
    return LazyTree("gw_lazy", offspring=offspring, tree_seed=tree_seed)


def _int(tok, what):
    try:
        return int(tok)
    except ValueError:
        raise ConfigurationError(f"{what} must be an integer, got {tok!r}") from None


def _float(tok, what):
    try:
        return float(tok)
    except ValueError:
        raise ConfigurationError(f"{what} must be a number, got {tok!r}") from None


def make_graph(spec, tree_seed=0):
    """Build a graph oracle from a spec string such as ``cycle:8`` or ``gw:geom:0.5``."""
    if not isinstance(spec, str) or not spec:
        raise ConfigurationError(f"graph spec must be a non-empty string, got {spec!r}")
    kind, *args = spec.strip().split(":")
    kind = kind.lower()
    if kind in ("path", "cycle", "star", "complete"):
        if len(args) != 1:
            raise ConfigurationError(f"{kind} takes one argument n, e.g. {kind}:6")
        n = _int(args[0], "n")
        return {"path": path_graph, "cycle": cycle_graph, "star": star_graph, "complete": complete_graph}[kind](n)
    if kind == "torus":
        if len(args) != 2:
            raise ConfigurationError("torus takes dim and side, e.g. torus:2:21")
        return torus_graph(_int(args[0], "dim"), _int(args[1], "side"))
    if kind == "edges":
        if len(args) != 1:
            raise ConfigurationError("edges takes a list like edges:0-1,1-2")
        try:
            pairs = [tuple(int(x) for x in e.split("-")) for e in args[0].split(",")]
        except ValueError:
            raise ConfigurationError(f"cannot parse edge list {args[0]!r}") from None
        if any(len(p) != 2 for p in pairs):
            raise ConfigurationError(f"cannot parse edge list {args[0]!r}")
        return from_edges(pairs)
    if kind == "line":
        if not args:
            return line()
        return line_window(_int(args[0], "radius"))
    if kind == "regtree":
        if len(args) not in (1, 2):
            raise ConfigurationError("regtree takes d and an optional window radius, e.g. regtree:3 or regtree:3:12")
        d = _int(args[0], "d")
        if len(args) == 1:
            return regular_tree(d)
        return regular_tree_window(d, _int(args[1], "radius"))
    if kind == "bintree":
        if len(args) > 1:
            raise ConfigurationError("bintree takes an optional depth, e.g. bintree or bintree:6")
        if not args:
            return LazyTree("binary_tree")
        return binary_tree(_int(args[0], "depth"))
    if kind == "gw":
        if not args:
            raise ConfigurationError("gw needs an offspring law, e.g. gw:geom:0.5")
        fam, *fargs = args
        if fam in ("geom", "geometric") and len(fargs) == 1:
            off = OffspringDistribution.geometric(_float(fargs[0], "p"))
        elif fam == "poisson" and len(fargs) == 1:
            off = OffspringDistribution.one_plus_poisson(_float(fargs[0], "lambda"))
        elif fam == "uniform" and len(fargs) == 2:
            off = OffspringDistribution.bounded_uniform(_int(fargs[0], "a"), _int(fargs[1], "b"))
        else:
            raise ConfigurationError(f"unknown offspring law {':'.join(args)!r}; use geom:p, poisson:lam or uniform:a:b")
        return galton_watson(off, tree_seed)
    raise ConfigurationError(f"unknown graph kind {kind!r}")


def neighbors(g, v):
    return g.neighbors(v)


def exposed_max_degree(g):
    return g.exposed_max_degree()

"""Exact small-instance probabilities from Kolmogorov forward equations.

States of the coalescing walk and of the dual cluster are subsets of a finite
vertex set encoded as bitmasks, so instances are limited to ``MAX_VERTICES``.
Forward equations are solved with ``scipy.sparse.linalg.expm_multiply``.
"""
import math
from contextlib import contextmanager
from functools import lru_cache

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import expm_multiply
from scipy.special import ive

from .graphs import ConfigurationError, FiniteGraph

MAX_VERTICES = 12
CONSERVATION_TOL = 1e-10
LEAK_TOL = 1e-10


class StateSpaceTooLarge(ConfigurationError):
    pass


class TruncationError(RuntimeError):
    """Truncated birth-death chain leaked too much mass; raise ``K``."""


class ModelFault(AssertionError):
    """Two routes that must agree exactly did not."""


def _edges_key(g):
    if not isinstance(g, FiniteGraph):
        raise ConfigurationError("exact oracles need a finite graph")
    if g.n_vertices > MAX_VERTICES:
        raise StateSpaceTooLarge(f"{g.n_vertices} vertices exceeds the oracle limit of {MAX_VERTICES}")
    return g.n_vertices, tuple(g.edges())


def _directed(n, edges):
    return [(a, b) for a, b in edges] + [(b, a) for a, b in edges]


@lru_cache(maxsize=64)
def _crw_generator(n, edges):
    states = np.arange(1 << n, dtype=np.int64)
    rows, cols = [], []
    for u, w in _directed(n, edges):
        src = states[(states >> u) & 1 == 1]
        dst = (src & ~(1 << u)) | (1 << w)
        rows.append(src)
        cols.append(dst)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    q = sparse.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(1 << n, 1 << n)).tocsr()
    q = q - sparse.diags(np.asarray(q.sum(axis=1)).ravel())
    return q.tocsr()


@lru_cache(maxsize=64)
def _cluster_generator(n, edges):
    states = np.arange(1 << n, dtype=np.int64)
    rows, cols = [], []
    for x, y in _directed(n, edges):
        src = states[((states >> x) & 1 == 1) & ((states >> y) & 1 == 0)]
        rows += [src, src]
        cols += [src | (1 << y), src & ~(1 << x)]
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    q = sparse.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(1 << n, 1 << n)).tocsr()
    q = q - sparse.diags(np.asarray(q.sum(axis=1)).ravel())
    return q.tocsr()


def crw_generator(g):
    """Generator of the coalescing walk on nonempty vertex subsets (row = source state)."""
    return _crw_generator(*_edges_key(g))


def cluster_generator(g):
    """Generator of the dual voter cluster on all subsets; the empty set is absorbing."""
    return _cluster_generator(*_edges_key(g))


@contextmanager
def _pinned_global_rng():
    # expm_multiply's norm estimates draw from numpy's global RNG; pin it so
    # results are bit-for-bit reproducible, and hand the caller's state back
    saved = np.random.get_state()
    np.random.seed(0)
    try:
        yield
    finally:
        np.random.set_state(saved)


def _propagate(q, p0, times):
    """Distributions at each of ``times`` (any order) started from ``p0`` at 0."""
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise ConfigurationError("times must be nonnegative")
    order = np.argsort(times, kind="stable")
    qt = q.T.tocsr()
    out = np.empty((len(times), len(p0)))
    p, now = p0.astype(float), 0.0
    for i in order:
        dt = times[i] - now
        if dt > 0:
            with _pinned_global_rng():
                p = expm_multiply(qt * dt, p)
            now = times[i]
        total = p.sum()
        if abs(total - 1.0) > CONSERVATION_TOL:
            raise ModelFault(f"probability not conserved: total mass {total!r} at t={now}")
        out[i] = p
    return out


def _scalar_or_array(t, values):
    return float(values[0]) if np.ndim(t) == 0 else values


def forward_distribution(q, p0, t):
    return _propagate(q, p0, np.atleast_1d(t))


def crw_exact_pt(g, v, t):
    """``P(v is occupied at time t)`` for the walk started from every vertex."""
    q = crw_generator(g)
    n = g.n_vertices
    p0 = np.zeros(1 << n)
    p0[(1 << n) - 1] = 1.0
    dist = _propagate(q, p0, np.atleast_1d(t))
    has_v = (np.arange(1 << n) >> v) & 1 == 1
    return _scalar_or_array(t, dist[:, has_v].sum(axis=1))


def crw_exact_from(g, initial, v, t):
    """Occupation probability of ``v`` for an arbitrary initial set."""
    q = crw_generator(g)
    s0 = sum(1 << u for u in initial)
    if s0 == 0:
        raise ConfigurationError("initial set must be nonempty")
    p0 = np.zeros(1 << g.n_vertices)
    p0[s0] = 1.0
    dist = _propagate(q, p0, np.atleast_1d(t))
    has_v = (np.arange(1 << g.n_vertices) >> v) & 1 == 1
    return _scalar_or_array(t, dist[:, has_v].sum(axis=1))


def cluster_exact_survival(g, v, t):
    """``P(cluster of v is nonempty at time t)`` for the dual voter cluster."""
    q = cluster_generator(g)
    p0 = np.zeros(1 << g.n_vertices)
    p0[1 << v] = 1.0
    dist = _propagate(q, p0, np.atleast_1d(t))
    return _scalar_or_array(t, 1.0 - dist[:, 0])


def duality_gap(g, v, t, fault_tol=1e-6):
    """``|crw_exact_pt - cluster_exact_survival|``; raises ``ModelFault`` above ``fault_tol``."""
    gap = np.abs(np.atleast_1d(crw_exact_pt(g, v, t)) - np.atleast_1d(cluster_exact_survival(g, v, t)))
    if np.any(gap > fault_tol):
        raise ModelFault(f"duality gap {gap.max():.3e} exceeds {fault_tol:g}")
    return _scalar_or_array(t, gap)


def k2_closed_form(t):
    """Occupation probability on K_2: ``(1 + exp(-2t)) / 2``."""
    return 0.5 * (1.0 + np.exp(-2.0 * np.asarray(t, dtype=float)))


# ------------------------------------------------------- birth-death chains

def default_truncation(rate, t):
    return max(64, math.ceil(40 * (1 + rate * float(np.max(t)))))


def _birth_death(up, down, K):
    """Tridiagonal generator on ``0..K`` with 0 and K absorbing."""
    k = np.arange(1, K)
    rows = np.concatenate([k, k])
    cols = np.concatenate([k + 1, k - 1])
    vals = np.concatenate([up(k), down(k)])
    q = sparse.coo_matrix((vals, (rows, cols)), shape=(K + 1, K + 1)).tocsr()
    return (q - sparse.diags(np.asarray(q.sum(axis=1)).ravel())).tocsr()


def _chain_survival(q, t):
    p0 = np.zeros(q.shape[0])
    p0[1] = 1.0
    dist = _propagate(q, p0, np.atleast_1d(t))
    survival = 1.0 - dist[:, 0]
    leak = dist[:, -1]
    if np.any(leak > LEAK_TOL):
        raise TruncationError(f"leaked mass {leak.max():.3e} at truncation K={q.shape[0] - 1}; increase K")
    return survival, leak


def branching_survival(D, t, K=None, return_leak=False):
    """``P(W_t > 0)`` for the walk moving ``k -> k +- 1`` each at rate ``D k`` from 1.

    The chain is truncated at ``K`` (absorbing). The closed form is ``1/(1 + D t)``.
    """
    if D <= 0:
        raise ConfigurationError(f"D must be positive, got {D}")
    K = K or default_truncation(D, t)
    q = _birth_death(lambda k: D * k, lambda k: D * k, K)
    surv, leak = _chain_survival(q, t)
    if return_leak:
        return _scalar_or_array(t, surv), _scalar_or_array(t, leak)
    return _scalar_or_array(t, surv)


def constant_rate_survival(a, t, K=None, return_leak=False):
    """Survival to time ``t`` of the walk moving ``+-1`` each at rate ``a``, from 1, killed at 0."""
    if a <= 0:
        raise ConfigurationError(f"rate must be positive, got {a}")
    K = K or default_truncation(a, t)
    q = _birth_death(lambda k: np.full(len(k), float(a)), lambda k: np.full(len(k), float(a)), K)
    surv, leak = _chain_survival(q, t)
    if return_leak:
        return _scalar_or_array(t, surv), _scalar_or_array(t, leak)
    return _scalar_or_array(t, surv)


def constant_rate_survival_bessel(a, t):
    """Closed form ``exp(-2at) (I_0(2at) + I_1(2at))`` of :func:`constant_rate_survival`."""
    x = 2.0 * a * np.asarray(t, dtype=float)
    val = ive(0, x) + ive(1, x)
    return float(val) if np.ndim(t) == 0 else val


def constant_rate_asymptote(a):
    """Limit of ``sqrt(t) * constant_rate_survival(a, t)``: ``1 / sqrt(pi a)``."""
    return 1.0 / math.sqrt(math.pi * a)

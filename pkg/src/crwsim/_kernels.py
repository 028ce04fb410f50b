"""Compiled Monte Carlo kernels.

Every kernel takes a vector of replicate keys (see :mod:`crwsim.rng`) and
returns per-grid success counts or per-replicate samples, so results depend
only on the keys and never on how replicates are split across workers.

Graph access comes in two flavours sharing one code path: a finite graph in
CSR form, or a lazily grown rooted tree stored in preallocated arrays. A
lazy replicate that outgrows its arrays reports overflow and is rerun by the
caller with larger storage.
"""
import numpy as np
from numba import njit

from .graphs import offspring_ppf
from .rng import (exponential, nb_child_key, nb_key_uniform, nb_root_key, randint,
                  seed_state, uniform)

# ------------------------------------------------------------ coalescing walk


@njit(cache=True, nogil=True)
def _degree_classes(deg):
    """Class index per vertex and per-class degree/offset; vertices of equal degree share a class."""
    values = np.unique(deg)
    cls = np.searchsorted(values, deg)
    cstart = np.zeros(len(values) + 1, dtype=np.int64)
    for u in range(len(deg)):
        cstart[cls[u] + 1] += 1
    cstart = np.cumsum(cstart)
    return cls, values, cstart


@njit(cache=True, nogil=True)
def crw_run(indptr, indices, v, init, grid, starts, horizon, keys):
    """Occupancy of ``v`` on ``grid`` and first occupation times after each of ``starts``.

    One trajectory per replicate serves both outputs; it runs to
    ``max(grid[-1], horizon)``. Returns ``(counts, sigma[r, j])`` with
    ``np.inf`` marking no occupation of ``v`` in ``[starts[j], horizon]``.
    The event loop is written out in place: helper calls taking arrays cost
    reference-count traffic on every event.
    """
    n = len(indptr) - 1
    deg = np.diff(indptr)
    # occupied vertices are kept in per-degree buckets so that a vertex can be
    # drawn proportionally to its degree without rejection
    cvals = np.unique(deg)
    nc = len(cvals)
    cls = np.searchsorted(cvals, deg)
    cstart = np.zeros(nc + 1, dtype=np.int64)
    for u in range(n):
        cstart[cls[u] + 1] += 1
    cstart = np.cumsum(cstart)
    csize = np.zeros(nc, dtype=np.int64)
    occ = np.zeros(n, dtype=np.int8)
    plist = np.empty(n, dtype=np.int64)
    pos = np.empty(n, dtype=np.int64)
    ng = len(grid)
    ns = len(starts)
    counts = np.zeros(ng, dtype=np.int64)
    sigma = np.full((len(keys), ns), np.inf)
    for r in range(len(keys)):
        s = seed_state(keys[r])
        csize[:] = 0
        rate = 0
        for u in init:
            c = cls[u]
            occ[u] = 1
            i = cstart[c] + csize[c]
            plist[i] = u
            pos[u] = i
            csize[c] += 1
            rate += deg[u]
        clock = 0.0
        gi = 0
        j = 0
        while gi < ng or (j < ns and clock <= horizon):
            nxt = clock + exponential(s, rate)
            while gi < ng and grid[gi] < nxt:
                counts[gi] += occ[v]
                gi += 1
            if occ[v]:
                while j < ns and starts[j] < nxt:
                    hit = max(starts[j], clock)
                    if hit <= horizon:
                        sigma[r, j] = hit
                    j += 1
            x = randint(s, rate)
            c = 0
            while x >= csize[c] * cvals[c]:
                x -= csize[c] * cvals[c]
                c += 1
            u = plist[cstart[c] + x // cvals[c]]
            w = indices[indptr[u] + randint(s, deg[u])]
            occ[u] = 0
            rate -= deg[u]
            last = plist[cstart[c] + csize[c] - 1]
            plist[pos[u]] = last
            pos[last] = pos[u]
            csize[c] -= 1
            if not occ[w]:
                c = cls[w]
                occ[w] = 1
                i = cstart[c] + csize[c]
                plist[i] = w
                pos[w] = i
                csize[c] += 1
                rate += deg[w]
            clock = nxt
        for c in range(nc):
            for i in range(cstart[c], cstart[c] + csize[c]):
                occ[plist[i]] = 0
    return counts, sigma


# ---------------------------------------------------------------- dual cluster


@njit(cache=True, nogil=True)
def _fen_add(fen, i, delta):
    i += 1
    n = len(fen) - 1
    while i <= n:
        fen[i] += delta
        i += i & (-i)


@njit(cache=True, nogil=True)
def _fen_find(fen, target):
    """Slot whose cumulative weight interval contains ``target``, and the offset inside it."""
    n = len(fen) - 1
    step = 1
    while step * 2 <= n:
        step *= 2
    p = 0
    while step > 0:
        q = p + step
        if q <= n and fen[q] <= target:
            p = q
            target -= fen[q]
        step //= 2
    return p, target


@njit(cache=True, nogil=True)
def _deg(lazy, x, cdeg, tnch):
    if lazy:
        return tnch[x] + (1 if x > 0 else 0)
    return cdeg[x]


@njit(cache=True, nogil=True)
def _nbr(lazy, x, j, indptr, indices, tpar, tfirst):
    if lazy:
        if x > 0:
            if j == 0:
                return tpar[x]
            return tfirst[x] + j - 1
        return tfirst[x] + j
    return indices[indptr[x] + j]


@njit(cache=True, nogil=True)
def _expose(x, tpar, tfirst, tnch, tkey, n, tmode, tfix, fam, p1, p2):
    """Allocate ids for the children of ``x``; returns the new node count or -1 on overflow."""
    if tfirst[x] >= 0:
        return n
    k = tnch[x]
    if n + k > len(tpar):
        return -1
    tfirst[x] = n
    for j in range(k):
        c = n + j
        tpar[c] = x
        tfirst[c] = -1
        tkey[c] = nb_child_key(tkey[x], j)
        if tmode == 0:
            tnch[c] = tfix
        else:
            tnch[c] = offspring_ppf(fam, p1, p2, nb_key_uniform(tkey[c]))
    return n + k


@njit(cache=True, nogil=True)
def _tree_reset(tree_seed, tpar, tfirst, tnch, tkey, tmode, troot, fam, p1, p2):
    tpar[0] = -1
    tfirst[0] = -1
    tkey[0] = nb_root_key(tree_seed)
    if tmode == 0:
        tnch[0] = troot
    else:
        tnch[0] = offspring_ppf(fam, p1, p2, nb_key_uniform(tkey[0]))
    return 1


@njit(cache=True, nogil=True)
def _join(y, lazy, indptr, indices, cdeg, tpar, tfirst, tnch, slot, mem, outc, fen, m, b):
    """Add ``y`` to the cluster; returns new (size, boundary)."""
    dy = _deg(lazy, y, cdeg, tnch)
    inside = 0
    for j in range(dy):
        z = _nbr(lazy, y, j, indptr, indices, tpar, tfirst)
        sz = slot[z]
        if sz >= 0:
            inside += 1
            outc[sz] -= 1
            _fen_add(fen, sz, -1)
    slot[y] = m
    mem[m] = y
    outc[m] = dy - inside
    _fen_add(fen, m, dy - inside)
    return m + 1, b - inside + (dy - inside)


@njit(cache=True, nogil=True)
def _leave(x, lazy, indptr, indices, cdeg, tpar, tfirst, tnch, slot, mem, outc, fen, m, b):
    sx = slot[x]
    dx = _deg(lazy, x, cdeg, tnch)
    inside = dx - outc[sx]
    for j in range(dx):
        z = _nbr(lazy, x, j, indptr, indices, tpar, tfirst)
        sz = slot[z]
        if sz >= 0:
            outc[sz] += 1
            _fen_add(fen, sz, 1)
    b = b - outc[sx] + inside
    _fen_add(fen, sx, -outc[sx])
    last = m - 1
    if sx != last:
        y = mem[last]
        w = outc[last]
        _fen_add(fen, last, -w)
        _fen_add(fen, sx, w)
        mem[sx] = y
        outc[sx] = w
        slot[y] = sx
    slot[x] = -1
    return m - 1, b


@njit(cache=True, nogil=True)
def _cluster_event(s, lazy, indptr, indices, cdeg, tpar, tfirst, tnch, tkey, n,
                   tmode, tfix, fam, p1, p2, slot, mem, outc, fen, m, b):
    """One jump of the cluster. Returns (size, boundary, node count); node count -1 on overflow."""
    target = randint(s, b)
    sx, off = _fen_find(fen, target)
    x = mem[sx]
    if uniform(s) < 0.5:
        # grow along the off-th outgoing boundary edge of x
        dx = _deg(lazy, x, cdeg, tnch)
        y = -1
        for j in range(dx):
            z = _nbr(lazy, x, j, indptr, indices, tpar, tfirst)
            if slot[z] < 0:
                if off == 0:
                    y = z
                    break
                off -= 1
        if lazy:
            n = _expose(y, tpar, tfirst, tnch, tkey, n, tmode, tfix, fam, p1, p2)
            if n < 0:
                return m, b, -1
        m, b = _join(y, lazy, indptr, indices, cdeg, tpar, tfirst, tnch, slot, mem, outc, fen, m, b)
    else:
        m, b = _leave(x, lazy, indptr, indices, cdeg, tpar, tfirst, tnch, slot, mem, outc, fen, m, b)
    return m, b, n


@njit(cache=True, nogil=True)
def _cluster_start(v, lazy, indptr, indices, cdeg, tpar, tfirst, tnch, tkey, tree_seed,
                   tmode, troot, tfix, fam, p1, p2, slot, mem, outc, fen):
    n = 0
    if lazy:
        n = _tree_reset(tree_seed, tpar, tfirst, tnch, tkey, tmode, troot, fam, p1, p2)
        slot[0] = -1
        # slots of fresh ids are already -1: cleanup resets every exposed id
        n = _expose(0, tpar, tfirst, tnch, tkey, n, tmode, tfix, fam, p1, p2)
        if n < 0:
            return 0, 0, -1
    m, b = _join(v, lazy, indptr, indices, cdeg, tpar, tfirst, tnch, slot, mem, outc, fen, 0, 0)
    return m, b, n


@njit(cache=True, nogil=True)
def _cluster_cleanup(lazy, n, slot, mem, outc, fen, m):
    for i in range(m):
        _fen_add(fen, i, -outc[i])
        slot[mem[i]] = -1
        outc[i] = 0
    if lazy:
        for x in range(n):
            slot[x] = -1


@njit(cache=True, nogil=True)
def cluster_survival(lazy, v, indptr, indices, tree, tree_seeds, grid, size_cap, keys, capacity):
    """Survival counts of the dual cluster of ``v`` on ``grid``.

    ``tree = (mode, root_children, other_children, family, p1, p2)`` describes
    the lazy tree (ignored for CSR). Returns ``(counts, cap_hits, overflow)``
    where ``overflow[r]`` flags replicates that need more storage; their
    contribution is left out of ``counts``.
    """
    tmode, troot, tfix, fam = np.int64(tree[0]), np.int64(tree[1]), np.int64(tree[2]), np.int64(tree[3])
    p1, p2 = tree[4], tree[5]
    nv = capacity if lazy else len(indptr) - 1
    cdeg = np.diff(indptr)
    tpar = np.empty(nv if lazy else 1, dtype=np.int64)
    tfirst = np.empty(nv if lazy else 1, dtype=np.int64)
    tnch = np.empty(nv if lazy else 1, dtype=np.int64)
    tkey = np.empty(nv if lazy else 1, dtype=np.uint64)
    slot = np.full(nv, -1, dtype=np.int64)
    mem = np.empty(nv, dtype=np.int64)
    outc = np.zeros(nv, dtype=np.int64)
    fen = np.zeros(nv + 1, dtype=np.int64)
    ng = len(grid)
    counts = np.zeros(ng, dtype=np.int64)
    overflow = np.zeros(len(keys), dtype=np.bool_)
    cap_hits = 0
    local = np.zeros(ng, dtype=np.int64)
    for r in range(len(keys)):
        s = seed_state(keys[r])
        m, b, n = _cluster_start(v, lazy, indptr, indices, cdeg, tpar, tfirst, tnch, tkey, tree_seeds[r],
                                 tmode, troot, tfix, fam, p1, p2, slot, mem, outc, fen)
        if n < 0:
            overflow[r] = True
            continue
        clock = 0.0
        gi = 0
        capped = False
        while gi < ng:
            if m == 0:
                break
            if b == 0:
                # whole finite graph: absorbing, survives forever
                while gi < ng:
                    local[gi] = 1
                    gi += 1
                break
            nxt = clock + exponential(s, 2.0 * b)
            while gi < ng and grid[gi] < nxt:
                local[gi] = 1
                gi += 1
            if gi == ng:
                break
            m, b, n = _cluster_event(s, lazy, indptr, indices, cdeg, tpar, tfirst, tnch, tkey, n,
                                     tmode, tfix, fam, p1, p2, slot, mem, outc, fen, m, b)
            if n < 0:
                break
            clock = nxt
            if m > size_cap:
                capped = True
                while gi < ng:
                    local[gi] = 1
                    gi += 1
                break
        if n < 0:
            overflow[r] = True
            _cluster_cleanup(lazy, len(tpar), slot, mem, outc, fen, m)
            local[:] = 0
            continue
        _cluster_cleanup(lazy, n, slot, mem, outc, fen, m)
        for i in range(ng):
            counts[i] += local[i]
            local[i] = 0
        if capped:
            cap_hits += 1
    return counts, cap_hits, overflow


@njit(cache=True, nogil=True)
def cluster_jumps(lazy, v, indptr, indices, tree, tree_seeds, n_jumps, record, thresholds, keys, capacity):
    """Cluster sizes after each jump index in ``record`` and threshold exceedances of the running max.

    Absorbed clusters contribute size 0 at later indices (padding jumps at 0).
    Returns ``(sizes[r, k], exceed[r, j], overflow)``.
    """
    tmode, troot, tfix, fam = np.int64(tree[0]), np.int64(tree[1]), np.int64(tree[2]), np.int64(tree[3])
    p1, p2 = tree[4], tree[5]
    nv = capacity if lazy else len(indptr) - 1
    cdeg = np.diff(indptr)
    tpar = np.empty(nv if lazy else 1, dtype=np.int64)
    tfirst = np.empty(nv if lazy else 1, dtype=np.int64)
    tnch = np.empty(nv if lazy else 1, dtype=np.int64)
    tkey = np.empty(nv if lazy else 1, dtype=np.uint64)
    slot = np.full(nv, -1, dtype=np.int64)
    mem = np.empty(nv, dtype=np.int64)
    outc = np.zeros(nv, dtype=np.int64)
    fen = np.zeros(nv + 1, dtype=np.int64)
    nrec = len(record)
    sizes = np.zeros((len(keys), nrec), dtype=np.int64)
    exceed = np.zeros((len(keys), len(thresholds)), dtype=np.bool_)
    overflow = np.zeros(len(keys), dtype=np.bool_)
    for r in range(len(keys)):
        s = seed_state(keys[r])
        m, b, n = _cluster_start(v, lazy, indptr, indices, cdeg, tpar, tfirst, tnch, tkey, tree_seeds[r],
                                 tmode, troot, tfix, fam, p1, p2, slot, mem, outc, fen)
        if n < 0:
            overflow[r] = True
            continue
        k = 0
        while k < nrec and record[k] == 0:
            sizes[r, k] = m
            k += 1
        top = m
        i = 0
        while i < n_jumps and m > 0 and b > 0:
            m, b, n = _cluster_event(s, lazy, indptr, indices, cdeg, tpar, tfirst, tnch, tkey, n,
                                     tmode, tfix, fam, p1, p2, slot, mem, outc, fen, m, b)
            if n < 0:
                break
            i += 1
            if m > top:
                top = m
            while k < nrec and record[k] == i:
                sizes[r, k] = m
                k += 1
        if n < 0:
            overflow[r] = True
            _cluster_cleanup(lazy, len(tpar), slot, mem, outc, fen, m)
            continue
        if m > 0:
            # frozen at the whole finite graph: size stays put
            while k < nrec:
                sizes[r, k] = m
                k += 1
        for j in range(len(thresholds)):
            exceed[r, j] = top > thresholds[j]
        _cluster_cleanup(lazy, n, slot, mem, outc, fen, m)
    return sizes, exceed, overflow


# ------------------------------------------------------ branching comparison


@njit(cache=True, nogil=True)
def branching_walk(D, grid, keys):
    """Survival counts of the walk ``k -> k +- 1`` each at rate ``D k`` from 1."""
    ng = len(grid)
    counts = np.zeros(ng, dtype=np.int64)
    for r in range(len(keys)):
        s = seed_state(keys[r])
        k = 1
        clock = 0.0
        gi = 0
        while gi < ng and k > 0:
            nxt = clock + exponential(s, 2.0 * D * k)
            while gi < ng and grid[gi] < nxt:
                counts[gi] += 1
                gi += 1
            if uniform(s) < 0.5:
                k += 1
            else:
                k -= 1
            clock = nxt
    return counts


# ------------------------------------------------------ non-backtracking trees


@njit(cache=True, nogil=True)
def _pick_weighted(s, plist, m, weight, wmax):
    while True:
        i = randint(s, m)
        u = plist[i]
        if weight[u] == wmax or uniform(s) * wmax < weight[u]:
            return i


@njit(cache=True, nogil=True)
def _drop(plist, pos, m, i):
    last = plist[m - 1]
    plist[i] = last
    pos[last] = i
    return m - 1


@njit(cache=True, nogil=True)
def nb_full(parent, ch_ptr, ch_idx, child_pos, nomdeg, planted, T, grid, keys):
    """Non-backtracking coalescing walk with priority to rootward particles.

    Forbidden edges are stored as slots: -1 for the edge towards the root
    (parent, or the stem into the sink for a planted root) and ``k >= 0`` for
    the ``k``-th child, where children beyond the stored ones lie outside the
    truncation window. Returns ``(X_T per replicate, root occupancy counts on grid)``.
    """
    n = len(parent)
    occ = np.zeros(n, dtype=np.int8)
    fslot = np.zeros(n, dtype=np.int64)
    away = np.zeros(n, dtype=np.int8)
    plist = np.empty(n, dtype=np.int64)
    pos = np.empty(n, dtype=np.int64)
    w8 = nomdeg - 1
    wmax = w8.max()
    nch = np.empty(n, dtype=np.int64)
    for x in range(n):
        nch[x] = nomdeg[x] - (1 if (x > 0 or planted) else 0)
    X = np.zeros(len(keys))
    ng = len(grid)
    counts = np.zeros(ng, dtype=np.int64)
    for r in range(len(keys)):
        s = seed_state(keys[r])
        rate = 0
        for x in range(n):
            occ[x] = 1
            fslot[x] = randint(s, nch[x])
            away[x] = 0
            plist[x] = x
            pos[x] = x
            rate += w8[x]
        m = n
        clock = 0.0
        gi = 0
        xt = 0.0
        while True:
            if rate > 0:
                nxt = clock + exponential(s, rate)
            else:
                nxt = np.inf
            end = min(nxt, T)
            if occ[0]:
                xt += end - clock
            while gi < ng and grid[gi] < nxt:
                counts[gi] += occ[0]
                gi += 1
            if nxt >= T and gi == ng:
                break
            if nxt == np.inf:
                break
            i = _pick_weighted(s, plist, m, w8, wmax)
            u = plist[i]
            up = 1 if (u > 0 or planted) else 0
            # uniform allowed slot among nomdeg-1 (all slots except the forbidden one)
            j = randint(s, w8[u])
            sl = j - up  # slots run -1 (if up exists), 0, 1, ...
            if sl >= fslot[u]:
                sl += 1
            mdir = away[u]
            occ[u] = 0
            rate -= w8[u]
            if sl == -1:
                if u == 0:
                    m = _drop(plist, pos, m, i)
                    clock = nxt
                    continue
                w = parent[u]
                nf = child_pos[u]
                mdir = 0
            else:
                if sl >= ch_ptr[u + 1] - ch_ptr[u]:
                    m = _drop(plist, pos, m, i)
                    clock = nxt
                    continue
                w = ch_idx[ch_ptr[u] + sl]
                nf = -1
                mdir = 1
            if occ[w]:
                if mdir == 1 and away[w] == 0:
                    # the away-moving mover is annihilated
                    m = _drop(plist, pos, m, i)
                    clock = nxt
                    continue
                # occupant annihilated, mover keeps the site
                m = _drop(plist, pos, m, i)
                fslot[w] = nf
                away[w] = mdir
            else:
                occ[w] = 1
                plist[i] = w
                pos[w] = i
                fslot[w] = nf
                away[w] = mdir
                rate += w8[w]
            clock = nxt
        X[r] = xt
    return X, counts


@njit(cache=True, nogil=True)
def zap(parent, nomdeg, T, grid, keys):
    """Reduced model: rootward moves at rate 1, deletion at the remaining rate.

    A particle at ``x`` has total rate ``nomdeg[x] - 1``; off the root one unit
    of it moves the particle to its parent, everything else deletes it.
    """
    n = len(parent)
    occ = np.zeros(n, dtype=np.int8)
    plist = np.empty(n, dtype=np.int64)
    pos = np.empty(n, dtype=np.int64)
    w8 = nomdeg - 1
    wmax = w8.max()
    X = np.zeros(len(keys))
    ng = len(grid)
    counts = np.zeros(ng, dtype=np.int64)
    for r in range(len(keys)):
        s = seed_state(keys[r])
        rate = 0
        for x in range(n):
            occ[x] = 1
            plist[x] = x
            pos[x] = x
            rate += w8[x]
        m = n
        clock = 0.0
        gi = 0
        xt = 0.0
        while True:
            if rate > 0:
                nxt = clock + exponential(s, rate)
            else:
                nxt = np.inf
            end = min(nxt, T)
            if occ[0]:
                xt += end - clock
            while gi < ng and grid[gi] < nxt:
                counts[gi] += occ[0]
                gi += 1
            if nxt >= T and gi == ng:
                break
            if nxt == np.inf:
                break
            i = _pick_weighted(s, plist, m, w8, wmax)
            u = plist[i]
            occ[u] = 0
            rate -= w8[u]
            if u > 0 and randint(s, w8[u]) == 0:
                w = parent[u]
                if occ[w]:
                    m = _drop(plist, pos, m, i)
                else:
                    occ[w] = 1
                    plist[i] = w
                    pos[w] = i
                    rate += w8[w]
            else:
                m = _drop(plist, pos, m, i)
            clock = nxt
        X[r] = xt
    return X, counts

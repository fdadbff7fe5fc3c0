"""Jitted kernels.  Every function mirrors ``_kernels_numpy`` bit for bit."""

import numpy as np
from numba import njit

from subperc import hashing

_GOLDEN = np.uint64(hashing.GOLDEN)
_M1 = np.uint64(hashing._M1)
_M2 = np.uint64(hashing._M2)
_WORD_ROOT = np.uint64(hashing.WORD_ROOT)
_LETTER_MULT = np.uint64(hashing.LETTER_MULT)
_LETTER_OFFSET = hashing.LETTER_OFFSET
_INV = hashing.INV_2_53
_S11 = np.uint64(11)
_S27 = np.uint64(27)
_S30 = np.uint64(30)
_S31 = np.uint64(31)


@njit(cache=True, inline="always")
def _mix(x):
    z = x + _GOLDEN
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, inline="always")
def _unit(h):
    return np.float64(h >> _S11) * _INV


@njit(cache=True, inline="always")
def _key(a, b):
    if a <= b:
        return _mix(a ^ _mix(b))
    return _mix(b ^ _mix(a))


@njit(cache=True, inline="always")
def _word_step(h, s):
    return _mix(h ^ (np.uint64(s + _LETTER_OFFSET) * _LETTER_MULT))


@njit(cache=True, nogil=True)
def _mix_array(x):
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        out[i] = _mix(x[i])
    return out


def mix64(x):
    x = np.asarray(x, dtype=np.uint64)
    return _mix_array(x.ravel()).reshape(x.shape)


def to_unit(h):
    return (np.asarray(h, dtype=np.uint64) >> np.uint64(11)).astype(np.float64) * _INV


@njit(cache=True, nogil=True)
def _edge_keys(a, b):
    out = np.empty(a.shape[0], np.uint64)
    for i in range(a.shape[0]):
        out[i] = _key(a[i], b[i])
    return out


def edge_keys(fp_a, fp_b):
    return _edge_keys(np.ascontiguousarray(fp_a, np.uint64), np.ascontiguousarray(fp_b, np.uint64))


@njit(cache=True, nogil=True)
def _edge_uniforms(keys, state):
    out = np.empty(keys.shape[0])
    for i in range(keys.shape[0]):
        out[i] = _unit(_mix(keys[i] ^ state))
    return out


def edge_uniforms(keys, state):
    keys = np.asarray(keys, dtype=np.uint64)
    return _edge_uniforms(keys.ravel(), np.uint64(state)).reshape(keys.shape)


@njit(cache=True, inline="always")
def _find(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


@njit(cache=True, nogil=True)
def components(n, edges, is_open):
    """Cluster labels ``0..C-1`` numbered by smallest member vertex."""
    parent = np.arange(n, dtype=np.int32)
    for e in range(edges.shape[0]):
        if is_open[e]:
            a = _find(parent, edges[e, 0])
            b = _find(parent, edges[e, 1])
            if a < b:
                parent[b] = a
            elif b < a:
                parent[a] = b
    labels = np.empty(n, np.int32)
    ids = np.full(n, -1, np.int32)
    nxt = 0
    for v in range(n):
        r = _find(parent, v)
        if ids[r] < 0:
            ids[r] = nxt
            nxt += 1
        labels[v] = ids[r]
    return labels


@njit(cache=True, inline="always")
def _heap_push(hv, hx, size, val, x):
    i = size
    hv[i] = val
    hx[i] = x
    while i > 0:
        up = (i - 1) >> 1
        if hv[up] < hv[i] or (hv[up] == hv[i] and hx[up] <= hx[i]):
            break
        hv[up], hv[i] = hv[i], hv[up]
        hx[up], hx[i] = hx[i], hx[up]
        i = up
    return size + 1


@njit(cache=True, inline="always")
def _heap_pop(hv, hx, size):
    val = hv[0]
    x = hx[0]
    size -= 1
    hv[0] = hv[size]
    hx[0] = hx[size]
    i = 0
    while True:
        lft = 2 * i + 1
        if lft >= size:
            break
        best = lft
        rgt = lft + 1
        if rgt < size and (hv[rgt] < hv[lft] or (hv[rgt] == hv[lft] and hx[rgt] < hx[lft])):
            best = rgt
        if hv[i] < hv[best] or (hv[i] == hv[best] and hx[i] <= hx[best]):
            break
        hv[best], hv[i] = hv[i], hv[best]
        hx[best], hx[i] = hx[i], hx[best]
        i = best
    return val, x, size


@njit(cache=True, nogil=True)
def _grow(hv, hx):
    nv = np.empty(2 * hv.shape[0])
    nx = np.empty(2 * hx.shape[0], np.int64)
    nv[: hv.shape[0]] = hv
    nx[: hx.shape[0]] = hx
    return nv, nx


@njit(cache=True, nogil=True)
def _invade_core(nbr, eid, keys, state, source, p_cap, dist, r_stop, hmask, need_h, target, mark, stamp):
    """Invasion percolation from ``source`` on a neighbour table.

    Vertices are absorbed in order of the cheapest frontier edge; the running
    maximum at absorption is the minimax path value from ``source``, so a vertex
    is in the source's cluster at ``p`` iff that value is ``< p``.  The source
    gets ``-1``.  Edges with value ``>= p_cap`` are never used.

    Returns ``(reach, hthr, nh, tthr, n_invaded)``: ``reach[r]`` for the first
    vertex at ``dist >= r`` (``r <= r_stop``), ``hthr[:nh]`` for the vertices
    in ``hmask`` in absorption order, ``tthr`` for ``target``.  Missing values
    are ``inf``.  The run stops once the radius, target and the first
    ``need_h`` marked vertices are settled; ``need_h < 0`` explores the whole
    cluster at ``p_cap``.  ``mark`` is scratch, ``stamp`` a fresh tag per call.
    """
    deg = nbr.shape[1]
    reach = np.full(max(r_stop + 1, 0), np.inf)
    hthr = np.full(max(need_h, 16), np.inf)
    nh = 0
    tthr = np.inf
    runmax = -1.0
    done_r = r_stop < 0
    next_r = 0
    n_inv = 0
    hv = np.empty(64)
    hx = np.empty(64, np.int64)
    size = 0
    cur = source
    while True:
        mark[cur] = stamp
        n_inv += 1
        if hmask[cur] and (need_h < 0 or nh < need_h):
            if nh == hthr.shape[0]:
                grown = np.full(2 * nh, np.inf)
                grown[:nh] = hthr
                hthr = grown
            hthr[nh] = runmax
            nh += 1
        if cur == target:
            tthr = runmax
        if not done_r:
            d = dist[cur]
            while next_r <= d and next_r <= r_stop:
                reach[next_r] = runmax
                next_r += 1
            done_r = next_r > r_stop
        if done_r and need_h >= 0 and nh >= need_h and (target < 0 or tthr < np.inf):
            break
        for j in range(deg):
            w = nbr[cur, j]
            if w < 0 or mark[w] == stamp:
                continue
            val = _unit(_mix(keys[eid[cur, j]] ^ state))
            if val < p_cap:
                if size == hv.shape[0]:
                    hv, hx = _grow(hv, hx)
                size = _heap_push(hv, hx, size, val, w)
        found = False
        val = 0.0
        w = 0
        while size > 0:
            val, w, size = _heap_pop(hv, hx, size)
            if mark[w] != stamp:
                found = True
                break
        if not found:
            break
        runmax = max(runmax, val)
        cur = w
    return reach, hthr[: max(need_h, nh)], nh, tthr, n_inv


def invade(nbr, eid, keys, state, source, p_cap, dist, r_stop, hmask, need_h, target, mark, stamp):
    return _invade_core(
        nbr, eid, keys, np.uint64(state), source, p_cap, dist, r_stop, hmask, need_h, target, mark, stamp
    )


invade.__doc__ = _invade_core.__doc__


@njit(cache=True, nogil=True)
def _walk(table, start, T, stream, counter0, hold):
    m = table.shape[1]
    pos = np.empty(T + 1, np.int32)
    pos[0] = start
    refl = 0
    c = counter0
    for t in range(T):
        x = pos[t]
        while True:
            j = int(_unit(_mix(stream ^ _mix(np.uint64(c)))) * m)
            c += 1
            y = table[x, j]
            if y >= 0:
                break
            refl += 1
            if hold:
                y = x
                break
            stuck = True
            for i in range(m):
                if table[x, i] >= 0:
                    stuck = False
            if stuck:
                return pos[: t + 1], refl, t, c
        pos[t + 1] = y
    return pos, refl, -1, c


def walk(table, start, T, stream, counter0, hold=False):
    """Uniform-step walk; moves that leave the table are redrawn, or turned
    into a stay when ``hold`` is set."""
    return _walk(table, start, T, np.uint64(stream), counter0, hold)


@njit(cache=True, nogil=True)
def sweep_counts(n, edges, values, hcount, bmask, m, p_grid):
    # edges at or above the top of the grid never change a reported count
    live = np.flatnonzero(values < p_grid[-1]) if p_grid.shape[0] else np.zeros(0, np.int64)
    order = live[np.argsort(values[live], kind="mergesort")]
    parent = np.arange(n, dtype=np.int32)
    cnt = hcount.astype(np.int64)
    touch = bmask.copy()
    good = 0
    for v in range(n):
        if cnt[v] >= m and touch[v]:
            good += 1
    out = np.zeros(p_grid.shape[0], np.int64)
    gi = 0
    for idx in range(order.shape[0]):
        e = order[idx]
        v = values[e]
        while gi < p_grid.shape[0] and p_grid[gi] <= v:
            out[gi] = good
            gi += 1
        a = _find(parent, edges[e, 0])
        b = _find(parent, edges[e, 1])
        if a == b:
            continue
        if b < a:
            a, b = b, a
        if cnt[a] >= m and touch[a]:
            good -= 1
        if cnt[b] >= m and touch[b]:
            good -= 1
        parent[b] = a
        cnt[a] += cnt[b]
        touch[a] = touch[a] or touch[b]
        if cnt[a] >= m and touch[a]:
            good += 1
    while gi < p_grid.shape[0]:
        out[gi] = good
        gi += 1
    return out


@njit(cache=True, nogil=True)
def _grow_nodes(fp, parent, letter, depth, flag, child):
    n = fp.shape[0]
    fp2 = np.empty(2 * n, np.uint64)
    parent2 = np.empty(2 * n, np.int64)
    letter2 = np.empty(2 * n, np.int64)
    depth2 = np.empty(2 * n, np.int64)
    flag2 = np.empty(2 * n)
    child2 = np.full((2 * n, child.shape[1]), -1, np.int64)
    fp2[:n] = fp
    parent2[:n] = parent
    letter2[:n] = letter
    depth2[:n] = depth
    flag2[:n] = flag
    child2[:n] = child
    return fp2, parent2, letter2, depth2, flag2, child2


@njit(cache=True, nogil=True)
def _free_invade(k, chain, axis, state, p_cap, r_stop, need_h, max_nodes):
    m = 2 * k
    cap = 64
    while cap < chain.shape[0] + 2:
        cap *= 2
    fp = np.empty(cap, np.uint64)
    parent = np.empty(cap, np.int64)
    letter = np.empty(cap, np.int64)
    depth = np.empty(cap, np.int64)
    in_h = np.empty(cap)  # 1.0 member, 0.0 not, kept float to share the grower
    child = np.full((cap, m), -1, np.int64)
    fp[0] = _WORD_ROOT
    parent[0] = -1
    letter[0] = 0
    depth[0] = 0
    in_h[0] = 1.0
    n = 1
    for s in chain:
        i = n - 1
        fp[n] = _word_step(fp[i], s)
        parent[n] = i
        letter[n] = s
        depth[n] = depth[i] + 1
        in_h[n] = 1.0 if in_h[i] > 0 and (axis == 0 or abs(s) == axis) else 0.0
        child[i, 2 * (abs(s) - 1) + (1 if s < 0 else 0)] = n
        n += 1
    source = n - 1
    visited = np.zeros(cap, np.bool_)
    reach = np.full(max(r_stop + 1, 0), np.inf)
    hthr = np.full(need_h, np.inf)
    nh = 0
    runmax = -1.0
    done_r = r_stop < 0
    next_r = 0
    hv = np.empty(64)
    hx = np.empty(64, np.int64)
    size = 0
    cur = source
    while True:
        visited[cur] = True
        if in_h[cur] > 0 and nh < need_h:
            hthr[nh] = runmax
            nh += 1
        if not done_r:
            d = depth[cur]
            while next_r <= d and next_r <= r_stop:
                reach[next_r] = runmax
                next_r += 1
            done_r = next_r > r_stop
        if done_r and nh >= need_h:
            break
        for j in range(m):
            s = j // 2 + 1
            if j % 2 == 1:
                s = -s
            if depth[cur] > 0 and s == -letter[cur]:
                w = parent[cur]
            else:
                w = child[cur, j]
                if w < 0:
                    if n >= max_nodes:
                        return reach, hthr, nh, n, True
                    if n == fp.shape[0]:
                        fp, parent, letter, depth, in_h, child = _grow_nodes(
                            fp, parent, letter, depth, in_h, child
                        )
                        vis2 = np.zeros(fp.shape[0], np.bool_)
                        vis2[: visited.shape[0]] = visited
                        visited = vis2
                    w = n
                    fp[w] = _word_step(fp[cur], s)
                    parent[w] = cur
                    letter[w] = s
                    depth[w] = depth[cur] + 1
                    in_h[w] = 1.0 if in_h[cur] > 0 and (axis == 0 or abs(s) == axis) else 0.0
                    child[cur, j] = w
                    n += 1
            if visited[w]:
                continue
            val = _unit(_mix(_key(fp[cur], fp[w]) ^ state))
            if val < p_cap:
                if size == hv.shape[0]:
                    hv, hx = _grow(hv, hx)
                size = _heap_push(hv, hx, size, val, w)
        found = False
        val = 0.0
        w = 0
        while size > 0:
            val, w, size = _heap_pop(hv, hx, size)
            if not visited[w]:
                found = True
                break
        if not found:
            break
        runmax = max(runmax, val)
        cur = w
    return reach, hthr, nh, n, False


def free_invade(k, chain_letters, axis, state, p_cap, r_stop, need_h, max_nodes):
    chain = np.asarray(chain_letters, dtype=np.int64)
    return _free_invade(k, chain, axis, np.uint64(state), p_cap, r_stop, need_h, max_nodes)


@njit(cache=True, nogil=True)
def _free_walk(k, T, stream, state, counter0):
    m = 2 * k
    cap = 64
    fp = np.empty(cap, np.uint64)
    parent = np.empty(cap, np.int64)
    letter = np.empty(cap, np.int64)
    dep = np.empty(cap, np.int64)
    pmax = np.empty(cap)
    child = np.full((cap, m), -1, np.int64)
    fp[0] = _WORD_ROOT
    parent[0] = -1
    letter[0] = 0
    dep[0] = 0
    pmax[0] = -1.0
    n = 1
    new_vals = np.empty(T)
    new_steps = np.empty(T, np.int64)
    n_new = 0
    out = np.empty(T + 1)
    depth = np.empty(T + 1, np.int32)
    out[0] = -1.0
    depth[0] = 0
    cur = 0
    for t in range(T):
        j = int(_unit(_mix(stream ^ _mix(np.uint64(counter0 + t)))) * m)
        s = j // 2 + 1
        if j % 2 == 1:
            s = -s
        if dep[cur] > 0 and s == -letter[cur]:
            cur = parent[cur]
        else:
            w = child[cur, j]
            if w < 0:
                if n == fp.shape[0]:
                    fp, parent, letter, dep, pmax, child = _grow_nodes(
                        fp, parent, letter, dep, pmax, child
                    )
                w = n
                fp[w] = _word_step(fp[cur], s)
                val = _unit(_mix(_key(fp[cur], fp[w]) ^ state))
                new_vals[n_new] = val
                new_steps[n_new] = t + 1
                n_new += 1
                parent[w] = cur
                letter[w] = s
                dep[w] = dep[cur] + 1
                pmax[w] = max(pmax[cur], val)
                child[cur, j] = w
                n += 1
            cur = w
        out[t + 1] = pmax[cur]
        depth[t + 1] = dep[cur]
    return out, new_vals[:n_new].copy(), new_steps[:n_new].copy(), depth


def free_walk(k, T, stream, state, counter0):
    """Simple random walk on the free-group tree; see the numpy version."""
    return _free_walk(k, T, np.uint64(stream), np.uint64(state), counter0)


@njit(cache=True, nogil=True)
def _invade_batch(nbr, eid, keys, states, sources, p_grid, p_cap, dist, r_stop, hmask, need_h):
    n = nbr.shape[0]
    N = states.shape[0]
    P = p_grid.shape[0]
    mark = np.zeros(n, np.int64)
    reach = np.full((N, max(r_stop + 1, 0)), np.inf)
    hcount = np.zeros((N, P), np.int64)
    sizes = np.zeros(N, np.int64)
    for i in range(N):
        r, hthr, nh, _, n_inv = _invade_core(
            nbr, eid, keys, states[i], sources[i], p_cap, dist, r_stop, hmask, need_h, -1, mark, i + 1
        )
        reach[i, :] = r
        for k in range(P):
            c = 0
            for t in range(nh):
                if hthr[t] < p_grid[k]:
                    c += 1
            hcount[i, k] = c
        sizes[i] = n_inv
    return reach, hcount, sizes


def invade_batch(nbr, eid, keys, states, sources, p_grid, p_cap, dist, r_stop, hmask, need_h):
    """Invasion from ``sources[i]`` under field ``states[i]`` for every ``i``.

    Returns ``(reach, hcount, sizes)`` with ``hcount[i, k]`` the number of
    marked vertices in the source's cluster at ``p_grid[k]`` (capped at
    ``need_h`` when that is nonnegative).
    """
    return _invade_batch(
        nbr, eid, keys, np.asarray(states, np.uint64), np.asarray(sources, np.int64),
        np.asarray(p_grid, np.float64), p_cap, dist, r_stop, hmask, need_h,
    )


@njit(cache=True, nogil=True)
def _free_invade_batch(k, chain, axis, states, p_grid, p_cap, r_stop, need_h, max_nodes):
    N = states.shape[0]
    P = p_grid.shape[0]
    reach = np.full((N, max(r_stop + 1, 0)), np.inf)
    hcount = np.zeros((N, P), np.int64)
    sizes = np.zeros(N, np.int64)
    overflow = np.zeros(N, np.bool_)
    for i in range(N):
        r, hthr, nh, n_nodes, over = _free_invade(k, chain, axis, states[i], p_cap, r_stop, need_h, max_nodes)
        reach[i, :] = r
        for q in range(P):
            c = 0
            for t in range(nh):
                if hthr[t] < p_grid[q]:
                    c += 1
            hcount[i, q] = c
        sizes[i] = n_nodes
        overflow[i] = over
    return reach, hcount, sizes, overflow


def free_invade_batch(k, chain_letters, axis, states, p_grid, p_cap, r_stop, need_h, max_nodes):
    """``free_invade`` for every field state, summarised like ``invade_batch``."""
    return _free_invade_batch(
        k, np.asarray(chain_letters, np.int64), axis, np.asarray(states, np.uint64),
        np.asarray(p_grid, np.float64), p_cap, r_stop, need_h, max_nodes,
    )


@njit(cache=True, nogil=True)
def _connect_batch(n, edges, keys, states, p_grid, pairs, bmask):
    N = states.shape[0]
    P = p_grid.shape[0]
    Q = pairs.shape[0]
    E = edges.shape[0]
    conn = np.zeros((N, P, Q), np.bool_)
    reach0 = np.zeros((N, P), np.bool_)
    vals = np.empty(E)
    parent = np.empty(n, np.int32)
    hit = np.zeros(n, np.bool_)
    for i in range(N):
        for e in range(E):
            vals[e] = _unit(_mix(keys[e] ^ states[i]))
        for q in range(P):
            for v in range(n):
                parent[v] = v
            for e in range(E):
                if vals[e] < p_grid[q]:
                    a = _find(parent, edges[e, 0])
                    b = _find(parent, edges[e, 1])
                    if a < b:
                        parent[b] = a
                    elif b < a:
                        parent[a] = b
            for j in range(Q):
                conn[i, q, j] = _find(parent, pairs[j, 0]) == _find(parent, pairs[j, 1])
            r0 = _find(parent, 0)
            for v in range(n):
                hit[v] = False
            for v in range(n):
                if bmask[v]:
                    hit[_find(parent, v)] = True
            reach0[i, q] = hit[r0]
    return conn, reach0


def connect_batch(n, edges, keys, states, p_grid, pairs, bmask):
    """Connectivity of vertex pairs at each ``p``, one union-find per (state, p).

    Returns ``(conn, reach0)``: ``conn[i, k, j]`` for pair ``j`` at
    ``p_grid[k]`` under ``states[i]``, and whether vertex 0 reaches ``bmask``.
    """
    return _connect_batch(
        n, edges, keys, np.asarray(states, np.uint64), np.asarray(p_grid, np.float64),
        np.asarray(pairs, np.int64).reshape(-1, 2), bmask,
    )

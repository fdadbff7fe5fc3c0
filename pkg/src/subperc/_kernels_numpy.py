"""Reference kernels in numpy and plain Python.

Same signatures and bit-identical results as ``_kernels_numba``; used when
numba is missing or ``SUBPERC_DISABLE_NUMBA`` is set, and as the baseline in
the kernel benchmark.
"""

import heapq

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from subperc import hashing

_GOLDEN = np.uint64(hashing.GOLDEN)
_M1 = np.uint64(hashing._M1)
_M2 = np.uint64(hashing._M2)


def mix64(x):
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = x + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def to_unit(h):
    return (h >> np.uint64(11)).astype(np.float64) * hashing.INV_2_53


def edge_keys(fp_a, fp_b):
    lo = np.minimum(fp_a, fp_b)
    hi = np.maximum(fp_a, fp_b)
    return mix64(lo ^ mix64(hi))


def edge_uniforms(keys, state):
    return to_unit(mix64(np.asarray(keys, dtype=np.uint64) ^ np.uint64(state)))


def components(n, edges, is_open):
    """Cluster labels ``0..C-1`` numbered by smallest member vertex."""
    sel = edges[is_open]
    graph = coo_matrix((np.ones(len(sel), np.int8), (sel[:, 0], sel[:, 1])), shape=(n, n))
    _, raw = connected_components(graph, directed=False)
    # relabel by first appearance so labels do not depend on scipy's numbering
    _, first, inverse = np.unique(raw, return_index=True, return_inverse=True)
    rank = np.empty(len(first), np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(len(first))
    return rank[inverse].astype(np.int32)


def invade(nbr, eid, keys, state, source, p_cap, dist, r_stop, hmask, need_h, target, mark, stamp):
    """Invasion from ``source``; see the numba version for the contract."""
    state = int(state)
    reach = np.full(max(r_stop + 1, 0), np.inf)
    hthr = []
    nh = 0
    tthr = np.inf
    runmax = -1.0
    done_r = r_stop < 0
    next_r = 0
    n_inv = 0
    heap = []
    cur = source
    deg = nbr.shape[1]
    while True:
        mark[cur] = stamp
        n_inv += 1
        if hmask[cur] and (need_h < 0 or nh < need_h):
            hthr.append(runmax)
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
            val = hashing.edge_value(int(keys[eid[cur, j]]), state)
            if val < p_cap:
                heapq.heappush(heap, (val, int(w)))
        found = False
        while heap:
            val, w = heapq.heappop(heap)
            if mark[w] != stamp:
                found = True
                break
        if not found:
            break
        runmax = max(runmax, val)
        cur = w
    hthr += [np.inf] * (need_h - nh)
    return reach, np.array(hthr, dtype=np.float64), nh, tthr, n_inv


def _draw(stream, counter):
    return hashing.counter_uniform(int(stream), counter)


def walk(table, start, T, stream, counter0, hold=False):
    """Uniform-step walk, resampling moves that leave the table.

    With ``hold`` a move that leaves the table is replaced by staying put,
    which keeps the uniform measure stationary.  Returns ``(positions, reflections, trapped, next_counter)``; ``trapped`` is
    ``-1`` or the step at which no move was available.
    """
    m = table.shape[1]
    pos = np.empty(T + 1, np.int32)
    pos[0] = start
    refl = 0
    c = counter0
    stream = int(stream)
    for t in range(T):
        x = pos[t]
        while True:
            j = int(_draw(stream, c) * m)
            c += 1
            y = table[x, j]
            if y >= 0:
                break
            refl += 1
            if hold:
                y = x
                break
            if not (table[x] >= 0).any():
                return pos[: t + 1], refl, t, c
        pos[t + 1] = y
    return pos, refl, -1, c


def _find(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


def sweep_counts(n, edges, values, hcount, bmask, m, p_grid):
    """Number of clusters with ``>= m`` marked vertices touching the boundary,
    at each ``p`` of an ascending grid, from one edge-addition sweep."""
    order = np.argsort(values, kind="stable")
    parent = list(range(n))
    cnt = [int(c) for c in hcount]
    touch = [bool(b) for b in bmask]
    good = sum(1 for v in range(n) if cnt[v] >= m and touch[v])
    out = np.zeros(len(p_grid), np.int64)
    gi = 0
    for e in order:
        v = values[e]
        while gi < len(p_grid) and p_grid[gi] <= v:
            out[gi] = good
            gi += 1
        a = _find(parent, int(edges[e, 0]))
        b = _find(parent, int(edges[e, 1]))
        if a == b:
            continue
        if b < a:
            a, b = b, a
        good -= (cnt[a] >= m and touch[a]) + (cnt[b] >= m and touch[b])
        parent[b] = a
        cnt[a] += cnt[b]
        touch[a] = touch[a] or touch[b]
        good += cnt[a] >= m and touch[a]
    while gi < len(p_grid):
        out[gi] = good
        gi += 1
    return out


def _slot(s):
    return 2 * (abs(s) - 1) + (s < 0)


def free_invade(k, chain_letters, axis, state, p_cap, r_stop, need_h, max_nodes):
    """Invasion on the free-group tree from the vertex spelled by ``chain_letters``.

    The tree is grown on demand.  Depth is word length; H is the whole group
    (``axis = 0``) or the cyclic subgroup of letter ``axis``.  Returns
    ``(reach, hthr, nh, n_nodes, overflow)``.
    """
    state = int(state)
    fp = [hashing.WORD_ROOT]
    parent = [-1]
    letter = [0]
    depth = [0]
    in_h = [True]
    child = {}
    for s in chain_letters:
        s = int(s)
        i = len(fp) - 1
        fp.append(hashing.word_step(fp[i], s))
        parent.append(i)
        letter.append(s)
        depth.append(depth[i] + 1)
        in_h.append(in_h[i] and (axis == 0 or abs(s) == axis))
        child[(i, _slot(s))] = i + 1
    source = len(fp) - 1
    visited = set()
    reach = np.full(max(r_stop + 1, 0), np.inf)
    hthr = np.full(need_h, np.inf)
    nh = 0
    runmax = -1.0
    done_r = r_stop < 0
    next_r = 0
    heap = []
    cur = source
    letters = [s for i in range(1, k + 1) for s in (i, -i)]
    while True:
        visited.add(cur)
        if in_h[cur] and nh < need_h:
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
        for s in letters:
            if depth[cur] > 0 and s == -letter[cur]:
                w = parent[cur]
            else:
                w = child.get((cur, _slot(s)), -1)
                if w < 0:
                    if len(fp) >= max_nodes:
                        return reach, hthr, nh, len(fp), True
                    w = len(fp)
                    fp.append(hashing.word_step(fp[cur], s))
                    parent.append(cur)
                    letter.append(s)
                    depth.append(depth[cur] + 1)
                    in_h.append(in_h[cur] and (axis == 0 or abs(s) == axis))
                    child[(cur, _slot(s))] = w
            if w in visited:
                continue
            val = hashing.edge_value(hashing.edge_key(fp[cur], fp[w]), state)
            if val < p_cap:
                heapq.heappush(heap, (val, w))
        found = False
        while heap:
            val, w = heapq.heappop(heap)
            if w not in visited:
                found = True
                break
        if not found:
            break
        runmax = max(runmax, val)
        cur = w
    return reach, hthr, nh, len(fp), False


def free_walk(k, T, stream, state, counter0):
    """Simple random walk on the free-group tree from the identity.

    Returns ``(path_max, new_edge_values, new_edge_steps, depth)``: ``path_max[t]`` is the
    largest field value on the geodesic from the origin to ``Z_t`` (``-1`` at
    the origin), so ``Z_t`` is in the origin's cluster at ``p`` iff
    ``path_max[t] < p``; ``new_edge_values`` lists the values of trace edges in
    order of first traversal and ``new_edge_steps`` the step that crossed each.
    """
    stream, state = int(stream), int(state)
    fp = [hashing.WORD_ROOT]
    parent = [-1]
    letter = [0]
    dep = [0]
    pmax = [-1.0]
    child = {}
    new_vals = []
    new_steps = []
    out = np.empty(T + 1)
    depth = np.empty(T + 1, np.int32)
    out[0] = -1.0
    depth[0] = 0
    cur = 0
    m = 2 * k
    for t in range(T):
        j = int(_draw(stream, counter0 + t) * m)
        s = j // 2 + 1
        if j % 2:
            s = -s
        if dep[cur] > 0 and s == -letter[cur]:
            cur = parent[cur]
        else:
            w = child.get((cur, j), -1)
            if w < 0:
                w = len(fp)
                fp.append(hashing.word_step(fp[cur], s))
                val = hashing.edge_value(hashing.edge_key(fp[cur], fp[w]), state)
                new_vals.append(val)
                new_steps.append(t + 1)
                parent.append(cur)
                letter.append(s)
                dep.append(dep[cur] + 1)
                pmax.append(max(pmax[cur], val))
                child[(cur, j)] = w
            cur = w
        out[t + 1] = pmax[cur]
        depth[t + 1] = dep[cur]
    return (
        out,
        np.asarray(new_vals, dtype=np.float64),
        np.asarray(new_steps, dtype=np.int64),
        depth,
    )


def _counts_below(hthr, nh, p_grid):
    h = np.sort(hthr[:nh])
    return np.searchsorted(h, p_grid, side="left")


def invade_batch(nbr, eid, keys, states, sources, p_grid, p_cap, dist, r_stop, hmask, need_h):
    N = len(states)
    p_grid = np.asarray(p_grid, np.float64)
    mark = np.zeros(nbr.shape[0], np.int64)
    reach = np.full((N, max(r_stop + 1, 0)), np.inf)
    hcount = np.zeros((N, len(p_grid)), np.int64)
    sizes = np.zeros(N, np.int64)
    for i in range(N):
        r, hthr, nh, _, n_inv = invade(
            nbr, eid, keys, states[i], sources[i], p_cap, dist, r_stop, hmask, need_h, -1, mark, i + 1
        )
        reach[i] = r
        hcount[i] = _counts_below(hthr, nh, p_grid)
        sizes[i] = n_inv
    return reach, hcount, sizes


def free_invade_batch(k, chain_letters, axis, states, p_grid, p_cap, r_stop, need_h, max_nodes):
    N = len(states)
    p_grid = np.asarray(p_grid, np.float64)
    reach = np.full((N, max(r_stop + 1, 0)), np.inf)
    hcount = np.zeros((N, len(p_grid)), np.int64)
    sizes = np.zeros(N, np.int64)
    overflow = np.zeros(N, bool)
    for i in range(N):
        r, hthr, nh, n_nodes, over = free_invade(
            k, chain_letters, axis, states[i], p_cap, r_stop, need_h, max_nodes
        )
        reach[i] = r
        hcount[i] = _counts_below(hthr, nh, p_grid)
        sizes[i] = n_nodes
        overflow[i] = over
    return reach, hcount, sizes, overflow


def connect_batch(n, edges, keys, states, p_grid, pairs, bmask):
    states = np.asarray(states, np.uint64)
    pairs = np.asarray(pairs, np.int64).reshape(-1, 2)
    conn = np.zeros((len(states), len(p_grid), len(pairs)), bool)
    reach0 = np.zeros((len(states), len(p_grid)), bool)
    for i, st in enumerate(states):
        vals = edge_uniforms(keys, st)
        for q, p in enumerate(p_grid):
            labels = components(n, edges, vals < p)
            conn[i, q] = labels[pairs[:, 0]] == labels[pairs[:, 1]]
            reach0[i, q] = bool((labels[bmask] == labels[0]).any())
    return conn, reach0

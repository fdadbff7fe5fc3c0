"""Independent exact laws used as test oracles.

Nothing here imports the package: each law is computed from scratch so a
shared bug cannot make both sides agree.
"""

from collections import deque
from math import comb

import numpy as np


def tree_cluster_tail(p, d=4, K=64):
    """Cluster size law of the origin on the d-regular tree.

    Iterates the generating function of a branch (an open edge to a child
    that has ``d - 1`` further children) to a fixed point truncated at ``K``.
    Returns ``(pmf, Q)`` with ``Q[n] = P(|K_o| >= n)``.
    """

    def power(b, m):
        c = np.zeros(K)
        c[0] = 1.0
        for _ in range(m):
            c = np.convolve(c, b)[:K]
        return c

    G = np.zeros(K)  # size law of a subtree hanging below a vertex
    for _ in range(K + 2):
        b = np.zeros(K)
        b[0] = 1 - p
        b += p * G
        G = np.concatenate([[0.0], power(b, d - 1)[: K - 1]])
    b = np.zeros(K)
    b[0] = 1 - p
    b += p * G
    pmf = np.concatenate([[0.0], power(b, d)[: K - 1]])
    Q = 1 - np.concatenate([[0.0], np.cumsum(pmf)[:-1]])
    return pmf, Q


def galton_watson_pc(d):
    """Bond threshold of the d-regular tree: mean offspring (d - 1) p = 1."""
    return 1.0 / (d - 1)


def oriented_level_law(p, d, height, K):
    """Law of ``|K_o & L_0|`` on the oriented d-regular tree restricted to
    levels ``0..height`` (levels increase toward the end).

    The cluster climbs ``J`` ancestors (``P(J = j) = p^j (1 - p)``, truncated
    at ``height``); from the ancestor at height ``i`` each of its other
    ``d - 2`` children spawns an independent branching process whose level-0
    population is ``Z_{i-1}`` with ``Bin(d - 1, p)`` offspring.
    """
    b = d - 1

    def conv(a, c):
        return np.convolve(a, c)[:K]

    off = np.array([comb(b, j) * p**j * (1 - p) ** (b - j) for j in range(b + 1)])
    Z = [np.zeros(K)]
    Z[0][1] = 1.0
    for _ in range(height):
        g = Z[-1]
        z = np.zeros(K)
        gp = np.zeros(K)
        gp[0] = 1.0
        for j in range(b + 1):
            z += off[j] * gp
            gp = conv(gp, g)
        Z.append(z)
    total = np.zeros(K)
    cur = np.zeros(K)
    cur[1] = 1.0
    for j in range(height + 1):
        w = p**j * ((1 - p) if j < height else 1.0)
        total += w * cur
        if j < height:
            branch = p * Z[j]
            branch[0] += 1 - p
            for _ in range(b - 1):
                cur = conv(cur, branch)
    return total


def bfs_ball(identity, neighbours, R):
    """Plain BFS ball: ``{vertex: distance}`` for every vertex within ``R``."""
    dist = {identity: 0}
    q = deque([identity])
    while q:
        v = q.popleft()
        if dist[v] == R:
            continue
        for w in neighbours(v):
            if w not in dist:
                dist[w] = dist[v] + 1
                q.append(w)
    return dist


def lattice_ball_size(d, R):
    """``|B_R|`` in Z^d with the l1 metric: sum_k 2^k C(d, k) C(R, k)."""
    return sum(2**k * comb(d, k) * comb(R, k) for k in range(min(d, R) + 1))


def wreath_free_neighbours(k):
    """Neighbour map of Z_2 wr F_k on (frozenset of lit lamps, reduced word)."""

    def reduce(word):
        out = []
        for s in word:
            if out and out[-1] == -s:
                out.pop()
            else:
                out.append(s)
        return tuple(out)

    def nb(v):
        lamps, pos = v
        out = [(lamps ^ {pos}, pos)]
        for s in range(1, k + 1):
            for t in (s, -s):
                out.append((lamps, reduce(pos + (t,))))
        return out

    return nb


def _canon(labels, marked):
    remap = {}
    out = tuple(remap.setdefault(l, len(remap)) for l in labels)
    return out, (remap[marked] if marked is not None and marked in remap else None)


def box_connection_probability(p, width=5, height=5, x_row=2, y_row=2):
    """``P_p(x <-> y)`` inside a ``width x height`` box of Z^2 using only
    edges of the box, with ``x`` in the first column and ``y`` in the last.

    Column-by-column transfer over connectivity partitions of the frontier;
    the state remembers which block holds ``x`` and is dropped once that
    block has no frontier vertex left.
    """
    from itertools import product

    def vertical(labels, bits):
        labels = list(labels)
        for i, b in enumerate(bits):
            if b:
                a, c = labels[i], labels[i + 1]
                if a != c:
                    labels = [a if l == c else l for l in labels]
        return labels

    states = {}
    for bits in product((0, 1), repeat=height - 1):
        w = p ** sum(bits) * (1 - p) ** (height - 1 - sum(bits))
        lab = vertical(range(height), bits)
        key = _canon(lab, lab[x_row])
        states[key] = states.get(key, 0.0) + w
    for _ in range(width - 1):
        nxt = {}
        for (lab, xl), w0 in states.items():
            for hbits in product((0, 1), repeat=height):
                wh = p ** sum(hbits) * (1 - p) ** (height - sum(hbits))
                # new column starts as fresh labels; open horizontals inherit the old label
                new = [lab[i] if hbits[i] else height + i for i in range(height)]
                for vbits in product((0, 1), repeat=height - 1):
                    wv = p ** sum(vbits) * (1 - p) ** (height - 1 - sum(vbits))
                    merged = list(new)
                    for i, b in enumerate(vbits):
                        if b:
                            a, c = merged[i], merged[i + 1]
                            if a != c:
                                merged = [a if l == c else l for l in merged]
                    # the x block survives if some new vertex descends from it
                    old_x = [l for l, h, m in zip(lab, hbits, new) if h and l == xl]
                    xl_new = None
                    if old_x:
                        for i in range(height):
                            if hbits[i] and lab[i] == xl:
                                xl_new = merged[i]
                                break
                    if xl_new is None:
                        continue
                    key = _canon(merged, xl_new)
                    nxt[key] = nxt.get(key, 0.0) + w0 * wh * wv
        states = nxt
    return sum(w for (lab, xl), w in states.items() if lab[y_row] == xl)

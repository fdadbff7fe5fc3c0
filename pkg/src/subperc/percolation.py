"""Coupled Bernoulli bond percolation on Cayley balls.

A :class:`CouplingField` assigns every edge a uniform value that depends only
on ``(seed, edge key)``; the configuration at ``p`` opens the edges whose
value is below ``p``.  All ``p`` therefore share one field, and every
observable built from it is exactly monotone in ``p``.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from subperc import groups, hashing, kernels


class CouplingField:
    """Per-edge uniforms keyed by ``(seed, edge key)``."""

    __slots__ = ("seed", "state")

    def __init__(self, seed):
        self.seed = int(seed)
        self.state = hashing.stream(self.seed, hashing.TAG_FIELD)

    def __repr__(self):
        return f"CouplingField(seed={self.seed})"

    def value(self, key):
        return hashing.edge_value(int(key), self.state)

    def values(self, keys):
        return kernels.edge_uniforms(keys, self.state)

    def edge_value(self, model, a, b):
        """Value of the edge between two adjacent elements of ``model``."""
        return self.value(hashing.edge_key(model.fingerprint(a), model.fingerprint(b)))


@dataclass(eq=False)
class Configuration:
    ball: groups.BallGraph
    p: float
    open: np.ndarray
    field: CouplingField

    @property
    def n_open(self):
        return int(self.open.sum())


def sample(ball, coupling, p):
    """Open exactly the edges with field value below ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    return Configuration(ball, float(p), coupling.values(ball.edge_keys) < p, coupling)


@dataclass(eq=False)
class ClusterPartition:
    """Open clusters of a configuration.

    ``labels[v]`` numbers clusters by their smallest vertex, which is also the
    cluster's representative and the union-find root in ``parent``.
    """

    ball: groups.BallGraph
    labels: np.ndarray
    sizes: np.ndarray
    representative: np.ndarray
    touches_boundary: np.ndarray
    _counts: dict = field(default_factory=dict, repr=False)

    @property
    def n_clusters(self):
        return len(self.sizes)

    @property
    def parent(self):
        return self.representative[self.labels]

    def find(self, v):
        return int(self.representative[self.labels[v]])

    def members(self, cluster):
        return np.flatnonzero(self.labels == cluster)

    def count_in(self, spec):
        """Per-cluster ``|K & H|``."""
        c = self._counts.get(spec.label)
        if c is None:
            c = np.bincount(
                self.labels, weights=self.ball.mask(spec), minlength=self.n_clusters
            ).astype(np.int64)
            self._counts[spec.label] = c
        return c


def clusters(config, subgroups=()):
    ball = config.ball
    labels = kernels.components(ball.n_vertices, ball.edges, config.open)
    return partition_from_labels(ball, labels, subgroups)


def partition_from_labels(ball, labels, subgroups=()):
    n_clusters = int(labels.max()) + 1 if len(labels) else 0
    sizes = np.bincount(labels, minlength=n_clusters)
    rep = np.full(n_clusters, ball.n_vertices, np.int64)
    np.minimum.at(rep, labels, np.arange(ball.n_vertices))
    touches = np.zeros(n_clusters, bool)
    touches[labels[ball.boundary]] = True
    part = ClusterPartition(ball, labels, sizes, rep, touches)
    for spec in subgroups:
        part.count_in(spec)
    return part


def relative_cluster_counts(partition, spec, m):
    """Clusters meeting ``spec`` in at least ``m`` vertices and touching the boundary."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return int(((partition.count_in(spec) >= m) & partition.touches_boundary).sum())


def wilson_interval(hits, n, z=1.96):
    """Wilson score interval for a binomial proportion."""
    if n == 0:
        return 0.0, 1.0
    phat = hits / n
    denom = 1.0 + z * z / n
    centre = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass(frozen=True)
class Proportion:
    hits: int
    n: int

    @property
    def estimate(self):
        return self.hits / self.n if self.n else float("nan")

    @property
    def ci(self):
        return wilson_interval(self.hits, self.n)

    def sigma(self, truth=None):
        """Binomial standard error, at ``truth`` when given."""
        q = self.estimate if truth is None else truth
        return math.sqrt(max(q * (1 - q), 0.0) / self.n) if self.n else float("inf")


def worker_count(workers=None):
    if workers is None:
        workers = int(os.environ.get("SUBPERC_WORKERS", "1"))
    return max(1, int(workers))


def map_seeds(fn, seeds, workers=None, chunk=None):
    """``[fn(seed) for seed in seeds]`` on a thread pool, in seed order.

    Results are merged in input order, so the output does not depend on the
    number of workers.
    """
    seeds = list(seeds)
    workers = worker_count(workers)
    if workers == 1 or len(seeds) < 2:
        return [fn(s) for s in seeds]
    if chunk is None:
        chunk = max(1, len(seeds) // (8 * workers))
    blocks = [seeds[i : i + chunk] for i in range(0, len(seeds), chunk)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = pool.map(lambda b: [fn(s) for s in b], blocks)
        return [r for part in parts for r in part]


def seed_list(base_seed, n):
    return [base_seed + i for i in range(n)]


def geodesic_keys(model, x, y):
    """Edge keys along the unique geodesic between two vertices of a free group."""
    inv_x = model.invert(x)
    word = model.multiply(inv_x, y)
    keys = []
    cur = x
    fp_cur = model.fingerprint(cur)
    for s in word:
        nxt = model.multiply(cur, (s,))
        fp_nxt = model.fingerprint(nxt)
        keys.append(hashing.edge_key(fp_cur, fp_nxt))
        cur, fp_cur = nxt, fp_nxt
    return np.array(keys, dtype=np.uint64)


def field_states(seeds):
    return np.array([hashing.stream(s, hashing.TAG_FIELD) for s in seeds], dtype=np.uint64)


def geodesic_max(keys, seeds):
    """Largest field value on a fixed edge set, per seed; ``-1`` for no edges."""
    states = field_states(seeds)
    if len(keys) == 0:
        return np.full(len(states), -1.0)
    return kernels.edge_uniforms(states[:, None] ^ keys[None, :], 0).max(axis=1)


def connection_thresholds(ball, seeds, x, y, p_cap=1.0, workers=None):
    """Per-seed minimax value between ``x`` and ``y`` inside ``ball``.

    ``x`` and ``y`` are connected at ``p`` iff the returned value is ``< p``;
    ``inf`` means not connected for any ``p < p_cap``.
    """
    model = ball.model
    if isinstance(model, groups.FreeGroup):
        keys = geodesic_keys(model, x, y)
        vals = geodesic_max(keys, seeds)
        vals[vals >= p_cap] = np.inf
        return vals
    ix, iy = ball.index_of(x), ball.index_of(y)
    if ix == iy:
        return np.full(len(seeds), -1.0)
    none = np.zeros(ball.n_vertices, bool)

    def one(seed):
        mark = np.zeros(ball.n_vertices, np.int32)
        state = hashing.stream(seed, hashing.TAG_FIELD)
        _, _, _, t, _ = kernels.invade(
            ball.nbr, ball.eid, ball.edge_keys, state, ix, p_cap, ball.dist, -1, none, 0, iy, mark, 1
        )
        return t

    return np.array(map_seeds(one, seeds, workers))


@dataclass(frozen=True)
class TwoPointEstimate(Proportion):
    p: float = 0.0
    distance: int = 0


def two_point(ball, seeds, p, x, y, margin=None, workers=None):
    """Frequency estimate of ``P_p(x <-> y)`` over the fields in ``seeds``.

    Both endpoints must sit at distance ``<= R - margin`` from the root; the
    default margin is ``d(x, y)``.  Inside a finite ball connections can only
    be lost, so the estimate is a one-sided lower bound of the full-graph value.
    """
    model = ball.model
    d = model.word_length(model.multiply(model.invert(x), y))
    margin = d if margin is None else margin
    for v in (x, y):
        i = ball.index_of(v)
        if ball.dist[i] > ball.radius - margin:
            raise groups.VertexOutsideBall(
                f"{model.format(v)} is within {margin} of the boundary of B_{ball.radius}"
            )
    seeds = list(seeds)
    thr = connection_thresholds(ball, seeds, x, y, p_cap=p, workers=workers)
    hits = int((thr < p).sum())
    return TwoPointEstimate(hits, len(seeds), p, d)

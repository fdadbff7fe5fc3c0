"""Subgroup random walks and cluster frequencies.

A walk steps by a uniformly chosen generator of the subgroup.  Inside a
finite ball a step that would leave the ball is redrawn (``"resample"``) or
replaced by a stay (``"hold"``); the number of such events is kept so the
boundary bias can be reported.  Redrawing weights the long-run occupation by
in-ball degree; holding keeps it uniform on the reachable set.  Step choices come from
a counter-based stream keyed by the walk seed, independent of the field.
"""

import math
from dataclasses import dataclass

import numpy as np

from subperc import groups, hashing, kernels
from subperc.percolation import CouplingField, clusters, map_seeds, sample, seed_list

REFLECTION_FLAG = 0.01
BOOTSTRAP_REPS = 400
BOUNDARY_RULES = ("resample", "hold")


class WalkerTrapped(RuntimeError):
    pass


class NoFrequency(ValueError):
    pass


@dataclass(eq=False)
class WalkPath:
    ball: groups.BallGraph
    positions: np.ndarray
    reflections: int
    seed: int
    generators: tuple
    boundary: str = "resample"

    @property
    def T(self):
        return len(self.positions) - 1

    @property
    def reflection_fraction(self):
        return self.reflections / max(self.T, 1)

    @property
    def flagged(self):
        return self.reflection_fraction > REFLECTION_FLAG

    def elements(self):
        return [self.ball.vertices[i] for i in self.positions]


def run_walk(ball, spec, T, seed, boundary="resample"):
    """Walk of ``T`` steps from the subgroup's base point (the identity for a
    subgroup, ``g`` for a coset ``gH``)."""
    if T < 0:
        raise ValueError("T must be >= 0")
    if boundary not in BOUNDARY_RULES:
        raise ValueError(f"boundary must be one of {BOUNDARY_RULES}, got {boundary!r}")
    if not spec.generators:
        raise ValueError(f"{spec.label} has no generators to walk with")
    start = spec.base_point if spec.base_point is not None else ball.model.identity
    table = ball.step_table(spec.generators)
    i0 = ball.index_of(start)
    stream = hashing.stream(seed, hashing.TAG_WALK)
    if T and boundary == "hold" and not (table[i0] >= 0).any():
        pos, refl, trapped = np.array([i0], np.int32), 0, 0
    else:
        pos, refl, trapped, _ = kernels.walk(table, i0, T, stream, 0, boundary == "hold")
    if trapped >= 0:
        raise WalkerTrapped(
            f"no generator of {spec.label} keeps {ball.model.format(ball.vertices[pos[-1]])} "
            f"inside B_{ball.radius} (step {trapped})"
        )
    return WalkPath(ball, pos, int(refl), seed, tuple(spec.generators), boundary)


def block_bootstrap(indicator, reps=BOOTSTRAP_REPS, seed=0, block=None):
    """Moving-block bootstrap of a time average.

    Returns ``(se, lo, hi)``: the replicate standard deviation and the 2.5 and
    97.5 percentiles.  Block length defaults to ``ceil(sqrt(T))``.
    """
    x = np.asarray(indicator, dtype=float)
    T = len(x)
    if T == 0:
        return math.nan, math.nan, math.nan
    b = block or max(1, math.ceil(math.sqrt(T)))
    b = min(b, T)
    n_blocks = T // b
    csum = np.concatenate([[0.0], np.cumsum(x)])
    rng = np.random.default_rng([seed & hashing.MASK64, hashing.TAG_TIE])
    starts = rng.integers(0, T - b + 1, size=(reps, n_blocks))
    means = (csum[starts + b] - csum[starts]).sum(axis=1) / (n_blocks * b)
    lo, hi = np.percentile(means, [2.5, 97.5])
    return float(means.std(ddof=1)), float(lo), float(hi)


@dataclass(frozen=True)
class FrequencyEstimate:
    cluster: int
    T: int
    hits: int
    se: float
    ci_low: float
    ci_high: float

    @property
    def value(self):
        return self.hits / self.T if self.T else math.nan


def _visits(path):
    # Z_0 .. Z_{T-1}: T terms
    return path.positions[: path.T] if path.T else path.positions[:0]


def frequency(partition, path, cluster, bootstrap=True):
    """Fraction of ``Z_0..Z_{T-1}`` inside ``cluster``."""
    inside = partition.labels[_visits(path)] == cluster
    return _estimate(int(cluster), inside, path.seed, bootstrap)


def set_frequency(path, mask, bootstrap=True):
    """Fraction of ``Z_0..Z_{T-1}`` in a vertex set given as a boolean mask."""
    inside = np.asarray(mask)[_visits(path)]
    return _estimate(-1, inside, path.seed, bootstrap)


def _estimate(cluster, inside, seed, bootstrap):
    T = len(inside)
    if bootstrap and T:
        se, lo, hi = block_bootstrap(inside, seed=seed ^ (cluster & hashing.MASK64))
    else:
        se = lo = hi = math.nan
    return FrequencyEstimate(cluster, T, int(inside.sum()), se, lo, hi)


def cluster_visit_counts(partition, path):
    """Visits of ``Z_0..Z_{T-1}`` to every cluster; sums to ``T`` exactly."""
    return np.bincount(partition.labels[_visits(path)], minlength=partition.n_clusters)


def select_max(scores, tie_seed):
    """Index of the largest score, ties broken by a keyed uniform draw."""
    scores = np.asarray(scores)
    top = np.flatnonzero(scores == scores.max())
    if len(top) == 1:
        return int(top[0])
    u = hashing.counter_uniform(hashing.stream(tie_seed, hashing.TAG_TIE), 0)
    return int(top[int(u * len(top))])


def max_frequency_cluster(partition, path, tie_seed):
    """A cluster of maximal frequency along the path, uniform among ties."""
    counts = cluster_visit_counts(partition, path)
    if counts.sum() == 0 or counts.max() == 0:
        raise NoFrequency("the path has no steps, so every frequency is zero")
    return select_max(counts, tie_seed)


@dataclass
class VisitStats:
    """Per-seed visit statistics at each horizon.

    ``clusters_visited[s, h]`` distinct clusters among ``Z_0..Z_T``,
    ``returns[s, h]`` re-entries into the starting cluster after leaving it,
    ``time_in_start[s, h]`` fraction of ``Z_0..Z_{T-1}`` in the starting
    cluster.
    """

    p: float
    horizons: list
    seeds: list
    clusters_visited: np.ndarray
    returns: np.ndarray
    time_in_start: np.ndarray
    reflections: np.ndarray

    def trend(self, z=3.0):
        """Paired one-sided test that ``time_in_start`` drops between
        consecutive horizons: ``(mean drop, its standard error, passes)``."""
        out = []
        for h in range(len(self.horizons) - 1):
            d = self.time_in_start[:, h] - self.time_in_start[:, h + 1]
            se = d.std(ddof=1) / math.sqrt(len(d)) if len(d) > 1 else math.inf
            out.append((float(d.mean()), float(se), bool(d.mean() > z * se)))
        return out

    def rows(self):
        out = []
        for i, s in enumerate(self.seeds):
            for h, T in enumerate(self.horizons):
                out.append((s, T, int(self.clusters_visited[i, h]), int(self.returns[i, h]),
                            float(self.time_in_start[i, h]), int(self.reflections[i])))
        return out


def _returns(inside):
    # transitions from outside to inside
    return int(np.count_nonzero(inside[1:] & ~inside[:-1]))


def _free_visits(model, p, horizons, seed):
    T = max(horizons)
    stream = hashing.stream(seed, hashing.TAG_WALK)
    state = hashing.stream(seed, hashing.TAG_FIELD)
    path_max, new_vals, new_steps, _ = kernels.free_walk(model.k, T, stream, state, 0)
    inside = path_max < p
    closed_steps = new_steps[new_vals >= p]
    vis, ret, frac = [], [], []
    for h in horizons:
        # on a tree each closed trace edge separates one more cluster
        vis.append(1 + int(np.count_nonzero(closed_steps <= h)))
        ret.append(_returns(inside[: h + 1]))
        frac.append(inside[:h].mean() if h else 1.0)
    return vis, ret, frac, 0


def _ball_visits(ball, spec, p, horizons, seed, boundary):
    part = clusters(sample(ball, CouplingField(seed), p))
    path = run_walk(ball, spec, max(horizons), seed, boundary)
    labels = part.labels[path.positions]
    inside = labels == labels[0]
    vis, ret, frac = [], [], []
    for h in horizons:
        vis.append(len(np.unique(labels[: h + 1])))
        ret.append(_returns(inside[: h + 1]))
        frac.append(inside[:h].mean() if h else 1.0)
    return vis, ret, frac, path.reflections


def visit_count_experiment(model, R, p, T, N, base_seed=0, spec=None, workers=None,
                           boundary="resample"):
    """Cluster visits of a random walk started at the origin.

    ``T`` is a horizon or a list of horizons read off one walk per seed.  The
    walk uses the ambient generators unless ``spec`` is given.  On free groups
    with the ambient walk the walk and the field live on the whole tree; other
    models use the ball of radius ``R`` with redrawn boundary steps.
    """
    horizons = sorted(set(int(t) for t in np.atleast_1d(T)))
    if horizons[0] < 0:
        raise ValueError("horizons must be >= 0")
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    seeds = seed_list(base_seed, N)
    if spec is None:
        spec = groups.parse_subgroup("all", model)
    if isinstance(model, groups.FreeGroup) and spec.label == "all":
        res = map_seeds(lambda s: _free_visits(model, p, horizons, s), seeds, workers)
    else:
        ball = groups.cached_ball(model, R)
        res = map_seeds(lambda s: _ball_visits(ball, spec, p, horizons, s, boundary), seeds, workers)
    vis = np.array([r[0] for r in res])
    ret = np.array([r[1] for r in res])
    frac = np.array([r[2] for r in res], dtype=float)
    refl = np.array([r[3] for r in res])
    return VisitStats(p, horizons, seeds, vis, ret, frac, refl)


def walk_frequency_rows(partition, path, clusters_of_interest):
    rows = []
    for c in clusters_of_interest:
        f = frequency(partition, path, c)
        rows.append((path.seed, path.T, int(c), f.value, f.ci_low, f.ci_high, path.reflections))
    return rows


__all__ = [
    "FrequencyEstimate",
    "VisitStats",
    "WalkPath",
    "WalkerTrapped",
    "block_bootstrap",
    "cluster_visit_counts",
    "frequency",
    "max_frequency_cluster",
    "run_walk",
    "select_max",
    "set_frequency",
    "visit_count_experiment",
]

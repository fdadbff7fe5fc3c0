"""Threshold and decay estimators.

Every estimator draws its fields from ``seed_list(base_seed, N)`` and reads
all values of ``p`` off the same fields, so curves are exactly monotone in
``p``.  Observables at several ``p`` come from one pass: invasion from a
source gives the minimax value of every vertex it absorbs, and a vertex lies
in the source's cluster at ``p`` iff that value is below ``p``.

Free groups are explored on the fly, without truncation; the oriented tree
uses a :class:`~subperc.groups.TreeWindow`; everything else runs on a ball.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from subperc import groups, hashing, kernels
from subperc.percolation import (
    field_states,
    geodesic_keys,
    map_seeds,
    seed_list,
    wilson_interval,
)

MAX_TREE_NODES = 20_000_000


class DegenerateGrid(ValueError):
    pass


class InsufficientSamples(RuntimeError):
    pass


def check_grid(p_grid, min_len=1):
    grid = np.asarray(p_grid, dtype=float)
    if grid.ndim != 1 or len(grid) < min_len:
        raise DegenerateGrid(f"need at least {min_len} grid points")
    if np.any(grid < 0) or np.any(grid > 1):
        raise DegenerateGrid("grid values must lie in [0, 1]")
    if np.any(np.diff(grid) <= 0):
        raise DegenerateGrid("grid must be strictly increasing")
    return grid


def _chunks(seeds, size):
    return [seeds[i : i + size] for i in range(0, len(seeds), size)]


def _batched(fn, seeds, workers, size=2000):
    """Run ``fn`` on contiguous seed blocks and stack the results in order."""
    parts = map_seeds(fn, _chunks(list(seeds), size), workers, chunk=1)
    return [np.concatenate([p[i] for p in parts]) for i in range(len(parts[0]))]


def _interpolate_crossing(grid, curve, level):
    """First ``p`` where ``curve`` reaches ``level``, linear between grid points.

    Returns ``(p, status)`` with status ``ok``, ``below`` (already above the
    level at the first point) or ``above`` (never reached).
    """
    idx = np.flatnonzero(curve >= level)
    if len(idx) == 0:
        return math.inf, "above"
    i = idx[0]
    if i == 0:
        return float(grid[0]), "below"
    x0, x1, y0, y1 = grid[i - 1], grid[i], curve[i - 1], curve[i]
    return float(x0 + (level - y0) * (x1 - x0) / (y1 - y0)), "ok"


# ---------------------------------------------------------------- crossings


@dataclass
class CrossingCurve:
    """Boundary-reach curves at radii ``R`` and ``2R`` on a shared field.

    ``p_hat`` is where the survival ratio ``P_2R / P_R`` first reaches
    ``theta``; on a subcritical ``p`` the ratio decays with ``R`` and above
    the threshold it tends to one, so the crossing localises ``p_c`` without
    knowing the finite-size scaling of ``P_R`` itself.  The plain level
    crossings of each curve and their drift are reported alongside.
    """

    model: str
    R: int
    p_grid: np.ndarray
    hits_R: np.ndarray
    hits_2R: np.ndarray
    n_samples: int
    theta: float
    p_hat: float
    status: str
    level_R: float
    level_2R: float

    @property
    def reach_R(self):
        return self.hits_R / self.n_samples

    @property
    def reach_2R(self):
        return self.hits_2R / self.n_samples

    @property
    def ratio(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.hits_R > 0, self.hits_2R / np.maximum(self.hits_R, 1), 0.0)

    @property
    def drift(self):
        return self.level_2R - self.level_R

    def rows(self):
        out = []
        for series, hits in (("reach_R", self.hits_R), ("reach_2R", self.hits_2R)):
            for p, h in zip(self.p_grid, hits):
                lo, hi = wilson_interval(int(h), self.n_samples)
                out.append((series, p, self.R if series == "reach_R" else 2 * self.R,
                            h / self.n_samples, lo, hi, self.n_samples))
        for p, r, h in zip(self.p_grid, self.ratio, self.hits_R):
            out.append(("ratio", p, self.R, r, math.nan, math.nan, int(h)))
        return out


def reach_thresholds(model, R, seeds, p_cap=1.0, workers=None):
    """Per-seed minimax value from the origin to the sphere of each radius ``0..R``."""
    seeds = list(seeds)
    if isinstance(model, groups.FreeGroup):

        def run(block):
            reach, _, _, over = kernels.free_invade_batch(
                model.k, [], 0, field_states(block), [p_cap], p_cap, R, 0, MAX_TREE_NODES
            )
            if over.any():
                raise groups.BallTooLarge("free-group exploration exceeded its node budget")
            return (reach,)

        return _batched(run, seeds, workers)[0]
    ball = groups.cached_ball(model, R)
    nomask = np.zeros(ball.n_vertices, bool)

    def run(block):
        reach, _, _ = kernels.invade_batch(
            ball.nbr, ball.eid, ball.edge_keys, field_states(block), np.zeros(len(block), np.int64),
            [p_cap], p_cap, ball.dist, R, nomask, 0,
        )
        return (reach,)

    return _batched(run, seeds, workers)[0]


def crossing_sweep(model, R, p_grid, N, base_seed=0, theta=0.5, workers=None):
    """Estimate ``p_c`` from boundary reach at radii ``R`` and ``2R``."""
    grid = check_grid(p_grid, min_len=2)
    if not 0 < grid[0] or not grid[-1] < 1:
        raise DegenerateGrid("crossing grid must lie inside (0, 1)")
    p_cap = float(np.nextafter(grid[-1], 2.0))
    reach = reach_thresholds(model, 2 * R, seed_list(base_seed, N), p_cap, workers)
    b_R, b_2R = reach[:, R], reach[:, 2 * R]
    hits_R = (b_R[:, None] < grid[None, :]).sum(axis=0)
    hits_2R = (b_2R[:, None] < grid[None, :]).sum(axis=0)
    ratio = np.where(hits_R > 0, hits_2R / np.maximum(hits_R, 1), 0.0)
    p_hat, status = _interpolate_crossing(grid, ratio, theta)
    level_R, _ = _interpolate_crossing(grid, hits_R / N, theta)
    level_2R, _ = _interpolate_crossing(grid, hits_2R / N, theta)
    return CrossingCurve(model.name, R, grid, hits_R, hits_2R, N, theta, p_hat, status, level_R, level_2R)


# ---------------------------------------------------------------- tails


@dataclass
class LogLinearFit:
    slope: float
    intercept: float
    r2: float
    n_lo: int
    n_hi: int

    @property
    def rate(self):
        return -self.slope


def fit_exponential(n, hits, N):
    """Least squares of ``log Q`` on ``n`` over the longest run from the first
    grid point on which every Wilson interval excludes 0 (``hits > 0``)."""
    n = np.asarray(n)
    hits = np.asarray(hits)
    zero = np.flatnonzero(hits == 0)
    stop = zero[0] if len(zero) else len(n)
    if stop < 3:
        raise InsufficientSamples("fewer than three tail points with nonzero counts")
    x, y = n[:stop], np.log(hits[:stop] / N)
    fit = stats.linregress(x, y)
    return LogLinearFit(fit.slope, fit.intercept, fit.rvalue**2, int(x[0]), int(x[-1]))


@dataclass
class TailCurve:
    """Relative tail ``Q(n) = max_x P(|K_x & H| >= n)`` at one ``p``.

    ``hits[j]`` counts seeds with ``|K_x & H| >= n[j]`` for the maximising
    source; ``origin_hits`` is the same for the origin alone.
    """

    p: float
    n: np.ndarray
    hits: np.ndarray
    origin_hits: np.ndarray
    n_samples: int
    sources: list
    fit: LogLinearFit = None
    origin_fit: LogLinearFit = None

    @property
    def q(self):
        return self.hits / self.n_samples

    @property
    def origin_q(self):
        return self.origin_hits / self.n_samples

    def ci(self, origin=False):
        h = self.origin_hits if origin else self.hits
        return np.array([wilson_interval(int(k), self.n_samples) for k in h])

    def rows(self):
        out = []
        for series, h in (("max", self.hits), ("origin", self.origin_hits)):
            for n, k in zip(self.n, h):
                lo, hi = wilson_interval(int(k), self.n_samples)
                out.append((series, self.p, int(n), k / self.n_samples, lo, hi, self.n_samples))
        return out


def _random_word(model, length, rng):
    word = []
    while len(word) < length:
        s = int(rng.integers(1, model.k + 1)) * (1 if rng.random() < 0.5 else -1)
        if word and word[-1] == -s:
            continue
        word.append(s)
    return tuple(word)


def tail_sources(model, R, n_extra, base_seed):
    """The origin plus ``n_extra`` deterministic pseudo-random vertices at
    distance at most ``R // 2``."""
    rng = np.random.default_rng([base_seed & hashing.MASK64, hashing.TAG_SOURCE])
    out = [model.identity]
    half = max(R // 2, 1)
    if isinstance(model, groups.FreeGroup):
        while len(out) < 1 + n_extra:
            out.append(_random_word(model, int(rng.integers(1, half + 1)), rng))
    elif isinstance(model, groups.OrientedTree):
        while len(out) < 1 + n_extra:
            k = int(rng.integers(0, half + 1))
            w = tuple(int(c) for c in rng.integers(0, model.d - 1, size=int(rng.integers(0, k + 1))))
            if k > 0 and w and w[0] == 0:
                continue
            out.append((k, w))
    else:
        ball = groups.cached_ball(model, R)
        inner = np.flatnonzero(ball.dist <= half)
        picks = rng.choice(inner, size=min(n_extra, len(inner)), replace=n_extra > len(inner))
        out.extend(ball.vertices[i] for i in picks)
    return out


def _free_axis(spec):
    if spec.label == "all":
        return 0
    if spec.label.startswith("axis") and spec.base_point == ():
        return int(spec.label[4:]) + 1
    return None


def relative_counts(model, spec, R, source, p_grid, seeds, need_h, workers=None):
    """``min(|K_source & H|, need_h)`` at each ``p`` per seed (``need_h < 0``: no cap)."""
    p_grid = np.asarray(p_grid, dtype=float)
    p_cap = float(np.nextafter(p_grid.max(), 2.0)) if len(p_grid) else 0.0
    if isinstance(model, groups.FreeGroup) and _free_axis(spec) is not None and need_h >= 0:
        axis = _free_axis(spec)

        def run(block):
            _, hcount, _, over = kernels.free_invade_batch(
                model.k, source, axis, field_states(block), p_grid, p_cap, -1, need_h, MAX_TREE_NODES
            )
            if over.any():
                raise groups.BallTooLarge("free-group exploration exceeded its node budget")
            return (hcount,)

        return _batched(run, seeds, workers)[0]
    if isinstance(model, groups.OrientedTree):
        if spec.level is None:
            raise groups.SubgroupIncompatible("oriented-tree tails need a level set")
        graph = _cached_window(model, R)
        hmask = graph.level == spec.level
        dist = np.zeros(graph.n_vertices, np.int32)
        src = graph.index_of(source)
    else:
        graph = groups.cached_ball(model, R)
        hmask = graph.mask(spec)
        dist = graph.dist
        src = graph.index_of(source)

    def run(block):
        _, hcount, _ = kernels.invade_batch(
            graph.nbr, graph.eid, graph.edge_keys, field_states(block),
            np.full(len(block), src, np.int64), p_grid, p_cap, dist, -1, hmask, need_h,
        )
        return (hcount,)

    return _batched(run, seeds, workers)[0]


_WINDOWS = {}


def _cached_window(model, height):
    key = (model.name, height)
    if key not in _WINDOWS:
        _WINDOWS.clear()
        _WINDOWS[key] = groups.tree_window(model, height)
    return _WINDOWS[key]


def tail_curve(model, spec, R, p, n_max, N, base_seed=0, n_sources=32, workers=None):
    """Relative tail ``Q(n)`` for ``n = 1..n_max`` at each ``p``.

    ``p`` may be a number or an increasing sequence; a list of
    :class:`TailCurve` is returned for a sequence.  Sources are the origin and
    ``n_sources`` vertices from :func:`tail_sources`; on the oriented tree ``R``
    is the height of the window above the origin, and on free groups it only
    bounds where sources are placed (clusters are explored without truncation).

    Raises :class:`InsufficientSamples` when some ``p > 0`` leaves fewer than
    three points with a nonzero count, so no interval away from 0 exists to
    fit on.
    """
    scalar = np.ndim(p) == 0
    grid = check_grid(np.atleast_1d(p))
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    seeds = seed_list(base_seed, N)
    n = np.arange(1, n_max + 1)
    sources = tail_sources(model, R, n_sources, base_seed)
    per_source = []
    for x in sources:
        counts = relative_counts(model, spec, R, x, grid, seeds, n_max, workers)
        per_source.append((counts[:, :, None] >= n[None, None, :]).sum(axis=0))  # (P, n)
    stacked = np.stack(per_source)  # (sources, P, n)
    best = stacked.max(axis=0)
    curves = []
    for i, pv in enumerate(grid):
        c = TailCurve(float(pv), n, best[i], stacked[0, i], N, [model.format(x) for x in sources])
        try:
            c.fit = fit_exponential(n, c.hits, N)
        except InsufficientSamples as exc:
            # at p = 0 the curve is exact and there is nothing to fit
            if pv > 0:
                raise InsufficientSamples(f"p={pv}: {exc}; raise N or lower n_max") from None
        try:
            c.origin_fit = fit_exponential(n, c.origin_hits, N)
        except InsufficientSamples:
            pass
        curves.append(c)
    return curves[0] if scalar else curves


@dataclass
class PowerTailFit:
    """Log-log least-squares fit of the empirical tail ``P(X >= k)``."""

    exponent: float
    stderr: float
    r2: float
    k: np.ndarray
    ccdf: np.ndarray
    n_samples: int


def fit_power_tail(samples, min_count=10, points=20):
    """Fit ``log P(X >= k) ~ a + b log k`` over the top decade of the data.

    ``k_hi`` is the largest ``k`` with at least ``min_count`` samples
    ``>= k``; the fit uses about ``points`` log-spaced values in
    ``[k_hi / 10, k_hi]``.  Starting one decade below the data's reach keeps the
    small-``k`` correction to scaling out of the fit while every point still
    has at least ``min_count`` exceedances.
    """
    srt = np.sort(np.asarray(samples))
    N = len(srt)
    kk = np.arange(1, srt[-1] + 1)
    exceed = N - np.searchsorted(srt, kk, side="left")
    good = kk[exceed >= min_count]
    if len(good) == 0 or good.max() < 10:
        raise InsufficientSamples("tail too short for a power-law fit")
    k_hi = int(good.max())
    k_lo = max(1, k_hi // 10)
    ks = np.unique(np.round(np.logspace(np.log10(k_lo), np.log10(k_hi), points)).astype(int))
    ccdf = (N - np.searchsorted(srt, ks, side="left")) / N
    fit = stats.linregress(np.log(ks), np.log(ccdf))
    return PowerTailFit(fit.slope, fit.stderr, fit.rvalue**2, ks, ccdf, N)


def power_tail(model, spec, R, p, N, base_seed=0, workers=None):
    """Full ``|K_o & H|`` sample at one ``p`` and its log-log tail fit."""
    counts = relative_counts(model, spec, R, model.identity, [p], seed_list(base_seed, N), -1, workers)
    counts = counts[:, 0]
    return fit_power_tail(counts), counts


# ---------------------------------------------------------------- two-point infima


def subgroup_spheres(model, generators, n_max, limit=5000):
    """Elements of ``<generators>`` by word length ``0..n_max`` in that metric
    (each sphere truncated to ``limit`` elements in BFS order)."""
    seen = {model.identity}
    spheres = [[model.identity]]
    frontier = [model.identity]
    for _ in range(n_max):
        nxt = []
        for g in frontier:
            for s in generators:
                h = model.multiply(g, s)
                if h not in seen:
                    seen.add(h)
                    nxt.append(h)
        if len(nxt) > limit:
            nxt = sorted(nxt, key=model.sort_key)[:limit]
        spheres.append(sorted(nxt, key=model.sort_key))
        frontier = nxt
        if not nxt:
            break
    return spheres


def sample_pairs(model, spec, R, distances, per_distance, base_seed, margin=None):
    """``per_distance`` pairs ``(x, x g)`` in the subgroup for each distance.

    ``g`` is uniform on the subgroup sphere of that radius and ``x`` uniform
    on subgroup elements at ambient distance ``<= (R - d_ambient(g)) // 2``
    so both ends keep the two-point margin.  Free groups have no ball and
    only need ``x`` short.
    """
    rng = np.random.default_rng([base_seed & hashing.MASK64, hashing.TAG_SOURCE, 7])
    gens = spec.generators or getattr(model, "generators", ())
    if not gens:
        raise groups.SubgroupIncompatible(f"{spec.label} has no generators for a word metric")
    base = spec.base_point if spec.base_point is not None else model.identity
    d_max = max(distances)
    spheres = subgroup_spheres(model, gens, d_max)
    bases = [h for sph in subgroup_spheres(model, gens, max(R // 2, 1)) for h in sph]
    out = {}
    for d in distances:
        if d >= len(spheres) or not spheres[d]:
            raise ValueError(f"subgroup has no elements at distance {d}")
        pairs = []
        attempts = 0
        while len(pairs) < per_distance:
            attempts += 1
            if attempts > 200 * per_distance:
                raise groups.VertexOutsideBall(f"no pair at distance {d} fits inside radius {R}")
            g = spheres[d][rng.integers(len(spheres[d]))]
            x = model.multiply(base, bases[rng.integers(len(bases))])
            y = model.multiply(x, g)
            if not isinstance(model, groups.FreeGroup):
                amb = model.word_length(g) if margin is None else margin
                if max(model.word_length(x), model.word_length(y)) > R - amb:
                    continue
            pairs.append((x, y))
        out[d] = pairs
    return out


def pair_hits(model, R, pairs, p_grid, seeds, workers=None):
    """Connection counts ``hits[q, j]`` for pair ``j`` at ``p_grid[q]``, plus
    origin-to-boundary counts per ``p`` (``None`` on free groups)."""
    p_grid = np.asarray(p_grid, dtype=float)
    seeds = list(seeds)
    if isinstance(model, groups.FreeGroup):
        hits = np.zeros((len(p_grid), len(pairs)), np.int64)
        states = field_states(seeds)
        for j, (x, y) in enumerate(pairs):
            keys = geodesic_keys(model, x, y)
            if len(keys) == 0:
                hits[:, j] = len(seeds)
                continue
            for block in _chunks(np.arange(len(states)), 20000):
                vmax = kernels.edge_uniforms(states[block][:, None] ^ keys[None, :], 0).max(axis=1)
                hits[:, j] += (vmax[:, None] < p_grid[None, :]).sum(axis=0)
        return hits, None
    ball = groups.cached_ball(model, R)
    idx = np.array([[ball.index_of(x), ball.index_of(y)] for x, y in pairs], np.int64)

    def run(block):
        conn, reach0 = kernels.connect_batch(
            ball.n_vertices, ball.edges, ball.edge_keys, field_states(block), p_grid, idx, ball.boundary
        )
        return conn.sum(axis=0)[None], reach0.sum(axis=0)[None]

    conn, reach0 = _batched(run, seeds, workers, size=500)
    return conn.sum(axis=0), reach0.sum(axis=0)


@dataclass
class KappaCurve:
    p: float
    n: np.ndarray
    hits: np.ndarray  # connection count of the minimising pair at each n
    n_samples: int
    pair_hits: dict = field(repr=False, default_factory=dict)

    @property
    def kappa(self):
        return self.hits / self.n_samples

    @property
    def growth(self):
        """``sup_n kappa(n)^(1/n)`` over ``n >= 1`` with a positive estimate."""
        vals = [k ** (1.0 / n) for n, k in zip(self.n, self.kappa) if n >= 1 and k > 0]
        return max(vals) if vals else 0.0

    def supermultiplicativity_violations(self, z=3.0):
        """``(m, n)`` with ``kappa(m+n) < kappa(m) kappa(n) - z sigma``.

        ``sigma`` combines the binomial error of ``kappa(m+n)`` evaluated at
        the product with the propagated errors of the two factors.
        """
        k = dict(zip(self.n.tolist(), self.kappa.tolist()))
        N = self.n_samples
        bad = []
        for m in k:
            for n in k:
                if m < 1 or n < m or m + n not in k:
                    continue
                prod = k[m] * k[n]
                var = prod * (1 - prod) / N
                var += (k[n] ** 2) * k[m] * (1 - k[m]) / N + (k[m] ** 2) * k[n] * (1 - k[n]) / N
                if k[m + n] < prod - z * math.sqrt(var):
                    bad.append((m, n))
        return bad

    def rows(self):
        out = []
        for n, h in zip(self.n, self.hits):
            lo, hi = wilson_interval(int(h), self.n_samples)
            out.append(("kappa", self.p, int(n), h / self.n_samples, lo, hi, self.n_samples))
        return out


def kappa_curve(model, R, p, n_max, pairs_per_n, N, base_seed=0, spec=None, workers=None):
    """``kappa(n)``: the smallest two-point estimate over sampled subgroup
    pairs at subgroup distance ``<= n``, for ``n = 0..n_max``."""
    scalar = np.ndim(p) == 0
    grid = check_grid(np.atleast_1d(p))
    if spec is None:
        spec = groups.parse_subgroup("all", model)
    distances = list(range(1, n_max + 1))
    pairs = sample_pairs(model, spec, R, distances, pairs_per_n, base_seed)
    flat = [pr for d in distances for pr in pairs[d]]
    hits, _ = pair_hits(model, R, flat, grid, seed_list(base_seed, N), workers)
    curves = []
    for q, pv in enumerate(grid):
        best = [N]  # n = 0: x = y
        per = {0: [N]}
        j = 0
        for d in distances:
            h = hits[q, j : j + pairs_per_n]
            j += pairs_per_n
            per[d] = h.tolist()
            best.append(min(best[-1], int(h.min())))
        curves.append(KappaCurve(float(pv), np.arange(0, n_max + 1), np.array(best), N, per))
    return curves[0] if scalar else curves


# ---------------------------------------------------------------- trichotomy


@dataclass
class TrichotomyScan:
    """Per-``p`` distribution of the number of large boundary-touching clusters."""

    p_grid: np.ndarray
    counts: np.ndarray  # (seeds, P)
    m: int

    @property
    def histogram(self):
        """Fractions of seeds with 0, 1 and at least 2 such clusters."""
        c = self.counts
        return np.stack([(c == 0).mean(0), (c == 1).mean(0), (c >= 2).mean(0)], axis=1)

    def many_to_one(self):
        """First ``p`` after the peak of the ``>= 2`` mass where one cluster dominates."""
        h = self.histogram
        peak = int(np.argmax(h[:, 2]))
        for i in range(peak, len(self.p_grid)):
            if h[i, 1] > h[i, 2]:
                return float(self.p_grid[i])
        return math.inf

    def rows(self):
        out = []
        n = self.counts.shape[0]
        for k, series in enumerate(("zero", "one", "many")):
            for p, frac in zip(self.p_grid, self.histogram[:, k]):
                lo, hi = wilson_interval(int(round(frac * n)), n)
                out.append((series, p, k, frac, lo, hi, n))
        return out


def trichotomy_scan(model, spec, R, p_grid, m, N, base_seed=0, workers=None):
    if m < 2:
        raise ValueError("m must be >= 2")
    grid = check_grid(p_grid)
    ball = groups.cached_ball(model, R)
    hcount = ball.mask(spec).astype(np.int64)
    bmask = ball.boundary

    def one(seed):
        vals = kernels.edge_uniforms(ball.edge_keys, hashing.stream(seed, hashing.TAG_FIELD))
        return kernels.sweep_counts(ball.n_vertices, ball.edges, vals, hcount, bmask, m, grid)

    counts = np.array(map_seeds(one, seed_list(base_seed, N), workers))
    return TrichotomyScan(grid, counts, m)


# ---------------------------------------------------------------- p_u probe


@dataclass
class PuProbe:
    p: float
    distances: list
    hits: np.ndarray  # minimising pair's connection count per distance
    n_samples: int
    verdict: str
    halvings: int
    theta_hits: int = None

    @property
    def tau(self):
        return self.hits / self.n_samples

    @property
    def theta(self):
        return None if self.theta_hits is None else self.theta_hits / self.n_samples

    def rows(self):
        out = []
        for d, h in zip(self.distances, self.hits):
            lo, hi = wilson_interval(int(h), self.n_samples)
            out.append(("tau_min", self.p, int(d), h / self.n_samples, lo, hi, self.n_samples))
        if self.theta_hits is not None:
            lo, hi = wilson_interval(int(self.theta_hits), self.n_samples)
            out.append(("theta", self.p, 0, self.theta, lo, hi, self.n_samples))
        return out


def decay_verdict(hits, N, z=1.96):
    """Apply the decay rule to a sequence of minimum two-point counts.

    Walk along the distances keeping a reference value (initially the first);
    a halving is a value at most half the reference whose interval lies
    entirely below the reference's.  Two halvings mean ``decay``.  Otherwise
    ``bounded below`` when the last interval excludes 0 and the last estimate
    exceeds half the first; else ``inconclusive``.
    """
    est = [h / N for h in hits]
    ci = [wilson_interval(int(h), N, z) for h in hits]
    ref = 0
    halvings = 0
    for i in range(1, len(est)):
        if est[i] <= est[ref] / 2 and ci[i][1] < ci[ref][0]:
            halvings += 1
            ref = i
    if halvings >= 2:
        return "decay", halvings
    if ci[-1][0] > 0 and est[-1] > est[0] / 2:
        return "bounded below", halvings
    return "inconclusive", halvings


def pu_probe(model, spec, R, p, distance_grid, N, pairs_per_scale=4, base_seed=0, workers=None):
    """Minimum two-point estimate over subgroup pairs at each distance, and a
    decay / bounded-below verdict."""
    distances = sorted(set(int(d) for d in distance_grid))
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    pairs = sample_pairs(model, spec, R, distances, pairs_per_scale, base_seed)
    flat = [pr for d in distances for pr in pairs[d]]
    hits, reach0 = pair_hits(model, R, flat, [p], seed_list(base_seed, N), workers)
    per = hits[0].reshape(len(distances), pairs_per_scale).min(axis=1)
    verdict, halvings = decay_verdict(per, N)
    theta = None if reach0 is None else int(reach0[0])
    return PuProbe(p, distances, per, N, verdict, halvings, theta)


def pu_bisect(model, spec, R, distance_grid, N, lo=0.0, hi=1.0, steps=6, base_seed=0, workers=None):
    """Bisect the decay flag: the returned bracket has ``decay`` at its lower
    end and not at its upper end (``inconclusive`` counts as not decaying)."""
    history = []
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        res = pu_probe(model, spec, R, mid, distance_grid, N, base_seed=base_seed, workers=workers)
        history.append((mid, res.verdict))
        if res.verdict == "decay":
            lo = mid
        else:
            hi = mid
    return (lo, hi), history


__all__ = [
    "CrossingCurve",
    "KappaCurve",
    "PowerTailFit",
    "PuProbe",
    "TailCurve",
    "TrichotomyScan",
    "crossing_sweep",
    "decay_verdict",
    "fit_exponential",
    "fit_power_tail",
    "kappa_curve",
    "power_tail",
    "pu_bisect",
    "pu_probe",
    "tail_curve",
    "trichotomy_scan",
]

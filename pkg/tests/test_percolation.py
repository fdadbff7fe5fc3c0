import itertools
from collections import deque

import numpy as np
import pytest

from subperc import groups, kernels
from subperc.estimators import trichotomy_scan
from subperc.groups import VertexOutsideBall, build_ball, cached_ball, parse_group, parse_subgroup
from subperc.percolation import (
    CouplingField,
    clusters,
    connection_thresholds,
    relative_cluster_counts,
    sample,
    seed_list,
    two_point,
    wilson_interval,
)

from _exact import box_connection_probability

F2 = parse_group("free:2")
Z2 = parse_group("lattice:2")


def sigma(q, n):
    return np.sqrt(q * (1 - q) / n)


# ---------------------------------------------------------------- sample


def test_sample_extremes():
    ball = build_ball(Z2, 4)
    f = CouplingField(3)
    assert sample(ball, f, 0.0).n_open == 0
    assert sample(ball, f, 1.0).n_open == ball.n_edges
    with pytest.raises(ValueError):
        sample(ball, f, 1.5)


def test_sample_open_fraction_on_nine_edges():
    # nine edges of a small lattice ball
    ball = build_ball(Z2, 2)
    keys = ball.edge_keys[:9]
    N = 10_000
    opened = sum(int((CouplingField(s).values(keys) < 0.5).sum()) for s in range(N))
    frac = opened / (9 * N)
    assert abs(frac - 0.5) < 3 * sigma(0.5, 9 * N)


def test_field_is_deterministic_and_radius_free():
    small, big = build_ball(Z2, 3), build_ball(Z2, 6)
    f, g = CouplingField(11), CouplingField(11)
    np.testing.assert_array_equal(f.values(small.edge_keys), g.values(small.edge_keys))
    vals_big = dict(zip(big.edge_keys.tolist(), f.values(big.edge_keys).tolist()))
    for k, v in zip(small.edge_keys.tolist(), f.values(small.edge_keys).tolist()):
        assert vals_big[k] == v
    assert f.edge_value(Z2, (0, 0), (1, 0)) == f.edge_value(Z2, (1, 0), (0, 0))


def test_configuration_thresholds_field():
    ball = build_ball(F2, 4)
    f = CouplingField(5)
    cfg = sample(ball, f, 0.4)
    np.testing.assert_array_equal(cfg.open, f.values(ball.edge_keys) < 0.4)


# ---------------------------------------------------------------- clusters


def test_all_closed_and_all_open():
    ball = build_ball(Z2, 4)
    f = CouplingField(0)
    closed = clusters(sample(ball, f, 0.0))
    assert closed.n_clusters == ball.n_vertices and (closed.sizes == 1).all()
    opened = clusters(sample(ball, f, 1.0))
    assert opened.n_clusters == 1 and opened.sizes[0] == ball.n_vertices


def test_path_with_middle_edge_closed():
    edges = np.array([[0, 1], [1, 2], [2, 3]], np.int32)
    labels = kernels.components(4, edges, np.array([True, False, True]))
    assert sorted(np.bincount(labels).tolist()) == [2, 2]
    assert labels[0] == labels[1] != labels[2] == labels[3]


def _bfs_labels(n, edges, is_open):
    adj = [[] for _ in range(n)]
    for (a, b), o in zip(edges, is_open):
        if o:
            adj[a].append(b)
            adj[b].append(a)
    lab = [-1] * n
    c = 0
    for s in range(n):
        if lab[s] >= 0:
            continue
        lab[s] = c
        q = deque([s])
        while q:
            v = q.popleft()
            for w in adj[v]:
                if lab[w] < 0:
                    lab[w] = c
                    q.append(w)
        c += 1
    return np.array(lab)


def test_partition_matches_bfs_oracle():
    rng = np.random.default_rng(0)
    for i in range(100):
        model = [Z2, F2, parse_group("wreath:z2:free:2")][i % 3]
        ball = cached_ball(model, 3)
        cfg = sample(ball, CouplingField(int(rng.integers(1 << 62))), float(rng.random()))
        part = clusters(cfg)
        np.testing.assert_array_equal(part.labels, _bfs_labels(ball.n_vertices, ball.edges, cfg.open))


def test_partition_bookkeeping():
    ball = build_ball(Z2, 6)
    axis = parse_subgroup("axis:0", Z2)
    for seed in range(10):
        part = clusters(sample(ball, CouplingField(seed), 0.5), [axis])
        assert part.sizes.sum() == ball.n_vertices
        assert part.count_in(axis).sum() == ball.mask(axis).sum()
        for v in range(0, ball.n_vertices, 7):
            r = part.find(v)
            assert part.find(r) == r
            assert part.labels[r] == part.labels[v]
            assert r == part.members(part.labels[v]).min()
        touches = np.array([ball.boundary[part.members(c)].any() for c in range(part.n_clusters)])
        np.testing.assert_array_equal(touches, part.touches_boundary)


def test_coupling_monotonicity():
    ball = build_ball(Z2, 6)
    for seed in range(20):
        f = CouplingField(seed)
        lo, hi = clusters(sample(ball, f, 0.4)), clusters(sample(ball, f, 0.55))
        for c in range(lo.n_clusters):
            assert len(np.unique(hi.labels[lo.labels == c])) == 1


# ---------------------------------------------------------------- two-point


def test_two_point_on_tree():
    ball = cached_ball(F2, 6)
    N = 20_000
    est = two_point(ball, seed_list(0, N), 0.5, F2.identity, F2.parse("abA"))
    assert abs(est.estimate - 0.125) < 3 * sigma(0.125, N)


def test_two_point_same_vertex():
    ball = cached_ball(F2, 4)
    est = two_point(ball, seed_list(0, 50), 0.3, F2.parse("a"), F2.parse("a"))
    assert est.estimate == 1.0


def test_two_point_lattice_above_box_bound():
    ball = cached_ball(Z2, 10)
    N = 20_000
    exact_box = box_connection_probability(0.3)
    est = two_point(ball, seed_list(0, N), 0.3, (-2, 0), (2, 0))
    assert est.estimate >= exact_box - 3 * sigma(exact_box, N)
    # the box event is contained in the ball event seed by seed
    box = [v for v in ball.vertices if max(abs(v[0]), abs(v[1])) <= 2]
    idx = np.array([ball.index[v] for v in box])
    inside = np.isin(ball.edges, idx).all(axis=1)
    for s in range(300):
        f = CouplingField(s)
        is_open = f.values(ball.edge_keys) < 0.3
        lab_box = kernels.components(ball.n_vertices, ball.edges, is_open & inside)
        lab_all = kernels.components(ball.n_vertices, ball.edges, is_open)
        a, b = ball.index[(-2, 0)], ball.index[(2, 0)]
        if lab_box[a] == lab_box[b]:
            assert lab_all[a] == lab_all[b]


def test_two_point_box_oracle_matches_small_enumeration():
    # the transfer oracle itself against a brute force on a 2 x 3 box
    p = 0.41
    V = [(c, r) for c in range(3) for r in range(2)]
    E = [((c, r), (c + 1, r)) for c in range(2) for r in range(2)] + [((c, 0), (c, 1)) for c in range(3)]
    total = 0.0
    for bits in itertools.product((0, 1), repeat=len(E)):
        lab = _bfs_labels(len(V), [(V.index(a), V.index(b)) for a, b in E], bits)
        if lab[V.index((0, 0))] == lab[V.index((2, 0))]:
            total += p ** sum(bits) * (1 - p) ** (len(E) - sum(bits))
    assert box_connection_probability(p, width=3, height=2, x_row=0, y_row=0) == pytest.approx(total, abs=1e-14)


def test_two_point_translation_invariance():
    ball = cached_ball(Z2, 12)
    N = 6000
    g = (2, -1)
    a = two_point(ball, seed_list(0, N), 0.55, (0, 0), (3, 0))
    b = two_point(ball, seed_list(10_000, N), 0.55, g, Z2.multiply(g, (3, 0)))
    se = np.hypot(sigma(a.estimate, N), sigma(b.estimate, N))
    assert abs(a.estimate - b.estimate) < 3 * se


def test_two_point_margin():
    ball = cached_ball(Z2, 5)
    with pytest.raises(VertexOutsideBall):
        two_point(ball, [0], 0.5, (0, 0), (4, 0))
    with pytest.raises(VertexOutsideBall):
        two_point(ball, [0], 0.5, (0, 0), (9, 0))


def test_connection_thresholds_agree_with_clusters():
    ball = cached_ball(Z2, 6)
    x, y = (0, 0), (2, 1)
    thr = connection_thresholds(ball, range(30), x, y)
    for s, t in zip(range(30), thr):
        for p in (0.3, 0.5, 0.7):
            lab = clusters(sample(ball, CouplingField(s), p)).labels
            assert (lab[ball.index[x]] == lab[ball.index[y]]) == (t < p)


def test_wilson_interval_contains_estimate():
    for k, n in [(0, 10), (3, 10), (10, 10), (500, 1000)]:
        lo, hi = wilson_interval(k, n)
        assert 0 <= lo <= k / n <= hi <= 1
    assert wilson_interval(0, 0) == (0.0, 1.0)


# ---------------------------------------------------------------- relative counts


def test_relative_counts_extremes():
    ball = build_ball(Z2, 5)
    H = parse_subgroup("all", Z2)
    assert relative_cluster_counts(clusters(sample(ball, CouplingField(0), 1.0)), H, 5) == 1
    assert relative_cluster_counts(clusters(sample(ball, CouplingField(0), 0.0)), H, 2) == 0
    with pytest.raises(ValueError):
        relative_cluster_counts(clusters(sample(ball, CouplingField(0), 0.5)), H, 0)


def test_relative_counts_tree_many_clusters():
    ball = cached_ball(F2, 10)
    H = parse_subgroup("all", F2)
    counts = [relative_cluster_counts(clusters(sample(ball, CouplingField(s), 0.6)), H, 20)
              for s in range(200)]
    assert np.mean(np.array(counts) >= 2) > 0.95
    # the sweep kernel reproduces the per-seed counts
    scan = trichotomy_scan(F2, H, 10, [0.6], 20, 200, workers=4)
    np.testing.assert_array_equal(scan.counts[:, 0], counts)


def test_relative_counts_tree_thousand_seeds():
    scan = trichotomy_scan(F2, parse_subgroup("all", F2), 10, [0.6], 20, 1000, workers=8)
    assert scan.histogram[0, 2] > 0.95

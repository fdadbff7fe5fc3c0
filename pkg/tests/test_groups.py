from collections import deque

import numpy as np
import pytest

from subperc import groups
from subperc.groups import (
    BallTooLarge,
    MalformedElement,
    SubgroupIncompatible,
    VertexOutsideBall,
    build_ball,
    parse_group,
    parse_subgroup,
    subgroup_ball_count,
)

from _exact import bfs_ball, lattice_ball_size, wreath_free_neighbours

F2 = parse_group("free:2")
Z = parse_group("lattice:1")
Z2 = parse_group("lattice:2")
W = parse_group("wreath:z2:free:2")


def random_element(model, rng, steps=8):
    x = model.identity
    for _ in range(int(rng.integers(0, steps + 1))):
        x = model.multiply(x, model.generators[rng.integers(len(model.generators))])
    return x


# ---------------------------------------------------------------- multiply


@pytest.mark.parametrize("dsl", ["lattice:3", "free:2", "wreath:z2:free:2", "finite:S3", "finite:D4"])
def test_identity_is_neutral(dsl):
    m = parse_group(dsl)
    rng = np.random.default_rng(1)
    for _ in range(50):
        g = random_element(m, rng)
        assert m.multiply(m.identity, g) == g
        assert m.multiply(g, m.identity) == g
        assert m.multiply(g, m.invert(g)) == m.identity


def test_free_reduction():
    assert F2.multiply(F2.parse("ab"), F2.parse("B")) == F2.parse("a")
    assert F2.format(F2.multiply(F2.parse("ab"), F2.parse("B"))) == "a"


def test_lamp_flips_cancel():
    flip = ((F2.identity,), F2.identity)
    assert W.multiply(flip, flip) == W.identity


def test_wreath_law_moves_lamp_with_cursor():
    a = ((), (1,))
    flip = (((),), ())
    # move to a, flip there, move back: lamp at a is lit, cursor at e
    g = W.product(a, flip, W.invert(a))
    assert g == (((1,),), ())
    assert W.word_length(g) == 3


@pytest.mark.parametrize("dsl", ["lattice:2", "free:2", "wreath:z2:free:2", "finite:S3", "finite:D4"])
def test_associativity_sampled(dsl):
    m = parse_group(dsl)
    rng = np.random.default_rng(7)
    for _ in range(1000):
        a, b, c = (random_element(m, rng) for _ in range(3))
        assert m.multiply(m.multiply(a, b), c) == m.multiply(a, m.multiply(b, c))


def test_malformed_elements():
    with pytest.raises(MalformedElement):
        F2.parse("ax")
    with pytest.raises(MalformedElement):
        F2.validate((1, -1))
    with pytest.raises(MalformedElement):
        F2.parse("c")
    with pytest.raises(MalformedElement):
        W.parse("a@b")
    with pytest.raises(MalformedElement):
        parse_group("finite:S3").parse("011")


def test_bad_group_specs():
    for bad in ["lattice", "free:0", "wreath:z2:lattice:2", "finite:A5", "torus:2"]:
        with pytest.raises(ValueError):
            parse_group(bad)


def test_non_simple_generating_set_rejected():
    class Doubled(groups.LatticeGroup):
        def __init__(self):
            groups.GroupModel.__init__(self, "doubled", (0,), [(1,), (1,)])

    with pytest.raises(ValueError, match="multi-edges"):
        Doubled()

    class Loop(groups.LatticeGroup):
        def __init__(self):
            self.d = 1
            groups.GroupModel.__init__(self, "loop", (0,), [(0,), (1,)])

    with pytest.raises(ValueError, match="loops"):
        Loop()


# ---------------------------------------------------------------- balls


def test_ball_of_integers():
    assert build_ball(Z, 3).n_vertices == 7


@pytest.mark.parametrize("R", range(0, 7))
def test_free_ball_closed_form(R):
    assert build_ball(F2, R).n_vertices == 2 * 3**R - 1


@pytest.mark.parametrize("R", range(0, 7))
def test_free_ball_matches_bfs_oracle(R):
    def nb(w):
        out = []
        for s in (1, -1, 2, -2):
            out.append(w[:-1] if w and w[-1] == -s else w + (s,))
        return out

    oracle = bfs_ball((), nb, R)
    ball = build_ball(F2, R)
    assert set(ball.vertices) == set(oracle)
    assert all(ball.dist[ball.index[v]] == d for v, d in oracle.items())


@pytest.mark.parametrize("d,R", [(1, 5), (2, 6), (3, 4)])
def test_lattice_ball_size(d, R):
    assert build_ball(parse_group(f"lattice:{d}"), R).n_vertices == lattice_ball_size(d, R)


@pytest.mark.parametrize("R", [1, 2, 3, 4])
def test_wreath_ball_matches_bfs_oracle(R):
    nb = wreath_free_neighbours(2)
    oracle = bfs_ball((frozenset(), ()), lambda v: [(frozenset(l), p) for l, p in nb(v)], R)
    ball = build_ball(W, R)
    assert ball.n_vertices == len(oracle)
    got = {(frozenset(f), x): int(ball.dist[i]) for i, (f, x) in enumerate(ball.vertices)}
    assert got == oracle


def test_wreath_ball_radius_three_size():
    # frozen from the independent BFS in tests/_exact.py
    assert build_ball(W, 3).n_vertices == 106


def test_wreath_word_length_closed_form_matches_bfs():
    nb = wreath_free_neighbours(2)
    oracle = bfs_ball((frozenset(), ()), lambda v: [(frozenset(l), p) for l, p in nb(v)], 5)
    for (lamps, pos), d in oracle.items():
        assert W.word_length((W._lamps(lamps), pos)) == d


@pytest.mark.parametrize("dsl,R", [("free:2", 5), ("lattice:2", 6), ("wreath:z2:free:2", 4),
                                   ("finite:D4", 4), ("tree-oriented:3", 5)])
def test_ball_invariants(dsl, R):
    m = parse_group(dsl)
    ball = build_ball(m, R)
    assert ball.vertices[0] == m.identity and ball.dist[0] == 0
    d = ball.dist[ball.edges]
    assert np.all(np.abs(d[:, 0] - d[:, 1]) <= 1)
    # connected: BFS over the edge list reaches everything
    adj = [[] for _ in range(ball.n_vertices)]
    for a, b in ball.edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = {0}
    q = deque([0])
    while q:
        v = q.popleft()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                q.append(w)
    assert len(seen) == ball.n_vertices
    assert np.all(np.diff(ball.dist) >= 0)


@pytest.mark.parametrize("dsl,R", [("free:2", 5), ("lattice:2", 6), ("wreath:z2:free:2", 4)])
def test_ball_prefix_monotone(dsl, R):
    m = parse_group(dsl)
    small, big = build_ball(m, R), build_ball(m, R + 1)
    assert big.vertices[: small.n_vertices] == small.vertices
    inner = (big.edges < small.n_vertices).all(axis=1)
    assert {(a, b, k) for (a, b), k in zip(big.edges[inner].tolist(), big.edge_keys[inner].tolist())} == \
        {(a, b, k) for (a, b), k in zip(small.edges.tolist(), small.edge_keys.tolist())}


def test_edge_keys_stable_across_radii():
    a, b = build_ball(Z2, 4), build_ball(Z2, 7)
    for (i, j), key in zip(a.edges, a.edge_keys):
        u, v = a.vertices[i], a.vertices[j]
        k = np.flatnonzero((b.edges[:, 0] == b.index[u]) & (b.edges[:, 1] == b.index[v]))
        assert b.edge_keys[k[0]] == key


def _bidirectional_distance(model, target):
    if target == model.identity:
        return 0
    inv = {s: model.invert(s) for s in model.generators}
    fwd, bwd = {model.identity: 0}, {target: 0}
    qf, qb = [model.identity], [target]
    while True:
        for dist, other, frontier, step in ((fwd, bwd, qf, lambda v, s: model.multiply(v, s)),
                                            (bwd, fwd, qb, lambda v, s: model.multiply(v, inv[s]))):
            nxt = []
            for v in frontier:
                for s in model.generators:
                    w = step(v, s)
                    if w in other:
                        return dist[v] + 1 + other[w]
                    if w not in dist:
                        dist[w] = dist[v] + 1
                        nxt.append(w)
            frontier[:] = nxt


@pytest.mark.parametrize("dsl,R", [("free:2", 6), ("lattice:2", 8), ("wreath:z2:free:2", 5)])
def test_word_metric_matches_bidirectional_search(dsl, R):
    m = parse_group(dsl)
    ball = build_ball(m, R)
    rng = np.random.default_rng(3)
    for i in rng.choice(ball.n_vertices, 100, replace=False):
        assert ball.dist[i] == _bidirectional_distance(m, ball.vertices[i])


def test_memory_cap():
    with pytest.raises(BallTooLarge):
        build_ball(F2, 12, max_vertices=1000)
    with pytest.raises(ValueError):
        build_ball(F2, -1)


def test_index_outside_ball():
    ball = build_ball(F2, 2)
    with pytest.raises(VertexOutsideBall):
        ball.index_of(F2.parse("aaa"))


# ---------------------------------------------------------------- subgroups


def test_subgroup_whole_group_counts():
    ball = build_ball(F2, 5)
    np.testing.assert_array_equal(subgroup_ball_count(ball, parse_subgroup("all", F2)),
                                  [2 * 3**n - 1 for n in range(6)])


def test_subgroup_axis_in_plane():
    ball = build_ball(Z2, 5)
    np.testing.assert_array_equal(subgroup_ball_count(ball, parse_subgroup("axis:0", Z2)),
                                  [1, 3, 5, 7, 9, 11])


def test_lamp_group_counts_and_growth():
    R = 6
    nb = wreath_free_neighbours(2)
    oracle = bfs_ball((frozenset(), ()), lambda v: [(frozenset(l), p) for l, p in nb(v)], R)
    per = np.bincount([d for (f, x), d in oracle.items() if x == ()], minlength=R + 1)
    expected = np.cumsum(per)
    ball = build_ball(W, R)
    counts = subgroup_ball_count(ball, parse_subgroup("lamp", W))
    np.testing.assert_array_equal(counts, expected)
    rate = groups.growth_rate(counts, start=2)
    slope = np.polyfit(np.arange(2, R + 1), np.log(expected[2:]), 1)[0]
    assert rate == pytest.approx(np.exp(slope), rel=1e-12)
    assert rate > 1.5


def test_subgroup_closure_spot_check():
    rng = np.random.default_rng(0)
    for dsl, g in [("lamp", W), ("axis:1", Z2), ("axis:0", F2), ("coset:b:axis:0", F2),
                   ("generated:102", parse_group("finite:S3")), ("all", W)]:
        spec = parse_subgroup(dsl, g)
        assert groups.check_subgroup(g, spec, rng)


def test_coset_membership():
    spec = parse_subgroup("coset:b:axis:0", F2)
    assert spec.contains(F2.parse("baa")) and spec.contains(F2.parse("b"))
    assert not spec.contains(F2.parse("ab"))
    assert spec.base_point == F2.parse("b")


def test_generated_subgroup_of_s3():
    s3 = parse_group("finite:S3")
    a3 = parse_subgroup("generated:120", s3)
    members = [g for g in s3.elements if a3.contains(g)]
    assert len(members) == 3


def test_subgroup_compatibility_table():
    with pytest.raises(SubgroupIncompatible):
        parse_subgroup("axis:0", W)
    with pytest.raises(SubgroupIncompatible):
        parse_subgroup("lamp", Z2)
    with pytest.raises(SubgroupIncompatible):
        parse_subgroup("axis:5", Z2)


# ---------------------------------------------------------------- oriented tree


def test_oriented_tree_levels_and_positions():
    t = parse_group("tree-oriented:3")
    o = t.identity
    par = t.parent(o)
    assert t.level(par) == 1
    assert t.relative_position(o, par) == (1, 0)
    sib = t.child(par, 1)
    assert t.level(sib) == 0 and t.relative_position(o, sib) == (1, 1)
    assert t.child(par, 0) == o
    assert t.parse("1:0") == o


def test_tree_window_matches_explicit_vertices():
    t = parse_group("tree-oriented:3")
    win = groups.tree_window(t, 4)
    for i in range(win.n_vertices):
        v = win.vertex(i)
        assert win.index_of(v) == i
        assert win.level[i] == t.level(v)
    assert win.index_of(t.identity) == win.origin


def test_vertex_budget_caps_every_builder():
    model = parse_group("free:3")
    with groups.vertex_budget(500):
        with pytest.raises(groups.BallTooLarge):
            groups.cached_ball(model, 6)
        with pytest.raises(groups.BallTooLarge):
            groups.tree_window(parse_group("tree-oriented:3"), 12)
    assert groups.build_ball(model, 4).n_vertices == 1 + 6 * (5**4 - 1) // 4

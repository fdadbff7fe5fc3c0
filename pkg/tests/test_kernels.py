"""Hashing primitives and numba / numpy kernel parity."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subperc import _kernels_numpy as ref
from subperc import groups, hashing, kernels
from subperc.percolation import field_states

try:
    from subperc import _kernels_numba as jit
except ImportError:  # pragma: no cover
    jit = None

needs_numba = pytest.mark.skipif(jit is None, reason="numba not importable")

u64 = st.integers(min_value=0, max_value=hashing.MASK64)


def test_splitmix_reference_vector():
    # first output of splitmix64 seeded with 0
    assert hashing.mix64(0) == 0xE220A8397B1DCDAF


@given(u64)
def test_vector_mix_matches_scalar(x):
    assert int(ref.mix64(np.array([x], np.uint64))[0]) == hashing.mix64(x)


@given(u64, u64)
def test_edge_key_is_order_free(a, b):
    assert hashing.edge_key(a, b) == hashing.edge_key(b, a)
    assert int(ref.edge_keys(np.array([a], np.uint64), np.array([b], np.uint64))[0]) == hashing.edge_key(a, b)


@given(u64, u64)
def test_edge_value_in_unit_interval(key, state):
    v = hashing.edge_value(key, state)
    assert 0.0 <= v < 1.0
    assert float(ref.edge_uniforms(np.array([key], np.uint64), state)[0]) == v


def test_streams_are_disjoint_by_tag():
    tags = [hashing.TAG_FIELD, hashing.TAG_WALK, hashing.TAG_TIE, hashing.TAG_SOURCE]
    vals = {hashing.stream(s, t) for s in range(200) for t in tags}
    assert len(vals) == 800


def test_uniforms_look_uniform():
    u = ref.edge_uniforms(np.arange(200_000, dtype=np.uint64), hashing.stream(0, hashing.TAG_FIELD))
    assert abs(u.mean() - 0.5) < 3 * np.sqrt(1 / 12 / len(u))
    hist = np.histogram(u, bins=20, range=(0, 1))[0]
    expected = len(u) / 20
    chi2 = ((hist - expected) ** 2 / expected).sum()
    assert chi2 < 43.8  # 99.9% quantile, 19 dof


def test_word_fingerprint_is_incremental():
    w = (1, -2, 2, 1)
    h = hashing.WORD_ROOT
    for s in w:
        h = hashing.word_step(h, s)
    assert h == hashing.word_fingerprint(w)
    assert hashing.word_fingerprint((1, 2)) != hashing.word_fingerprint((2, 1))


def test_backend_flag():
    assert kernels.BACKEND in ("numba", "numpy")


# ---------------------------------------------------------------- parity


@needs_numba
@given(st.lists(u64, min_size=1, max_size=50), u64)
@settings(max_examples=50, deadline=None)
def test_parity_uniforms(keys, state):
    keys = np.array(keys, np.uint64)
    np.testing.assert_array_equal(jit.edge_uniforms(keys, state), ref.edge_uniforms(keys, state))
    np.testing.assert_array_equal(jit.edge_keys(keys, keys[::-1]), ref.edge_keys(keys, keys[::-1]))


@needs_numba
@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("p", [0.0, 0.3, 0.5, 0.8, 1.0])
def test_parity_components(seed, p):
    ball = groups.cached_ball(groups.parse_group("lattice:2"), 8)
    is_open = ref.edge_uniforms(ball.edge_keys, hashing.stream(seed, hashing.TAG_FIELD)) < p
    np.testing.assert_array_equal(
        jit.components(ball.n_vertices, ball.edges, is_open),
        ref.components(ball.n_vertices, ball.edges, is_open),
    )


@needs_numba
@pytest.mark.parametrize("hold", [False, True])
def test_parity_walk(hold):
    ball = groups.cached_ball(groups.parse_group("lattice:2"), 6)
    for seed in range(4):
        s = hashing.stream(seed, hashing.TAG_WALK)
        a = jit.walk(ball.nbr, 0, 2000, s, 0, hold)
        b = ref.walk(ball.nbr, 0, 2000, s, 0, hold)
        np.testing.assert_array_equal(a[0], b[0])
        assert tuple(int(x) for x in a[1:]) == tuple(int(x) for x in b[1:])


@needs_numba
def test_parity_free_walk():
    for seed in range(4):
        a = jit.free_walk(2, 3000, hashing.stream(seed, hashing.TAG_WALK), hashing.stream(seed, hashing.TAG_FIELD), 0)
        b = ref.free_walk(2, 3000, hashing.stream(seed, hashing.TAG_WALK), hashing.stream(seed, hashing.TAG_FIELD), 0)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)


@needs_numba
def test_parity_invade_batch():
    ball = groups.cached_ball(groups.parse_group("free:2"), 7)
    states = field_states(range(40))
    hmask = np.ones(ball.n_vertices, bool)
    grid = np.array([0.2, 0.4, 0.6])
    args = (ball.nbr, ball.eid, ball.edge_keys, states, np.zeros(40, np.int64), grid, 0.61, ball.dist, 7, hmask, 50)
    for x, y in zip(jit.invade_batch(*args), ref.invade_batch(*args)):
        np.testing.assert_array_equal(x, y)


@needs_numba
def test_parity_free_invade_batch():
    states = field_states(range(60))
    grid = np.array([0.2, 0.33, 0.45])
    for axis in (0, 1):
        args = (2, np.zeros(0, np.int64), axis, states, grid, 0.46, 6, 40, 200_000)
        for x, y in zip(jit.free_invade_batch(*args), ref.free_invade_batch(*args)):
            np.testing.assert_array_equal(x, y)


@needs_numba
def test_parity_sweep_and_connect():
    ball = groups.cached_ball(groups.parse_group("lattice:2"), 6)
    grid = np.array([0.3, 0.5, 0.7])
    hcount = np.ones(ball.n_vertices, np.int64)
    for seed in range(5):
        vals = ref.edge_uniforms(ball.edge_keys, hashing.stream(seed, hashing.TAG_FIELD))
        np.testing.assert_array_equal(
            jit.sweep_counts(ball.n_vertices, ball.edges, vals, hcount, ball.boundary, 3, grid),
            ref.sweep_counts(ball.n_vertices, ball.edges, vals, hcount, ball.boundary, 3, grid),
        )
    pairs = np.array([[0, 1], [0, 10], [3, 40]])
    states = field_states(range(20))
    a = jit.connect_batch(ball.n_vertices, ball.edges, ball.edge_keys, states, grid, pairs, ball.boundary)
    b = ref.connect_batch(ball.n_vertices, ball.edges, ball.edge_keys, states, grid, pairs, ball.boundary)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)

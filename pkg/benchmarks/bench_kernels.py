"""Time the jitted and the pure-numpy kernels on the same inputs.

Each backend runs in its own interpreter because the backend is fixed at
import time by ``SUBPERC_DISABLE_NUMBA``.  The jitted timings exclude the
first (compiling) call.

    python benchmarks/bench_kernels.py [--quick]
"""

import argparse
import json
import os
import subprocess
import sys
import time

CASES = ["edge_uniforms", "components", "invade_batch", "free_invade_batch", "walk", "sweep_counts"]


def _time(fn, repeat):
    fn()
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def child(quick):
    import numpy as np

    from subperc import groups, hashing, kernels
    from subperc.percolation import field_states

    scale = 0.2 if quick else 1.0
    R = int(60 * scale) or 10
    ball = groups.build_ball(groups.parse_group("lattice:2"), R)
    state = hashing.stream(7, hashing.TAG_FIELD)
    vals = kernels.edge_uniforms(ball.edge_keys, state)
    open_ = vals < 0.5
    seeds = list(range(int(200 * scale) or 20))
    states = field_states(seeds)
    grid = np.array([0.3, 0.5, 0.7])
    hmask = np.ones(ball.n_vertices, bool)
    T = int(200_000 * scale)
    table = ball.nbr
    origin = ball.index_of(ball.model.identity)
    hc = hmask.astype(np.int64)
    bmask = ball.boundary.copy()
    chain = np.zeros(0, np.int64)
    n_free = len(seeds)
    calls = {
        "edge_uniforms": lambda: kernels.edge_uniforms(ball.edge_keys, state),
        "components": lambda: kernels.components(ball.n_vertices, ball.edges, open_),
        "invade_batch": lambda: kernels.invade_batch(
            ball.nbr, ball.eid, ball.edge_keys, states, np.full(len(seeds), origin), grid, 0.5,
            ball.dist, R, hmask, -1),
        "free_invade_batch": lambda: kernels.free_invade_batch(
            2, chain, 0, states[:n_free], np.array([0.33]), 0.33, 30, 0, 2_000_000),
        "walk": lambda: kernels.walk(table, origin, T, hashing.stream(3, hashing.TAG_WALK), 0),
        "sweep_counts": lambda: kernels.sweep_counts(ball.n_vertices, ball.edges, vals, hc, bmask, 2, grid),
    }
    repeat = 2 if quick else 3
    out = {"backend": kernels.BACKEND, "vertices": ball.n_vertices}
    for name in CASES:
        out[name] = _time(calls[name], repeat)
    print(json.dumps(out))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true")
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.child:
        child(args.quick)
        return
    results = {}
    for flag in ("0", "1"):
        env = dict(os.environ, SUBPERC_DISABLE_NUMBA=flag)
        cmd = [sys.executable, __file__, "--child"] + (["--quick"] if args.quick else [])
        res = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
        data = json.loads(res.stdout.strip().splitlines()[-1])
        results[data["backend"]] = data
    names = sorted(results)
    print(f"{'kernel':<20}" + "".join(f"{n:>12}" for n in names) + f"{'speedup':>10}")
    for case in CASES:
        t = [results[n][case] for n in names]
        fast = results.get("numba", {}).get(case)
        slow = results.get("numpy", {}).get(case)
        ratio = f"{slow / fast:9.1f}x" if fast and slow else ""
        print(f"{case:<20}" + "".join(f"{x * 1e3:10.2f}ms" for x in t) + f"{ratio:>10}")


if __name__ == "__main__":
    main()

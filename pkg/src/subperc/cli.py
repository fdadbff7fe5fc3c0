"""Command-line experiment runner.

Configs are flat ``key = value`` files (``#`` starts a comment).  Every
Monte Carlo seed is ``base_seed + i`` for ``i < N``, and results are merged in
seed order, so an experiment's CSV does not depend on the worker count.
"""

import argparse
import csv
import hashlib
import io
import json
import math
import os
import platform
import re
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from subperc import __version__, estimators, groups, kernels, oracles, walks
from subperc.percolation import CouplingField, clusters, map_seeds, sample, seed_list

EXIT_OK = 0
EXIT_ORACLE = 1
EXIT_CONFIG = 2
EXIT_RESOURCE = 3

EXPERIMENTS = ("sweep", "tail", "kappa", "trichotomy", "pu-probe", "freq", "visits")
ORACLE_NAMES = ("russo", "osss", "integral", "kgh", "mtp", "tilted-mtp", "spanning-tree", "suite")

SERIES_COLUMNS = ("series", "p", "x", "estimate", "ci_low", "ci_high", "n_samples")
WALK_COLUMNS = ("seed", "T", "cluster_id", "frequency", "ci_low", "ci_high", "reflections")
VISIT_COLUMNS = ("seed", "T", "clusters_visited", "returns", "time_in_start", "reflections")

COLUMN_HELP = """\
CSV columns by experiment (x is the varying coordinate of the series):
  sweep       series,p,x,...       reach_R / reach_2R (x = radius), ratio
  tail        series,p,x,...       max / origin (x = n); ccdf on oriented trees (x = k)
  kappa       series,p,x,...       kappa (x = n)
  trichotomy  series,p,x,...       zero / one / many (x = 0, 1, 2)
  pu-probe    series,p,x,...       tau_min (x = distance), theta (x = 0)
  freq        seed,T,cluster_id,frequency,ci_low,ci_high,reflections
  visits      seed,T,clusters_visited,returns,time_in_start,reflections
  oracle:*    check,instance,lhs,rhs,gap,verdict
series columns: series,p,x,estimate,ci_low,ci_high,n_samples
"""


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- schema


def _int(lo=None, hi=None):
    def conv(text):
        v = int(text)
        if lo is not None and v < lo or hi is not None and v > hi:
            raise ValueError(f"must lie in [{lo}, {hi if hi is not None else 'inf'}]")
        return v

    return conv


def _prob(text):
    v = float(Fraction(text.strip()))
    if not 0.0 <= v <= 1.0:
        raise ValueError("must lie in [0, 1]")
    return v


def _grid(text):
    """``a,b,c`` or ``start:stop:count`` (inclusive linear grid)."""
    text = text.strip()
    if text.count(":") == 2 and "," not in text:
        a, b, n = text.split(":")
        vals = np.linspace(float(a), float(b), int(n)).round(12).tolist()
    else:
        vals = [float(Fraction(t.strip())) for t in text.split(",") if t.strip()]
    if not vals:
        raise ValueError("empty grid")
    for v in vals:
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"value {v} outside [0, 1]")
    return vals


def _ints(text):
    vals = [int(t) for t in text.split(",") if t.strip()]
    if not vals or min(vals) < 0:
        raise ValueError("need a comma list of nonnegative integers")
    return vals


def _choice(*options):
    def conv(text):
        if text not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return text

    return conv


def _experiment(text):
    if text in EXPERIMENTS:
        return text
    if text.startswith("oracle:") and text.split(":", 1)[1] in ORACLE_NAMES:
        return text
    raise ValueError(f"must be one of {', '.join(EXPERIMENTS)} or oracle:<{'|'.join(ORACLE_NAMES)}>")


SCHEMA = {
    "experiment": (_experiment, None, "experiment kind"),
    "group": (str, None, "group DSL, see list-groups"),
    "subgroup": (str, "all", "subgroup DSL"),
    "R": (_int(0, 100_000), None, "ball radius (window height on oriented trees)"),
    "p": (_prob, None, "edge probability"),
    "p_grid": (_grid, None, "comma list or start:stop:count"),
    "n_max": (_int(1, 10_000), None, "largest n for tail and kappa"),
    "T": (_ints, None, "walk length, or a comma list of horizons for visits"),
    "N": (_int(1, 100_000_000), None, "number of seeds"),
    "base_seed": (_int(0, 2**62), 0, "first seed"),
    "output": (str, None, "output directory (default: $SUBPERC_OUTPUT or .)"),
    "workers": (_int(1, 1024), None, "worker threads (default: $SUBPERC_WORKERS or 1)"),
    "theta": (_prob, 0.5, "crossing level for sweep"),
    "m": (_int(2, 10**9), 2, "intersection threshold for trichotomy"),
    "distances": (_ints, None, "subgroup distances for pu-probe"),
    "pairs": (_int(1, 10_000), 4, "pairs per distance for kappa and pu-probe"),
    "sources": (_int(0, 10_000), 32, "extra sources for tail"),
    "lamp_radius": (_int(0, 20), 1, "flip radius of the lamp subgroup"),
    "boundary": (_choice(*walks.BOUNDARY_RULES), "resample", "walk rule at the ball boundary"),
    "walk": (_choice("subgroup", "ambient"), None, "walk generators (freq: subgroup, visits: ambient)"),
    "builtin": (str, None, "oracle instance, see `subperc oracle --help`"),
    "max_vertices": (_int(1, 10**9), groups.DEFAULT_MAX_VERTICES, "vertex budget per ball"),
}

REQUIRED = {
    "sweep": ("group", "R", "p_grid", "N"),
    "tail": ("group", "R", "N"),
    "kappa": ("group", "R", "n_max", "N"),
    "trichotomy": ("group", "R", "p_grid", "N"),
    "pu-probe": ("group", "R", "p", "distances", "N"),
    "freq": ("group", "R", "p", "T", "N"),
    "visits": ("group", "R", "p", "T", "N"),
}


@dataclass
class ExperimentConfig:
    values: dict
    text: str = ""
    errors: list = field(default_factory=list)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        v = self.values.get(key)
        return default if v is None else v

    @property
    def experiment(self):
        return self.values["experiment"]

    def canonical(self):
        """Sorted ``key=value`` text of the raw settings; hashed into the manifest."""
        raw = self.values["_raw"]
        return "".join(f"{k}={raw[k]}\n" for k in sorted(raw) if k not in ("output", "workers"))

    def digest(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def parse_config_text(text, overrides=()):
    raw = {}
    errors = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected key=value, got {line!r}")
            continue
        k, v = (s.strip() for s in line.split("=", 1))
        if k in raw:
            errors.append(f"line {lineno}: duplicate key {k!r}")
        raw[k] = v
    for item in overrides:
        if "=" not in item:
            errors.append(f"override {item!r}: expected key=value")
            continue
        k, v = (s.strip() for s in item.split("=", 1))
        raw[k] = v
    return _check(raw, errors, text)


def _check(raw, errors, text=""):
    values = {"_raw": dict(raw)}
    for k in raw:
        if k not in SCHEMA:
            errors.append(f"unknown key {k!r}")
    for k, (conv, default, _) in SCHEMA.items():
        if k in raw:
            try:
                values[k] = conv(raw[k])
            except (ValueError, ZeroDivisionError) as exc:
                errors.append(f"{k}: {exc}")
                values[k] = None
        else:
            values[k] = default
    exp = values.get("experiment")
    if "experiment" not in raw:
        errors.append("missing key 'experiment'")
    elif exp in REQUIRED:
        for k in REQUIRED[exp]:
            if k not in raw:
                if k == "p_grid" and "p" in raw:
                    values["p_grid"] = [values["p"]] if values["p"] is not None else None
                    continue
                if k == "p" and "p_grid" in raw and exp != "pu-probe":
                    continue
                errors.append(f"missing key {k!r} (required by {exp})")
        if values.get("group"):
            try:
                model = groups.parse_group(values["group"])
                spec = groups.parse_subgroup(values["subgroup"], model, values["lamp_radius"] or 1)
                values["_model"], values["_spec"] = model, spec
            except groups.SubgroupIncompatible as exc:
                errors.append(f"incompatible subgroup: {exc}")
            except (ValueError, groups.MalformedElement) as exc:
                errors.append(f"group/subgroup: {exc}")
        _experiment_checks(exp, values, errors)
    return ExperimentConfig(values, text, errors)


def _experiment_checks(exp, v, errors):
    model = v.get("_model")
    if exp == "sweep" and v.get("p_grid") and len(v["p_grid"]) < 2:
        errors.append("p_grid: sweep needs at least two points")
    if exp in ("freq",) and v.get("T") and len(v["T"]) != 1:
        errors.append("T: freq takes a single walk length")
    if exp == "tail" and isinstance(model, groups.OrientedTree):
        if v.get("p") is None:
            errors.append("missing key 'p' (tail on an oriented tree fits one p)")
    elif exp == "tail":
        if v.get("n_max") is None:
            errors.append("missing key 'n_max' (required by tail)")
        if v.get("p") is None and v.get("p_grid") is None:
            errors.append("missing key 'p' or 'p_grid' (required by tail)")
    if exp in ("sweep", "kappa", "pu-probe", "visits") and model is not None:
        if isinstance(model, groups.OrientedTree) and exp != "visits":
            errors.append(f"{exp} is not defined on {model.name}")
    if exp == "kappa" and v.get("p") is None and v.get("p_grid") is None:
        errors.append("missing key 'p' or 'p_grid' (required by kappa)")


def load_config(path, overrides=()):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        cfg = ExperimentConfig({"_raw": {}}, "", [f"cannot read {path}: {exc}"])
        return cfg
    return parse_config_text(text, overrides)


# ---------------------------------------------------------------- output


def _slug(text):
    return re.sub(r"[^A-Za-z0-9.+-]+", "_", text.replace(":", "-")).strip("_") or "x"


def output_stem(cfg):
    exp = cfg.experiment.replace("oracle:", "oracle-")
    group = cfg.get("group") or "builtin"
    sub = cfg.get("subgroup") if cfg.get("group") else (cfg.get("builtin") or "default")
    R = cfg.get("R", 0)
    return f"{_slug(exp)}_{_slug(group)}_{_slug(sub)}_R{R}_seed{cfg.get('base_seed', 0)}"


def _cell(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return "nan" if math.isnan(x) else repr(x)
    return str(x)


def csv_text(columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(x) for x in r])
    return buf.getvalue()


def dat_files(rows):
    """Two-column ``x estimate`` text per series, ``x`` being whichever of
    ``p`` and ``x`` varies within the series."""
    by = {}
    for r in rows:
        by.setdefault(r[0], []).append(r)
    out = {}
    for series, rs in by.items():
        col = 1 if len({r[1] for r in rs}) > 1 else 2
        lines = [f"# {SERIES_COLUMNS[col]} {series}"]
        lines += [f"{_cell(r[col])} {_cell(r[3])}" for r in rs]
        out[series] = "\n".join(lines) + "\n"
    return out


def _versions():
    import numba
    import scipy

    return {
        "subperc": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "backend": kernels.BACKEND,
    }


def _seed_record(base, n):
    if n <= 1000:
        return list(range(base, base + n))
    return {"rule": "base_seed + i", "first": base, "last": base + n - 1, "count": n}


# ---------------------------------------------------------------- experiments


@dataclass
class Result:
    columns: tuple
    rows: list
    summary: dict
    extra: dict = field(default_factory=dict)  # suffix -> (columns, rows)
    plot_rows: list = None
    failed: bool = False


def _p_values(cfg):
    return cfg.get("p_grid") if cfg.get("p_grid") else [cfg["p"]]


def run_sweep(cfg, model, spec, workers):
    c = estimators.crossing_sweep(model, cfg["R"], cfg["p_grid"], cfg["N"], cfg["base_seed"],
                                  cfg["theta"], workers)
    summary = {"p_hat": c.p_hat, "status": c.status, "level_R": c.level_R,
               "level_2R": c.level_2R, "drift": c.drift}
    rows = c.rows()
    return Result(SERIES_COLUMNS, rows, summary, plot_rows=rows)


def run_tail(cfg, model, spec, workers):
    if isinstance(model, groups.OrientedTree):
        fit, counts = estimators.power_tail(model, spec, cfg["R"], cfg["p"], cfg["N"], cfg["base_seed"], workers)
        N = len(counts)
        srt = np.sort(counts)
        rows = []
        for k in range(1, int(srt[-1]) + 1):
            hits = int(N - np.searchsorted(srt, k, side="left"))
            lo, hi = estimators.wilson_interval(hits, N)
            rows.append(("ccdf", cfg["p"], k, hits / N, lo, hi, N))
        summary = {"exponent": fit.exponent, "stderr": fit.stderr, "r2": fit.r2,
                   "k_range": [int(fit.k[0]), int(fit.k[-1])]}
        return Result(SERIES_COLUMNS, rows, summary, plot_rows=rows)
    curves = estimators.tail_curve(model, spec, cfg["R"], _p_values(cfg), cfg["n_max"], cfg["N"],
                                   cfg["base_seed"], cfg["sources"], workers)
    rows, summary = [], {}
    for c in curves:
        rows += c.rows()
        summary[repr(float(c.p))] = {
            "slope": c.fit.slope if c.fit else None,
            "r2": c.fit.r2 if c.fit else None,
            "origin_slope": c.origin_fit.slope if c.origin_fit else None,
            "origin_r2": c.origin_fit.r2 if c.origin_fit else None,
        }
    return Result(SERIES_COLUMNS, rows, summary, plot_rows=rows)


def run_kappa(cfg, model, spec, workers):
    curves = estimators.kappa_curve(model, cfg["R"], _p_values(cfg), cfg["n_max"], cfg["pairs"],
                                    cfg["N"], cfg["base_seed"], spec, workers)
    if not isinstance(curves, list):
        curves = [curves]
    rows, summary = [], {}
    for c in curves:
        rows += c.rows()
        summary[repr(float(c.p))] = {
            "growth": c.growth,
            "violations": len(c.supermultiplicativity_violations()),
        }
    return Result(SERIES_COLUMNS, rows, summary, plot_rows=rows)


def run_trichotomy(cfg, model, spec, workers):
    s = estimators.trichotomy_scan(model, spec, cfg["R"], cfg["p_grid"], cfg["m"], cfg["N"],
                                   cfg["base_seed"], workers)
    rows = s.rows()
    return Result(SERIES_COLUMNS, rows, {"m": cfg["m"]}, plot_rows=rows)


def run_pu_probe(cfg, model, spec, workers):
    r = estimators.pu_probe(model, spec, cfg["R"], cfg["p"], cfg["distances"], cfg["N"],
                            cfg["pairs"], cfg["base_seed"], workers)
    rows = r.rows()
    return Result(SERIES_COLUMNS, rows, {"verdict": r.verdict, "halvings": r.halvings}, plot_rows=rows)


def _walk_spec(cfg, model, spec, default):
    kind = cfg.get("walk") or default
    return groups.parse_subgroup("all", model) if kind == "ambient" else spec


def run_freq(cfg, model, spec, workers):
    ball = groups.cached_ball(model, cfg["R"])
    wspec = _walk_spec(cfg, model, spec, "subgroup")
    T = cfg["T"][0]
    p = cfg["p"]
    boundary = cfg["boundary"]
    # density of the cluster inside the set the walk can reach
    reach = ball.mask(wspec)
    n_reach = int(reach.sum())

    def one(seed):
        part = clusters(sample(ball, CouplingField(seed), p))
        path = walks.run_walk(ball, wspec, T, seed, boundary)
        c = walks.max_frequency_cluster(part, path, seed)
        f = walks.frequency(part, path, c)
        density = int(np.count_nonzero(reach & (part.labels == c))) / n_reach
        return (seed, T, c, f.value, f.ci_low, f.ci_high, path.reflections), f.se, density, path.flagged

    res = map_seeds(one, seed_list(cfg["base_seed"], cfg["N"]), workers)
    rows = [r[0] for r in res]
    se = np.array([r[1] for r in res])
    dens = np.array([r[2] for r in res])
    freq = np.array([r[3] for r in rows])
    z = (freq - dens) / np.where(se > 0, se, np.nan)
    summary = {
        "mean_frequency": float(freq.mean()),
        "mean_density": float(dens.mean()),
        "max_abs_z": float(np.nanmax(np.abs(z))) if np.isfinite(z).any() else None,
        "flagged_runs": int(sum(r[3] for r in res)),
    }
    extra_rows = [("density", p, r[0], d, math.nan, math.nan, 1) for r, d in zip(rows, dens)]
    extra_rows += [("frequency", p, r[0], r[3], r[4], r[5], T) for r in rows]
    return Result(WALK_COLUMNS, rows, summary, extra={"summary": (SERIES_COLUMNS, extra_rows)},
                  plot_rows=extra_rows)


def run_visits(cfg, model, spec, workers):
    wspec = _walk_spec(cfg, model, spec, "ambient")
    st = walks.visit_count_experiment(model, cfg["R"], cfg["p"], cfg["T"], cfg["N"], cfg["base_seed"],
                                      wspec, workers, cfg["boundary"])
    rows = st.rows()
    n = len(st.seeds)
    series = []
    for h, T in enumerate(st.horizons):
        col = st.time_in_start[:, h]
        se = col.std(ddof=1) / math.sqrt(n) if n > 1 else math.nan
        m = float(col.mean())
        series.append(("time_in_start", cfg["p"], T, m, m - 1.96 * se, m + 1.96 * se, n))
        series.append(("clusters_visited", cfg["p"], T, float(st.clusters_visited[:, h].mean()),
                       math.nan, math.nan, n))
    trend = st.trend()
    summary = {"trend": [{"from": st.horizons[i], "to": st.horizons[i + 1], "drop": d, "se": s,
                          "decreases": ok} for i, (d, s, ok) in enumerate(trend)]}
    return Result(VISIT_COLUMNS, rows, summary, extra={"summary": (SERIES_COLUMNS, series)},
                  plot_rows=series)


RUNNERS = {
    "sweep": run_sweep,
    "tail": run_tail,
    "kappa": run_kappa,
    "trichotomy": run_trichotomy,
    "pu-probe": run_pu_probe,
    "freq": run_freq,
    "visits": run_visits,
}


# ---------------------------------------------------------------- oracles


def _russo_builtins():
    out = {
        "single-edge": lambda: [oracles.russo_check(
            oracles.FiniteSystem(2, [(0, 1)], (0, 1), Fraction(1, 3), "edge"), oracles.edge_event(0))],
        "series-2": lambda: [oracles.russo_check(
            oracles.path_system(3, p=Fraction(2, 5)), oracles.all_open_event([0, 1]))],
        "random-8": lambda: [oracles.russo_check(s, oracles.intersection_event(0, s.A, 2))
                             for s in [oracles.random_system(8, max_edges=8)]],
        "random": lambda: [oracles.russo_check(s, oracles.intersection_event(0, s.A, min(2, len(s.A))))
                           for s in (oracles.random_system(i) for i in range(20))],
    }
    return out


def _osss_builtins():
    edge = oracles.FiniteSystem(2, [(0, 1)], (0, 1), Fraction(1, 2), "edge")
    tri = oracles.cycle_system(3)
    conn = oracles.connection_event(0, 2)

    def random():
        reps = []
        for i in range(19):
            s = oracles.random_system(100 + i)
            n = min(2, len(s.A))
            reps.append(oracles.osss_check(s, oracles.intersection_event(0, s.A, n),
                                           oracles.ghost_hit_event(0, s.A), oracles.ghost_forest(s, n)))
        return reps

    return {
        "single-edge": lambda: [oracles.osss_check(edge, oracles.edge_event(0), oracles.edge_event(0),
                                                   oracles.fixed_forest([0]))],
        "triangle": lambda: [oracles.osss_check(tri, conn, conn, oracles.exploration_forest(0, 2))],
        "constant": lambda: [oracles.osss_check(tri, oracles.constant_event(1), conn,
                                                oracles.exploration_forest(0, 2))],
        "random": random,
    }


def _integral_builtins():
    p5 = oracles.path_system(5, A=(0, 4))

    def random():
        reps = []
        for i in range(10):
            s = oracles.random_system(200 + i)
            reps.append(oracles.integral_inequality_check(s, min(2, len(s.A)), Fraction(1, 5), Fraction(3, 5)))
        return reps

    return {
        "path5": lambda: [oracles.integral_inequality_check(p5, 2, 0.3, 0.6)],
        "equal-p": lambda: [oracles.integral_inequality_check(p5, 2, 0.4, 0.4)],
        "n1": lambda: [oracles.integral_inequality_check(oracles.path_system(4, A=(0, 1, 2, 3)), 1, 0.2, 0.7)],
        "random": random,
    }


def _finite(label):
    model = groups.parse_group(f"finite:{label}")
    return model, oracles.FiniteSystem.cayley(model)


def _kgh_builtins():
    def s3():
        model, sys_ = _finite("S3")
        A3 = groups.parse_subgroup("generated:120", model)
        return [oracles.kgh_identity_check(sys_, A3, g, n) for g in sys_.vertices for n in (1, 2, 3, 4)]

    def d4():
        model, sys_ = _finite("D4")
        reps = []
        for gen in ("generated:0321", "generated:1230", "generated:2301"):
            H = groups.parse_subgroup(gen, model)
            reps += [oracles.kgh_identity_check(sys_, H, g, n) for g in sys_.vertices for n in (1, 2, 3)]
        return reps

    def identity():
        model, sys_ = _finite("D4")
        return [oracles.kgh_identity_check(sys_, groups.parse_subgroup("generated:0321", model),
                                           model.identity, 1)]

    return {"s3": s3, "d4": d4, "identity": identity}


def _mtp_builtins():
    def adjacency():
        s = oracles.cycle_system(5)
        adj = {frozenset(e) for e in s.edges}
        return [oracles.mtp_check(s, range(5), "uniform",
                                  lambda en, x, y: int(frozenset((x, y)) in adj), instance="cycle5:adjacency")]

    def tree5():
        # asymmetric tree 0-1, 1-2, 1-3, 3-4; mass flows toward leaf 4
        s = oracles.FiniteSystem(5, [(0, 1), (1, 2), (1, 3), (3, 4)], range(5), Fraction(1, 2), "tree5")
        path = {0: {0, 1, 3, 4}, 1: {1, 3, 4}, 2: {2, 1, 3, 4}, 3: {3, 4}, 4: {4}}
        return [oracles.mtp_check(s, range(5), "uniform", lambda en, x, y: int(y in path[x]),
                                  instance="tree5:toward-leaf")]

    def d4_cyclic():
        model, sys_ = _finite("D4")
        H = groups.parse_subgroup("generated:1230", model)
        A = [v for v in sys_.vertices if H.contains(v)]

        def kernel(en, x, y):
            same = en.labels[:, x] == en.labels[:, y]
            return same * (en.cluster_hits(x, range(sys_.n_vertices)) >= 3)

        return [oracles.mtp_check(sys_, A, "identity", kernel, instance="D4:cyclic:conn-big")]

    return {"adjacency": adjacency, "tree5": tree5, "d4-cyclic": d4_cyclic}


def _tilted_builtins():
    return {
        "parent": lambda: [oracles.tilted_mtp_check(d, 1, lambda u, w: int((u, w) == (1, 0)),
                                                    f"tree{d}:parent") for d in (3, 4, 5)],
        "two-up": lambda: [oracles.tilted_mtp_check(d, 2, lambda u, w: int((u, w) == (2, 0)),
                                                    f"tree{d}:two-up") for d in (3, 4)],
        "level-symmetric": lambda: [oracles.tilted_mtp_check(
            3, 4, lambda u, w: Fraction(1, 2) ** (u + w) if u == w and u + w <= 4 else 0, "tree3:same-level")],
        "percolation": lambda: [oracles.tilted_mtp_check(
            3, 6, lambda u, w: Fraction(3, 5) ** (u + w) if u + w <= 6 else 0, "tree3:p^dist")],
    }


def _spanning_builtins():
    def as_report(name, res, expect_edges):
        res.check()
        ok = len(res.edges) == expect_edges
        return oracles.OracleReport("spanning-tree", name, len(res.edges), expect_edges,
                                    expect_edges - len(res.edges), ok)

    return {
        "single-cell": lambda: [as_report("K4:single-cell", oracles.spanning_tree_from_partitions(
            (4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]), [[range(4)]], 0), 3)],
        "path": lambda: [as_report("path4", oracles.spanning_tree_from_partitions(
            (4, [(0, 1), (1, 2), (2, 3)]), [[{0, 1}, {2, 3}], [range(4)]], 0), 3)],
        "4-cycle": lambda: [as_report("cycle4", oracles.spanning_tree_from_partitions(
            (4, [(0, 1), (1, 2), (2, 3), (0, 3)]), [[{0, 1}, {2, 3}], [range(4)]], s), 3) for s in range(4)],
    }


ORACLE_BUILTINS = {
    "russo": _russo_builtins,
    "osss": _osss_builtins,
    "integral": _integral_builtins,
    "kgh": _kgh_builtins,
    "mtp": _mtp_builtins,
    "tilted-mtp": _tilted_builtins,
    "spanning-tree": _spanning_builtins,
}


def run_oracle(name, builtin=None):
    """Reports for one named oracle; every builtin instance unless one is named."""
    if name == "suite":
        reps = []
        for n in ORACLE_BUILTINS:
            reps += run_oracle(n)
        return reps
    if name not in ORACLE_BUILTINS:
        raise ConfigError(f"unknown oracle {name!r}; known: {', '.join(ORACLE_NAMES)}")
    table = ORACLE_BUILTINS[name]()
    if builtin is not None:
        if builtin not in table:
            raise ConfigError(f"unknown instance {builtin!r} for {name}; known: {', '.join(table)}")
        return table[builtin]()
    reps = []
    for fn in table.values():
        reps += fn()
    return reps


# ---------------------------------------------------------------- driver


def output_dir(cfg, flag=None):
    d = flag or cfg.get("output") or os.environ.get("SUBPERC_OUTPUT") or "."
    return Path(d)


def execute(cfg, out_dir, workers=None):
    """Run a validated config and write its files; returns ``(exit code, paths)``."""
    stem = output_stem(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    workers = workers or cfg.get("workers")
    t0 = time.perf_counter()
    exp = cfg.experiment
    if exp.startswith("oracle:"):
        reps = run_oracle(exp.split(":", 1)[1], cfg.get("builtin"))
        res = Result(oracles.REPORT_COLUMNS, [r.row() for r in reps],
                     {"checks": len(reps), "violations": sum(not r.holds for r in reps)},
                     failed=any(not r.holds for r in reps))
    else:
        with groups.vertex_budget(cfg["max_vertices"]):
            res = RUNNERS[exp](cfg, cfg["_model"], cfg["_spec"], workers)
    wall = time.perf_counter() - t0
    paths = []
    main = out_dir / f"{stem}.csv"
    main.write_text(csv_text(res.columns, res.rows))
    paths.append(main)
    for suffix, (cols, rows) in res.extra.items():
        pth = out_dir / f"{stem}_{suffix}.csv"
        pth.write_text(csv_text(cols, rows))
        paths.append(pth)
    if res.plot_rows:
        for series, text in dat_files(res.plot_rows).items():
            pth = out_dir / f"{stem}_{_slug(series)}.dat"
            pth.write_text(text)
            paths.append(pth)
    manifest = {
        "experiment": exp,
        "config": {k: v for k, v in sorted(cfg["_raw"].items())},
        "config_hash": cfg.digest(),
        "seeds": _seed_record(cfg.get("base_seed", 0), cfg.get("N", 0) or 0),
        "versions": _versions(),
        "workers": workers or int(os.environ.get("SUBPERC_WORKERS", "1")),
        "wall_time_s": round(wall, 3),
        "files": [p.name for p in paths],
        "summary": _jsonable(res.summary),
    }
    mpath = out_dir / f"{stem}.manifest.json"
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    paths.append(mpath)
    return (EXIT_ORACLE if res.failed else EXIT_OK), paths, res


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return None if math.isnan(x) or math.isinf(x) else x
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _print_errors(errors, stream=sys.stderr):
    for e in errors:
        print(f"config error: {e}", file=stream)


def cmd_run(args):
    cfg = load_config(args.config, args.set)
    if cfg.errors:
        _print_errors(cfg.errors)
        return EXIT_CONFIG
    try:
        code, paths, res = execute(cfg, output_dir(cfg, args.output), args.workers)
    except (groups.BallTooLarge, MemoryError) as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (estimators.DegenerateGrid, estimators.InsufficientSamples, ConfigError,
            groups.VertexOutsideBall, walks.WalkerTrapped, walks.NoFrequency) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for p in paths:
        print(p)
    print(json.dumps(_jsonable(res.summary), sort_keys=True))
    return code


def cmd_validate(args):
    cfg = load_config(args.config, args.set)
    if cfg.errors:
        print(f"{args.config}: {len(cfg.errors)} problem(s)")
        for e in cfg.errors:
            print(f"  - {e}")
        return EXIT_CONFIG
    print(f"{args.config}: ok ({cfg.experiment}, output stem {output_stem(cfg)})")
    return EXIT_OK


def cmd_oracle(args):
    try:
        reps = run_oracle(args.name, args.builtin)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = csv_text(oracles.REPORT_COLUMNS, [r.row() for r in reps])
    sys.stdout.write(text)
    if args.output:
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"oracle-{args.name}_{_slug(args.builtin or 'all')}.csv").write_text(text)
    bad = [r for r in reps if not r.holds]
    if bad:
        print(f"{len(bad)} of {len(reps)} checks violated", file=sys.stderr)
        return EXIT_ORACLE
    return EXIT_OK


def cmd_list_groups(args):
    print("groups:")
    for dsl, desc in groups.GROUP_FAMILIES.items():
        print(f"  {dsl:<20} {desc}")
    print("subgroups by family:")
    for fam, kinds in groups.SUBGROUP_COMPATIBILITY.items():
        print(f"  {fam:<14} {', '.join(kinds)}")
    print("subgroup syntax: all | axis:i | lamp | level:k | generated:g;h | coset:<element>:<subgroup>")
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="subperc", description="Relative percolation experiments on Cayley graphs.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="flat key=value config file")
        p.add_argument("-s", "--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (repeatable)")

    keys = "\n".join(f"  {k:<13} {doc}" for k, (_, _, doc) in SCHEMA.items())
    epilog = f"config keys:\n{keys}\n\n{COLUMN_HELP}"
    run = sub.add_parser("run", help="run an experiment", epilog=epilog,
                         formatter_class=argparse.RawDescriptionHelpFormatter)
    common(run)
    run.add_argument("-o", "--output", help="output directory (overrides config and $SUBPERC_OUTPUT)")
    run.add_argument("-w", "--workers", type=int, help="worker threads (overrides config)")
    run.set_defaults(fn=cmd_run)
    val = sub.add_parser("validate", help="check a config without running it", epilog=epilog,
                         formatter_class=argparse.RawDescriptionHelpFormatter)
    common(val)
    val.set_defaults(fn=cmd_validate)
    instances = "\n".join(f"  {n:<14} {', '.join(fn())}" for n, fn in ORACLE_BUILTINS.items())
    ora = sub.add_parser("oracle", help="run exact checks on builtin instances",
                         epilog=f"instances:\n{instances}\n  suite          every instance of every check",
                         formatter_class=argparse.RawDescriptionHelpFormatter)
    ora.add_argument("name", choices=ORACLE_NAMES)
    ora.add_argument("--builtin", metavar="INSTANCE", help="run only this instance")
    ora.add_argument("-o", "--output", help="also write the report CSV here")
    ora.set_defaults(fn=cmd_oracle)
    lg = sub.add_parser("list-groups", help="list group and subgroup DSLs")
    lg.set_defaults(fn=cmd_list_groups)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())

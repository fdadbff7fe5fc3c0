"""Exact checks by full enumeration on small systems.

Every configuration of a system with at most 20 edges (plus optional ghost
bits) is enumerated at once as a bit matrix.  Bernoulli weights are exact
rationals whenever every inclusion probability is rational; a Python float
``p`` is converted exactly, so only irrational ghost probabilities force the
compensated floating path.

Reports share one shape: ``name, instance, lhs, rhs, gap, verdict``.  For an
inequality ``lhs <= rhs`` (or ``>=``) the gap is the slack, for an identity it
is ``|lhs - rhs|``.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import integrate

from subperc import groups

MAX_EDGES = 20
TOL = 1e-12
QUAD_TOL = 1e-10


class OracleError(ValueError):
    pass


class NotIncreasing(OracleError):
    pass


class ForestDoesNotCompute(OracleError):
    pass


class QuadratureError(OracleError):
    pass


class KernelNotInvariant(OracleError):
    pass


class KernelSupportError(OracleError):
    pass


class PartitionError(OracleError):
    pass


def as_probability(p):
    """Exact rational for ints, Fractions, ``"a/b"`` strings and floats."""
    if isinstance(p, Fraction):
        q = p
    elif isinstance(p, (int, float, str)):
        q = Fraction(p)
    else:
        q = Fraction(float(p))
    if not 0 <= q <= 1:
        raise ValueError(f"probability must lie in [0, 1], got {p}")
    return q


# ---------------------------------------------------------------- systems


@dataclass(eq=False)
class FiniteSystem:
    """A small graph with a distinguished vertex set and an edge probability.

    ``vertices`` holds group elements when the graph is a Cayley graph of a
    finite group (``group`` is then the model); otherwise it is ``None`` and
    vertices are plain indices.
    """

    n_vertices: int
    edges: tuple
    A: tuple = ()
    p: object = Fraction(1, 2)
    name: str = ""
    group: object = None
    vertices: tuple = None

    def __post_init__(self):
        self.edges = tuple((min(u, v), max(u, v)) for u, v in self.edges)
        self.A = tuple(sorted(set(self.A)))
        self.p = as_probability(self.p)
        if len(self.edges) > MAX_EDGES:
            raise OracleError(f"{len(self.edges)} edges is beyond the enumeration limit {MAX_EDGES}")
        if len(set(self.edges)) != len(self.edges):
            raise OracleError("parallel edges are not supported")
        for u, v in self.edges:
            if u == v or not (0 <= u < self.n_vertices and 0 <= v < self.n_vertices):
                raise OracleError(f"bad edge ({u}, {v})")
        if any(not 0 <= a < self.n_vertices for a in self.A):
            raise OracleError("A must be a set of vertex indices")

    @property
    def n_edges(self):
        return len(self.edges)

    def index(self, v):
        if self.vertices is None:
            return int(v)
        return self.vertices.index(v)

    def with_p(self, p):
        return FiniteSystem(self.n_vertices, self.edges, self.A, p, self.name, self.group, self.vertices)

    @classmethod
    def cayley(cls, model, p=Fraction(1, 2), A=None, name=None):
        """Full Cayley graph of a finite group; ``A`` is a set of elements."""
        ball = groups.build_ball(model, model.order)
        verts = tuple(ball.vertices)
        A_idx = () if A is None else tuple(verts.index(a) for a in A)
        edges = tuple(tuple(int(x) for x in e) for e in ball.edges)
        return cls(len(verts), edges, A_idx, p, name or model.name, model, verts)


def path_system(n, A=None, p=Fraction(1, 2)):
    return FiniteSystem(n, [(i, i + 1) for i in range(n - 1)], A or (), p, f"path{n}")


def cycle_system(n, A=None, p=Fraction(1, 2)):
    return FiniteSystem(n, [(i, (i + 1) % n) for i in range(n)], A or (), p, f"cycle{n}")


def random_system(seed, max_edges=10, max_vertices=7):
    """Random connected simple graph with a random nonempty ``A`` and a
    dyadic ``p``: a random recursive tree plus extra random edges."""
    rng = np.random.default_rng([seed, 0x5EED])
    n = int(rng.integers(3, min(max_vertices, max_edges + 1) + 1))
    tree = {(int(rng.integers(v)), v) for v in range(1, n)}
    rest = [(u, v) for u in range(n) for v in range(u + 1, n) if (u, v) not in tree]
    extra = int(rng.integers(0, min(max_edges - (n - 1), len(rest)) + 1))
    pick = rng.choice(len(rest), size=extra, replace=False) if extra else []
    edges = sorted(tree | {rest[i] for i in pick})
    k = int(rng.integers(1, min(n, 4) + 1))
    A = sorted(int(a) for a in rng.choice(n, size=k, replace=False))
    p = Fraction(int(rng.integers(1, 16)), 16)
    return FiniteSystem(n, edges, A, p, f"random{seed}")


# ---------------------------------------------------------------- enumeration


def all_components(n, edges):
    """Cluster labels for every edge configuration: ``labels[c, v]`` is the
    smallest vertex of ``v``'s cluster in configuration ``c`` (bit ``e`` of
    ``c`` is edge ``e``)."""
    E = len(edges)
    C = 1 << E
    lab = np.tile(np.arange(n, dtype=np.int8 if n < 127 else np.int32), (C, 1))
    if E == 0:
        return lab
    bits = _bit_matrix(C, E)
    changed = True
    while changed:
        changed = False
        for e, (u, v) in enumerate(edges):
            rows = bits[:, e]
            lu, lv = lab[rows, u], lab[rows, v]
            if (lu != lv).any():
                changed = True
                m = np.minimum(lu, lv)
                lab[rows, u] = m
                lab[rows, v] = m
        if changed:
            # propagate to every vertex carrying a stale label
            lab = np.take_along_axis(lab, lab.astype(np.intp), axis=1)
    return lab


def _bit_matrix(C, k):
    idx = np.arange(C, dtype=np.int64)
    return ((idx[:, None] >> np.arange(k)) & 1).astype(bool)


class Enumeration:
    """All joint outcomes of the edges and optional ghost bits of a system.

    Variables ``0..E-1`` are the edges (open with probability ``p``), then one
    ghost bit per vertex of ``ghosts`` (included with probability ``q``).
    """

    def __init__(self, system, ghosts=(), q=None):
        self.system = system
        self.E = system.n_edges
        self.ghosts = tuple(ghosts)
        self.G = len(self.ghosts)
        if self.G and q is None:
            raise OracleError("ghost bits need an inclusion probability")
        self.n_vars = self.E + self.G
        self.C = 1 << self.n_vars
        self.bits = _bit_matrix(self.C, self.n_vars)
        self.edge_index = np.arange(self.C, dtype=np.int64) & ((1 << self.E) - 1)
        self.k_edges = self.bits[:, : self.E].sum(axis=1)
        self.k_ghost = self.bits[:, self.E :].sum(axis=1)
        self.p = system.p
        self.q = q
        self.exact = not self.G or isinstance(q, Fraction)
        self._labels = None
        self._weights = None

    @property
    def labels(self):
        if self._labels is None:
            base = all_components(self.system.n_vertices, self.system.edges)
            self._labels = base[self.edge_index] if self.G else base
        return self._labels

    @property
    def edge_bits(self):
        return self.bits[:, : self.E]

    @property
    def ghost_bits(self):
        return self.bits[:, self.E :]

    def var_probability(self, i):
        return self.p if i < self.E else self.q

    def _key_weights(self):
        if self._weights is None:
            p, q = self.p, self.q
            E, G = self.E, self.G
            if self.exact:
                one = Fraction(1)
                w = [[p**k * (one - p) ** (E - k) * (q**j * (one - q) ** (G - j) if G else one)
                      for j in range(G + 1)] for k in range(E + 1)]
            else:
                pf, qf = float(p), float(q)
                w = [[pf**k * (1 - pf) ** (E - k) * qf**j * (1 - qf) ** (G - j)
                      for j in range(G + 1)] for k in range(E + 1)]
            self._weights = w
        return self._weights

    def expect(self, values):
        """Exact (or compensated) expectation of a per-configuration array."""
        values = np.broadcast_to(np.asarray(values), (self.C,))
        w = self._key_weights()
        key = self.k_edges * (self.G + 1) + self.k_ghost
        if values.dtype.kind in "biu":
            # integer sums per (open edges, open ghosts) class, then weights
            acc = np.zeros((self.E + 1) * (self.G + 1), np.int64)
            np.add.at(acc, key, values.astype(np.int64))
            if self.exact:
                total = Fraction(0)
                for kk, s in enumerate(acc):
                    if s:
                        total += int(s) * w[kk // (self.G + 1)][kk % (self.G + 1)]
                return total
            terms = [float(s) * w[kk // (self.G + 1)][kk % (self.G + 1)] for kk, s in enumerate(acc) if s]
            return math.fsum(terms)
        wf = np.array([[float(x) for x in row] for row in w]).ravel()[key]
        return math.fsum((wf * values.astype(float)).tolist())

    def cov(self, f, g):
        f = np.asarray(f).astype(np.int64) if np.asarray(f).dtype == bool else np.asarray(f)
        g = np.asarray(g).astype(np.int64) if np.asarray(g).dtype == bool else np.asarray(g)
        return self.expect(f * g) - self.expect(f) * self.expect(g)

    def check_increasing(self, values, name="f"):
        """Raise unless ``values`` is increasing in every variable."""
        values = np.asarray(values)
        idx = np.arange(self.C, dtype=np.int64)
        for i in range(self.n_vars):
            lo = idx[~self.bits[:, i]]
            if (values[lo] > values[lo | (1 << i)]).any():
                raise NotIncreasing(f"{name} decreases when variable {i} is opened")

    def cluster_hits(self, x, verts):
        """``|K_x & verts|`` per configuration."""
        verts = list(verts)
        if not verts:
            return np.zeros(self.C, np.int64)
        lab = self.labels
        return (lab[:, verts] == lab[:, [x]]).sum(axis=1)


# ---------------------------------------------------------------- events


@dataclass(frozen=True)
class Event:
    name: str
    fn: object = field(compare=False)

    def __call__(self, enum):
        return np.broadcast_to(np.asarray(self.fn(enum)), (enum.C,)).astype(np.int64)


def edge_event(e):
    return Event(f"edge{e}", lambda en: en.bits[:, e])


def connection_event(x, y):
    return Event(f"conn{x}-{y}", lambda en: en.labels[:, x] == en.labels[:, y])


def all_open_event(edges):
    edges = list(edges)
    return Event("all" + "-".join(map(str, edges)), lambda en: en.bits[:, edges].all(axis=1))


def intersection_event(x, verts, n):
    """``|K_x & verts| >= n``."""
    verts = tuple(verts)
    return Event(f"K{x}&A>={n}", lambda en: en.cluster_hits(x, verts) >= n)


def ghost_hit_event(x, A):
    """Some ghost-marked vertex of ``A`` lies in ``K_x``; ghosts must be ``A``."""
    A = tuple(A)

    def fn(en):
        if en.ghosts != A:
            raise OracleError("ghost_hit_event needs the ghost field on exactly A")
        lab = en.labels
        return ((lab[:, list(A)] == lab[:, [x]]) & en.ghost_bits).any(axis=1)

    return Event(f"ghost-in-K{x}", fn)


def constant_event(c=1):
    return Event(f"const{c}", lambda en: np.full(en.C, int(c)))


# ---------------------------------------------------------------- decision trees


def _incidence(system):
    # incident edges per vertex in canonical (endpoint pair) order
    inc = [[] for _ in range(system.n_vertices)]
    for e in sorted(range(system.n_edges), key=lambda e: system.edges[e]):
        u, v = system.edges[e]
        inc[u].append(e)
        inc[v].append(e)
    return inc


def _explore(system, inc, root, open_mask, target=None):
    """FIFO exploration of ``root``'s cluster; returns queried edges in order."""
    seen = {root}
    queue = [root]
    queried = []
    done = set()
    head = 0
    while head < len(queue):
        if target is not None and target in seen:
            break
        v = queue[head]
        head += 1
        for e in inc[v]:
            if e in done:
                continue
            done.add(e)
            queried.append(e)
            if open_mask >> e & 1:
                a, b = system.edges[e]
                w = b if a == v else a
                if w not in seen:
                    seen.add(w)
                    queue.append(w)
    return queried


class DecisionTree:
    """Adaptive query rule on the variables of an :class:`Enumeration`.

    ``kind="explore"`` explores the open cluster of ``root`` edge by edge:
    FIFO over discovered vertices, each vertex's incident edges in canonical
    endpoint order.  With ``gated`` the tree first queries the ghost bit of
    ``root`` and stops if it is 0.  With ``target`` it stops once the target
    is reached.  ``kind="fixed"`` queries ``variables`` in order.
    """

    def __init__(self, kind, root=None, gated=False, target=None, variables=()):
        self.kind = kind
        self.root = root
        self.gated = gated
        self.target = target
        self.variables = tuple(variables)

    def __repr__(self):
        if self.kind == "fixed":
            return f"fixed{self.variables}"
        return f"explore({self.root}{', gated' if self.gated else ''})"

    def revealed(self, enum):
        """Boolean ``(C, n_vars)`` matrix of queried variables."""
        out = np.zeros((enum.C, enum.n_vars), bool)
        if self.kind == "fixed":
            out[:, list(self.variables)] = True
            return out
        system = enum.system
        inc = _incidence(system)
        per_edge_cfg = np.zeros((1 << enum.E, enum.n_vars), bool)
        for c in range(1 << enum.E):
            q = _explore(system, inc, self.root, c, self.target)
            per_edge_cfg[c, q] = True
        out[:] = per_edge_cfg[enum.edge_index]
        if self.gated:
            g = enum.E + enum.ghosts.index(self.root)
            closed = ~enum.bits[:, g]
            out[closed] = False
            out[:, g] = True
        return out


@dataclass
class DecisionForest:
    trees: list
    ghosts: tuple = ()
    q: object = None
    name: str = ""

    def revealed(self, enum):
        out = np.zeros((enum.C, enum.n_vars), bool)
        for t in self.trees:
            out |= t.revealed(enum)
        return out

    def enumeration(self, system):
        return Enumeration(system, self.ghosts, self.q)

    def check_computes(self, enum, g, revealed=None):
        """Raise unless ``g`` is a function of the revealed variables."""
        rev = self.revealed(enum) if revealed is None else revealed
        g = np.asarray(g)
        weights = (1 << np.arange(enum.n_vars, dtype=np.int64))
        key_mask = (rev * weights).sum(axis=1)
        key_vals = ((rev & enum.bits) * weights).sum(axis=1)
        seen = {}
        for km, kv, val in zip(key_mask.tolist(), key_vals.tolist(), g.tolist()):
            prev = seen.setdefault((km, kv), val)
            if prev != val:
                raise ForestDoesNotCompute(f"{self.name or 'forest'} does not determine g")

    def check_ghost_rule(self, enum):
        """Each gated tree reveals ``{u}`` or ``{u} + E(K_u)``, per outcome."""
        system = enum.system
        ends = np.array(system.edges, dtype=np.intp).reshape(-1, 2)
        lab = enum.labels
        for t in self.trees:
            if not t.gated:
                continue
            rev = t.revealed(enum)
            g = enum.E + enum.ghosts.index(t.root)
            in_k = lab == lab[:, [t.root]]
            touches = in_k[:, ends[:, 0]] | in_k[:, ends[:, 1]] if len(ends) else np.zeros((enum.C, 0), bool)
            expect = np.zeros_like(rev)
            expect[:, g] = True
            on = enum.bits[:, g]
            expect[on, : enum.E] = touches[on]
            if not (rev == expect).all():
                raise OracleError(f"revealment of {t!r} breaks the ghost rule")
        return True


def ghost_forest(system, n, A=None):
    """Gated cluster explorations from every vertex of ``A`` with ghost
    inclusion probability ``1 - exp(-1/n)``."""
    A = system.A if A is None else tuple(sorted(A))
    q = ghost_probability(n)
    trees = [DecisionTree("explore", root=u, gated=True) for u in A]
    return DecisionForest(trees, A, q, f"ghost(n={n})")


def ghost_probability(n):
    if n < 1:
        raise ValueError("n must be >= 1")
    return -math.expm1(-1.0 / n)


def exploration_forest(root, target=None):
    return DecisionForest([DecisionTree("explore", root=root, target=target)], name=f"explore{root}")


def fixed_forest(variables):
    return DecisionForest([DecisionTree("fixed", variables=variables)], name=f"fixed{tuple(variables)}")


# ---------------------------------------------------------------- reports


@dataclass(frozen=True)
class OracleReport:
    name: str
    instance: str
    lhs: object
    rhs: object
    gap: object
    holds: bool

    @property
    def verdict(self):
        return "holds" if self.holds else "VIOLATED"

    def row(self):
        return (self.name, self.instance, _fmt(self.lhs), _fmt(self.rhs), _fmt(self.gap), self.verdict)


REPORT_COLUMNS = ("check", "instance", "lhs", "rhs", "gap", "verdict")


def _fmt(x):
    return repr(float(x))


def _le(a, b, exact):
    return a <= b if exact else a <= b + TOL


# ---------------------------------------------------------------- checks


def osss_check(system, f, g, forest):
    """``|Cov(f, g)| <= sum_v delta_v Cov(f, v)`` over all edge and ghost
    variables, exactly."""
    enum = forest.enumeration(system)
    fv, gv = f(enum), g(enum)
    enum.check_increasing(fv, f.name)
    rev = forest.revealed(enum)
    forest.check_computes(enum, gv, rev)
    lhs = abs(enum.cov(fv, gv))
    rhs = 0
    for i in range(enum.n_vars):
        delta = enum.expect(rev[:, i])
        if delta:
            rhs += delta * enum.cov(fv, enum.bits[:, i])
    return OracleReport(
        "osss", f"{system.name}:{f.name}|{g.name}|{forest.name}", lhs, rhs, rhs - lhs,
        bool(_le(lhs, rhs, enum.exact)),
    )


def _bernstein_counts(enum, values):
    c = np.zeros(enum.E + 1, dtype=object)
    acc = np.zeros(enum.E + 1, np.int64)
    np.add.at(acc, enum.k_edges, np.asarray(values, np.int64))
    for k in range(enum.E + 1):
        c[k] = int(acc[k])
    return c


def _poly_value(counts, p, E):
    return sum(c * p**k * (1 - p) ** (E - k) for k, c in enumerate(counts) if c)


def _poly_derivative(counts, p, E):
    out = 0
    for k, c in enumerate(counts):
        if not c:
            continue
        if k:
            out += c * k * p ** (k - 1) * (1 - p) ** (E - k)
        if E - k:
            out -= c * (E - k) * p**k * (1 - p) ** (E - k - 1)
    return out


def russo_check(system, f):
    """Exact ``d/dp P_p(f)`` against ``sum_e Cov(f, w(e)) / (p (1 - p))``."""
    p = system.p
    if p in (0, 1):
        raise OracleError("russo_check needs 0 < p < 1")
    enum = Enumeration(system)
    fv = f(enum)
    enum.check_increasing(fv, f.name)
    deriv = _poly_derivative(_bernstein_counts(enum, fv), p, enum.E)
    total = sum((enum.cov(fv, enum.bits[:, e]) for e in range(enum.E)), Fraction(0))
    rhs = total / (p * (1 - p))
    gap = abs(deriv - rhs)
    return OracleReport("russo", f"{system.name}:{f.name}", deriv, rhs, gap, bool(gap <= TOL))


def tail_polynomials(system, n, A=None):
    """Bernstein counts of ``P_p(|K_u & A| >= m)`` for every vertex ``u`` and
    ``m = 1..n``; shape ``(V, n, E + 1)``."""
    A = system.A if A is None else tuple(A)
    enum = Enumeration(system)
    out = np.zeros((system.n_vertices, n, enum.E + 1), dtype=object)
    for u in range(system.n_vertices):
        hits = enum.cluster_hits(u, A)
        for m in range(1, n + 1):
            out[u, m - 1] = _bernstein_counts(enum, hits >= m)
    return out


def _q_float(poly, p, E):
    # sup over u of P_p(|K_u & A| >= m), for every m
    k = np.arange(E + 1)
    basis = p**k * (1 - p) ** (E - k)
    vals = poly.astype(float) @ basis
    return vals.max(axis=0)


def _q_exact(poly, p, E):
    return [max(_poly_value(poly[u, m], p, E) for u in range(poly.shape[0])) for m in range(poly.shape[1])]


def integral_inequality_check(system, n, p1, p2, A=None):
    """``log Q_{p2}(n)/Q_{p1}(n) >= 2 int_{p1}^{p2} [n(1 - 1/e)/sum_m Q_p(m) - 1] dp``."""
    p1, p2 = as_probability(p1), as_probability(p2)
    if not p1 <= p2:
        raise ValueError("need p1 <= p2")
    if n < 1:
        raise ValueError("n must be >= 1")
    E = system.n_edges
    poly = tail_polynomials(system, n, A)
    q1 = _q_exact(poly, p1, E)[n - 1]
    q2 = _q_exact(poly, p2, E)[n - 1]
    if q1 <= 0:
        raise OracleError(f"Q_p1(n) = 0 on {system.name}; the left side is undefined")
    lhs = math.log(q2 / q1) if q2 != q1 else 0.0
    c = n * (1 - math.exp(-1))

    def integrand(p):
        return c / _q_float(poly, p, E).sum() - 1.0

    if p1 == p2:
        rhs, err = 0.0, 0.0
    else:
        val, err = integrate.quad(integrand, float(p1), float(p2), epsabs=1e-13, epsrel=1e-12, limit=200)
        rhs = 2.0 * val
        if err > QUAD_TOL:
            raise QuadratureError(f"quadrature error {err:.3g} above {QUAD_TOL}")
    return OracleReport(
        "integral", f"{system.name}:n={n}:p=[{float(p1)},{float(p2)}]", lhs, rhs, lhs - rhs,
        bool(lhs >= rhs - TOL),
    )


def _closure(model, elements):
    members = set(elements)
    members.add(model.identity)
    changed = True
    while changed:
        changed = False
        for a in list(members):
            for b in list(members):
                c = model.multiply(a, b)
                if c not in members:
                    members.add(c)
                    changed = True
    return members


def kgh_identity_check(system, H, gamma, n):
    """``P(|K_o & gH| >= n) + P(|K_o & H g^-1| >= n) <= 2 P(|K_o & H| >= n)``."""
    model = system.group
    if model is None:
        raise OracleError("kgh_identity_check needs a Cayley graph of a finite group")
    if isinstance(H, groups.SubgroupSpec):
        H = [v for v in system.vertices if H.contains(v)]
    H = set(H)
    if _closure(model, H) != H:
        raise OracleError("H is not a subgroup")
    ginv = model.invert(gamma)
    left = {model.multiply(gamma, h) for h in H}
    right = {model.multiply(h, ginv) for h in H}
    enum = Enumeration(system)
    o = system.index(model.identity)

    def tail(S):
        return enum.expect(enum.cluster_hits(o, [system.index(v) for v in S]) >= n)

    lhs = tail(left) + tail(right)
    rhs = 2 * tail(H)
    return OracleReport(
        "kgh", f"{system.name}:|H|={len(H)}:g={model.format(gamma)}:n={n}:p={system.p}",
        lhs, rhs, rhs - lhs, bool(lhs <= rhs),
    )


def _edge_permutation(system, perm):
    index = {e: i for i, e in enumerate(system.edges)}
    out = np.empty(system.n_edges, np.int64)
    for i, (u, v) in enumerate(system.edges):
        a, b = perm[u], perm[v]
        key = (min(a, b), max(a, b))
        if key not in index:
            raise OracleError("vertex permutation is not a graph automorphism")
        out[i] = index[key]
    return out


def _config_permutation(enum, perm):
    sigma = _edge_permutation(enum.system, perm)
    eb = enum.edge_bits.astype(np.int64)
    img = (eb << sigma[None, :]).sum(axis=1)
    if enum.G:
        raise OracleError("automorphism checks run without ghost bits")
    return img


def check_kernel_invariance(enum, kernel, perm, verts):
    """``f(w, x, y) == f(pi w, pi x, pi y)`` for every configuration and pair."""
    cperm = _config_permutation(enum, perm)
    for x in verts:
        for y in verts:
            a = np.broadcast_to(np.asarray(kernel(enum, x, y)), (enum.C,))
            b = np.broadcast_to(np.asarray(kernel(enum, perm[x], perm[y])), (enum.C,))
            if not np.array_equal(a, b[cperm]):
                raise KernelNotInvariant(f"kernel changes under the automorphism at ({x}, {y})")


def _kernel_sum(enum, kernel, pairs):
    total = None
    for x, y in pairs:
        v = enum.expect(np.broadcast_to(np.asarray(kernel(enum, x, y)), (enum.C,)))
        total = v if total is None else total + v
    return 0 if total is None else total


def mtp_check(system, A, root_rule, kernel, automorphisms=None, instance=""):
    """Mass transport on a finite rooted system, exactly.

    ``root_rule="uniform"``: root uniform on the finite set ``A``.
    ``root_rule="identity"``: ``system`` is a finite Cayley graph, ``A`` a
    subgroup given as elements, and the root is the identity; the checked
    automorphisms default to left multiplication by each element of ``A``.
    ``kernel(enum, x, y)`` returns per-configuration masses.
    """
    enum = Enumeration(system)
    if root_rule == "uniform":
        idx = sorted(set(int(a) for a in A))
        if not idx:
            raise OracleError("A must be nonempty")
        roots = idx
        weight = Fraction(1, len(idx))
    elif root_rule == "identity":
        model = system.group
        if model is None:
            raise OracleError("the identity root rule needs a finite Cayley graph")
        A = set(A)
        if _closure(model, A) != A:
            raise OracleError("A is not a subgroup")
        idx = sorted(system.index(a) for a in A)
        roots = [system.index(model.identity)]
        weight = Fraction(1)
        if automorphisms is None:
            automorphisms = [
                [system.index(model.multiply(h, v)) for v in system.vertices] for h in sorted(A)
            ]
    else:
        raise OracleError(f"unknown root rule {root_rule!r}")
    for perm in automorphisms or ():
        check_kernel_invariance(enum, kernel, perm, idx)
    lhs = weight * _kernel_sum(enum, kernel, [(r, v) for r in roots for v in idx])
    rhs = weight * _kernel_sum(enum, kernel, [(v, r) for r in roots for v in idx])
    gap = abs(lhs - rhs)
    return OracleReport("mtp", instance or f"{system.name}:{root_rule}", lhs, rhs, gap, bool(gap <= TOL))


def relative_position_count(d, up, down):
    """Vertices at relative position ``(up, down)`` from a fixed vertex of the
    oriented ``d``-regular tree: ``up`` steps toward the end, then ``down``
    steps away from it without backtracking."""
    b = d - 1
    if up == 0:
        return b**down
    if down == 0:
        return 1
    return (b - 1) * b ** (down - 1)


def modular_weight(d, up, down):
    """``Delta(o, x)`` for ``x`` at relative position ``(up, down)``; the level
    of ``x`` minus that of ``o`` is ``up - down``."""
    return Fraction(d - 1) ** (up - down)


def tilted_mtp_check(d, r, kernel, instance=""):
    """``sum_x f(o, x) = sum_x f(x, o) Delta(o, x)`` on the oriented tree.

    ``kernel(up, down)`` is the mass from a vertex to the vertex at relative
    position ``(up, down)``; it must vanish when ``up + down > r``.  Both sides
    are finite level sums.
    """
    if d < 2:
        raise ValueError("d must be >= 2")
    for s in range(r + 1, 2 * r + 3):
        for up in range(s + 1):
            if kernel(up, s - up):
                raise KernelSupportError(f"kernel is nonzero at displacement {s} > {r}")
    lhs = 0
    rhs = 0
    for s in range(r + 1):
        for up in range(s + 1):
            down = s - up
            n = relative_position_count(d, up, down)
            if not n:
                continue
            lhs += n * _as_exact(kernel(up, down))
            rhs += n * _as_exact(kernel(down, up)) * modular_weight(d, up, down)
    gap = abs(lhs - rhs)
    return OracleReport("tilted-mtp", instance or f"tree{d}:r={r}", lhs, rhs, gap, bool(gap <= TOL))


def _as_exact(x):
    if isinstance(x, (int, Fraction, bool, np.integer)):
        return Fraction(int(x)) if not isinstance(x, Fraction) else x
    return Fraction(float(x))


# ---------------------------------------------------------------- spanning trees


@dataclass
class NestedSpanningTree:
    """Forests ``T_1 <= T_2 <= ...`` built over refined cells ``Lambda_i``."""

    n_vertices: int
    levels: list
    cells: list

    @property
    def edges(self):
        return self.levels[-1]

    def check(self):
        for i, (T, lab) in enumerate(zip(self.levels, self.cells)):
            if i and not self.levels[i - 1] <= T:
                raise PartitionError(f"T_{i} is not contained in T_{i + 1}")
            sizes = np.bincount(lab)
            if len(T) != int((sizes - 1).sum()):
                raise PartitionError(f"T_{i + 1} has the wrong number of edges")
            for u, v in T:
                if lab[u] != lab[v]:
                    raise PartitionError(f"T_{i + 1} joins two cells")
        return True


def _graph_edges(graph):
    if isinstance(graph, groups.BallGraph):
        return graph.n_vertices, [tuple(int(x) for x in e) for e in graph.edges]
    if isinstance(graph, FiniteSystem):
        return graph.n_vertices, list(graph.edges)
    n, edges = graph
    return int(n), [(int(u), int(v)) for u, v in edges]


def _as_labels(n, partition):
    if len(partition) == n and all(np.isscalar(x) for x in partition):
        lab = np.asarray(partition, np.int64)
    else:
        lab = np.full(n, -1, np.int64)
        for i, cell in enumerate(partition):
            for v in cell:
                if lab[v] >= 0:
                    raise PartitionError(f"vertex {v} sits in two cells")
                lab[v] = i
        if (lab < 0).any():
            raise PartitionError("partition does not cover every vertex")
    _, lab = np.unique(lab, return_inverse=True)
    return lab


def _connected_refinement(n, edges, lab):
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v in edges:
        if lab[u] == lab[v]:
            a, b = find(u), find(v)
            if a != b:
                parent[max(a, b)] = min(a, b)
    roots = np.array([find(v) for v in range(n)])
    _, out = np.unique(roots, return_inverse=True)
    return out


def _wilson(nodes, adj, rng):
    """Uniform spanning tree of a connected multigraph by loop-erased walks.

    ``adj[u]`` lists ``(edge_id, neighbour)`` pairs, one per parallel edge.
    """
    in_tree = {nodes[0]}
    chosen = []
    for start in nodes[1:]:
        nxt = {}
        u = start
        while u not in in_tree:
            e, w = adj[u][int(rng.integers(len(adj[u])))]
            nxt[u] = (e, w)
            u = w
        u = start
        while u not in in_tree:
            in_tree.add(u)
            e, w = nxt[u]
            chosen.append(e)
            u = w
    return chosen


def spanning_tree_from_partitions(graph, partitions, seed):
    """Nested uniform spanning forests over a coarsening partition sequence.

    Each partition is refined to the connected pieces of its cells.  At level
    ``i`` every refined cell gets a uniform spanning tree among those that
    contain the level ``i - 1`` trees inside it, sampled as a uniform spanning
    tree of the multigraph where those smaller cells are contracted.
    """
    n, edges = _graph_edges(graph)
    if not partitions:
        raise PartitionError("empty partition sequence")
    raw = [_as_labels(n, P) for P in partitions]
    for i in range(len(raw) - 1):
        for c in np.unique(raw[i]):
            if len(np.unique(raw[i + 1][raw[i] == c])) != 1:
                raise PartitionError(f"partition {i + 2} does not coarsen partition {i + 1}")
    if len(np.unique(raw[-1])) != 1:
        raise PartitionError("the last partition must be a single cell")
    cells = [_connected_refinement(n, edges, lab) for lab in raw]
    if cells[-1].max() != 0:
        raise PartitionError("the graph is disconnected, so the final cell cannot be spanned")
    rng = np.random.default_rng([int(seed) & ((1 << 63) - 1), 0x7EE])
    prev = np.arange(n)
    tree = set()
    levels = []
    for lab in cells:
        for c in range(int(lab.max()) + 1):
            members = np.flatnonzero(lab == c)
            nodes = sorted(set(int(prev[v]) for v in members))
            if len(nodes) < 2:
                continue
            adj = {u: [] for u in nodes}
            for e, (u, v) in enumerate(edges):
                if lab[u] == c and lab[v] == c and prev[u] != prev[v]:
                    adj[int(prev[u])].append((e, int(prev[v])))
                    adj[int(prev[v])].append((e, int(prev[u])))
            for e in _wilson(nodes, adj, rng):
                tree.add(edges[e])
        levels.append(frozenset(tree))
        prev = lab
    return NestedSpanningTree(n, levels, cells)


__all__ = [
    "DecisionForest",
    "DecisionTree",
    "Enumeration",
    "FiniteSystem",
    "NestedSpanningTree",
    "OracleReport",
    "connection_event",
    "ghost_forest",
    "integral_inequality_check",
    "kgh_identity_check",
    "mtp_check",
    "osss_check",
    "russo_check",
    "spanning_tree_from_partitions",
    "tilted_mtp_check",
]

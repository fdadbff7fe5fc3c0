"""Group models, Cayley balls and subgroup specs.

Elements are plain hashable normal forms:

* ``lattice:d``  -- tuple of ``d`` ints.
* ``free:k``     -- freely reduced tuple of nonzero ints, ``+i``/``-i`` being
  the ``i``-th generator and its inverse.
* ``finite:S3`` / ``finite:D4`` -- permutations in one-line notation.
* ``wreath:z2:free:k`` -- ``(lamps, position)`` with ``lamps`` a sorted tuple
  of base elements.
* ``tree-oriented:d`` -- ``(k, w)``: climb ``k`` levels towards the fixed end,
  then descend along child labels ``w``.  Not a group; it only provides the
  graph structure and the level function.

Every other module reaches vertices through this one.
"""

import contextlib
import functools
import math
from dataclasses import dataclass, field

import numpy as np

from subperc import hashing, kernels

DEFAULT_MAX_VERTICES = 2_000_000
_budget = [DEFAULT_MAX_VERTICES]


@contextlib.contextmanager
def vertex_budget(n):
    """Cap every ball built inside the block at ``n`` vertices."""
    old = _budget[0]
    _budget[0] = int(n)
    try:
        yield
    finally:
        _budget[0] = old


class MalformedElement(ValueError):
    pass


class BallTooLarge(MemoryError):
    """Raised when a ball would exceed the configured vertex budget."""


class SubgroupIncompatible(ValueError):
    pass


class VertexOutsideBall(KeyError):
    pass


class GraphModel:
    """Vertex-transitive graph with canonical vertex names."""

    family = ""
    is_tree = False

    def __init__(self, name, identity, degree):
        self.name = name
        self.identity = identity
        self.degree = degree

    def __repr__(self):
        return f"<{type(self).__name__} {self.name}>"

    def neighbors(self, v):
        raise NotImplementedError

    def word_length(self, v):
        raise NotImplementedError

    def sort_key(self, v):
        return v

    def fingerprint(self, v):
        return hashing.fingerprint(v)

    def validate(self, v):
        pass

    def format(self, v):
        return repr(v)

    def parse(self, text):
        raise NotImplementedError


class GroupModel(GraphModel):
    """A finitely generated group with a symmetric generating list."""

    def __init__(self, name, identity, generators):
        super().__init__(name, identity, len(generators))
        gens = list(generators)
        for s in list(gens):
            inv = self.invert(s)
            if inv not in gens:
                gens.append(inv)
        if identity in gens:
            raise ValueError(f"{name}: identity in generating set gives loops")
        if len(set(gens)) != len(gens):
            raise ValueError(f"{name}: repeated generator gives multi-edges")
        self.generators = tuple(gens)
        self.involution = tuple(self.invert(s) == s for s in gens)
        self.degree = len(gens)

    def multiply(self, a, b):
        raise NotImplementedError

    def invert(self, a):
        raise NotImplementedError

    def canonicalize(self, raw):
        return raw

    def neighbors(self, v):
        return [self.multiply(v, s) for s in self.generators]

    def product(self, *elements):
        out = self.identity
        for e in elements:
            out = self.multiply(out, e)
        return out


class LatticeGroup(GroupModel):
    family = "lattice"

    def __init__(self, d):
        if d < 1:
            raise ValueError("lattice dimension must be >= 1")
        self.d = d
        gens = []
        for i in range(d):
            unit = tuple(1 if j == i else 0 for j in range(d))
            gens.append(unit)
            gens.append(tuple(-x for x in unit))
        super().__init__(f"lattice:{d}", (0,) * d, gens)
        self.is_tree = d == 1

    def multiply(self, a, b):
        return tuple(x + y for x, y in zip(a, b))

    def invert(self, a):
        return tuple(-x for x in a)

    def word_length(self, v):
        return sum(abs(x) for x in v)

    def validate(self, v):
        if not isinstance(v, tuple) or len(v) != self.d or not all(isinstance(x, int) for x in v):
            raise MalformedElement(f"not an element of Z^{self.d}: {v!r}")

    def format(self, v):
        return ",".join(str(x) for x in v)

    def parse(self, text):
        text = text.strip().strip("()")
        if text == "e":
            return self.identity
        try:
            v = tuple(int(x) for x in text.split(","))
        except ValueError as exc:
            raise MalformedElement(text) from exc
        self.validate(v)
        return v


def _free_reduce(symbols):
    out = []
    for s in symbols:
        if out and out[-1] == -s:
            out.pop()
        else:
            out.append(s)
    return tuple(out)


class FreeGroup(GroupModel):
    family = "free"
    is_tree = True

    def __init__(self, k):
        if k < 1:
            raise ValueError("free group rank must be >= 1")
        if k > 26:
            raise ValueError("free group rank capped at 26 letters")
        self.k = k
        gens = []
        for i in range(1, k + 1):
            gens.extend([(i,), (-i,)])
        super().__init__(f"free:{k}", (), gens)

    def multiply(self, a, b):
        out = list(a)
        for s in b:
            if out and out[-1] == -s:
                out.pop()
            else:
                out.append(s)
        return tuple(out)

    def invert(self, a):
        return tuple(-s for s in reversed(a))

    def canonicalize(self, raw):
        return _free_reduce(raw)

    def word_length(self, v):
        return len(v)

    def fingerprint(self, v):
        # letter-by-letter so the jitted tree kernels can extend it in place
        return hashing.word_fingerprint(v)

    def sort_key(self, v):
        # shortlex over the alphabet a < A < b < B ...
        return tuple(2 * abs(s) + (s < 0) for s in v)

    def validate(self, v):
        if not isinstance(v, tuple) or any(
            not isinstance(s, int) or s == 0 or abs(s) > self.k for s in v
        ):
            raise MalformedElement(f"not a word in F_{self.k}: {v!r}")
        if _free_reduce(v) != v:
            raise MalformedElement(f"word not freely reduced: {v!r}")

    def format(self, v):
        if not v:
            return "e"
        return "".join(chr(96 + s) if s > 0 else chr(64 - s) for s in v)

    def parse(self, text):
        text = text.strip()
        if text in ("", "e"):
            return ()
        syms = []
        for ch in text:
            if "a" <= ch <= "z":
                syms.append(ord(ch) - 96)
            elif "A" <= ch <= "Z":
                syms.append(-(ord(ch) - 64))
            else:
                raise MalformedElement(f"bad letter {ch!r} in {text!r}")
        if any(abs(s) > self.k for s in syms):
            raise MalformedElement(f"letter outside F_{self.k}: {text!r}")
        return _free_reduce(syms)


def _compose(a, b):
    # apply b first, then a
    return tuple(a[i] for i in b)


_FINITE_TABLES = {
    # transpositions (01), (12), (02)
    "S3": ((0, 1, 2), [(1, 0, 2), (0, 2, 1), (2, 1, 0)]),
    # rotation, its inverse, and the reflection fixing corners 0 and 2
    "D4": ((0, 1, 2, 3), [(1, 2, 3, 0), (3, 0, 1, 2), (0, 3, 2, 1)]),
}


class FiniteGroup(GroupModel):
    family = "finite"

    def __init__(self, label):
        if label not in _FINITE_TABLES:
            raise ValueError(f"unknown finite group {label!r}; known: {sorted(_FINITE_TABLES)}")
        self.label = label
        identity, gens = _FINITE_TABLES[label]
        super().__init__(f"finite:{label}", identity, gens)
        # BFS once for the word metric and the element list
        lengths = {identity: 0}
        frontier = [identity]
        while frontier:
            nxt = []
            for g in frontier:
                for s in self.generators:
                    h = self.multiply(g, s)
                    if h not in lengths:
                        lengths[h] = lengths[g] + 1
                        nxt.append(h)
            frontier = nxt
        self._lengths = lengths
        self.elements = tuple(sorted(lengths, key=lambda g: (lengths[g], g)))
        self.order = len(self.elements)

    def multiply(self, a, b):
        return _compose(a, b)

    def invert(self, a):
        out = [0] * len(a)
        for i, x in enumerate(a):
            out[x] = i
        return tuple(out)

    def word_length(self, v):
        return self._lengths[v]

    def validate(self, v):
        if v not in self._lengths:
            raise MalformedElement(f"not an element of {self.label}: {v!r}")

    def format(self, v):
        return "".join(str(x) for x in v)

    def parse(self, text):
        text = text.strip()
        if text == "e":
            return self.identity
        v = tuple(int(c) for c in text if c.isdigit())
        self.validate(v)
        return v


class WreathZ2(GroupModel):
    """Lamplighter group Z_2 wr base, with move and flip-at-position generators."""

    family = "wreath"

    def __init__(self, base):
        if not isinstance(base, GroupModel):
            raise TypeError("wreath base must be a group model")
        self.base = base
        gens = [((), s) for s in base.generators]
        gens.append(((base.identity,), base.identity))
        super().__init__(f"wreath:z2:{base.name}", ((), base.identity), gens)

    def _lamps(self, items):
        return tuple(sorted(items, key=self.base.sort_key))

    def multiply(self, a, b):
        (f, x), (g, y) = a, b
        lamps = set(f)
        for z in g:
            lamps ^= {self.base.multiply(x, z)}
        return (self._lamps(lamps), self.base.multiply(x, y))

    def invert(self, a):
        f, x = a
        xi = self.base.invert(x)
        return (self._lamps(self.base.multiply(xi, z) for z in f), xi)

    def canonicalize(self, raw):
        f, x = raw
        counts = {}
        for z in f:
            z = self.base.canonicalize(z)
            counts[z] = counts.get(z, 0) ^ 1
        return (self._lamps(z for z, c in counts.items() if c), self.base.canonicalize(x))

    def word_length(self, v):
        if not isinstance(self.base, FreeGroup):
            raise NotImplementedError("closed-form word length needs a free base")
        f, x = v
        # shortest tour from e that visits every lit lamp and ends at x: twice the
        # spanning subtree of {e} u supp(f) u {x}, minus the final return leg
        nodes = {()}
        for w in (*f, x):
            for i in range(1, len(w) + 1):
                nodes.add(w[:i])
        return 2 * (len(nodes) - 1) - len(x) + len(f)

    def sort_key(self, v):
        f, x = v
        return (len(f), tuple(self.base.sort_key(z) for z in f), self.base.sort_key(x))

    def validate(self, v):
        try:
            f, x = v
        except (TypeError, ValueError) as exc:
            raise MalformedElement(f"wreath element must be (lamps, position): {v!r}") from exc
        for z in (*f, x):
            self.base.validate(z)
        if self._lamps(set(f)) != tuple(f):
            raise MalformedElement(f"lamp set not canonical: {f!r}")

    def format(self, v):
        f, x = v
        return "{" + ",".join(self.base.format(z) for z in f) + "}@" + self.base.format(x)

    def parse(self, text):
        text = text.strip()
        if text == "e":
            return self.identity
        if not text.startswith("{") or "}@" not in text:
            raise MalformedElement(f"wreath element must look like {{w,...}}@w: {text!r}")
        inner, pos = text[1:].split("}@", 1)
        lamps = [self.base.parse(t) for t in inner.split(",") if t.strip()]
        return self.canonicalize((lamps, self.base.parse(pos)))


class OrientedTree(GraphModel):
    """d-regular tree with a distinguished end; vertices carry a level.

    ``(k, w)`` is reached from the origin by ``k`` parent steps and then the
    child labels in ``w``; child ``0`` of the ``k``-th ancestor is the
    ``(k-1)``-th ancestor, so canonical forms never start ``w`` with ``0``
    when ``k > 0``.  Parent steps raise the level by one.
    """

    family = "tree-oriented"
    is_tree = True

    def __init__(self, d):
        if d < 3:
            raise ValueError("oriented tree needs degree >= 3")
        self.d = d
        super().__init__(f"tree-oriented:{d}", (0, ()), d)

    def parent(self, v):
        k, w = v
        if w:
            return (k, w[:-1])
        return (k + 1, ())

    def child(self, v, c):
        k, w = v
        if not w and k > 0 and c == 0:
            return (k - 1, ())
        return (k, w + (c,))

    def neighbors(self, v):
        return [self.parent(v)] + [self.child(v, c) for c in range(self.d - 1)]

    def level(self, v):
        return v[0] - len(v[1])

    def fingerprint(self, v):
        k, w = v
        return hashing.word_fingerprint(w, hashing.level_anchor(k))

    def word_length(self, v):
        return v[0] + len(v[1])

    def relative_position(self, x, y):
        """``(up, down)`` steps of the geodesic from ``x`` to ``y``."""
        top = max(x[0], y[0])
        px, py = self._path_from(x, top), self._path_from(y, top)
        i = 0
        while i < min(len(px), len(py)) and px[i] == py[i]:
            i += 1
        return len(px) - i, len(py) - i

    def _path_from(self, v, top):
        # child labels from the ancestor a_top of the origin down to v
        k, w = v
        return (0,) * (top - k) + w

    def validate(self, v):
        try:
            k, w = v
        except (TypeError, ValueError) as exc:
            raise MalformedElement(f"tree vertex must be (k, w): {v!r}") from exc
        if k < 0 or any(not 0 <= c < self.d - 1 for c in w):
            raise MalformedElement(f"bad tree vertex {v!r}")
        if k > 0 and w and w[0] == 0:
            raise MalformedElement(f"tree vertex not canonical: {v!r}")

    def format(self, v):
        k, w = v
        return f"{k}:" + "".join(str(c) for c in w)

    def parse(self, text):
        text = text.strip()
        if text == "e":
            return self.identity
        try:
            k, w = text.split(":")
            v = (int(k), tuple(int(c) for c in w))
        except ValueError as exc:
            raise MalformedElement(text) from exc
        if v[0] > 0 and v[1] and v[1][0] == 0:
            v = (v[0] - 1, v[1][1:])
            return self.parse(self.format(v))
        self.validate(v)
        return v


@functools.lru_cache(maxsize=None)
def parse_group(dsl):
    """Build a model from ``lattice:d``, ``free:k``, ``wreath:z2:free:k``,
    ``tree-oriented:d`` or ``finite:<S3|D4>``."""
    parts = dsl.strip().split(":")
    try:
        if parts[0] == "lattice" and len(parts) == 2:
            return LatticeGroup(int(parts[1]))
        if parts[0] == "free" and len(parts) == 2:
            return FreeGroup(int(parts[1]))
        if parts[0] == "tree-oriented" and len(parts) == 2:
            return OrientedTree(int(parts[1]))
        if parts[0] == "finite" and len(parts) == 2:
            return FiniteGroup(parts[1])
        if parts[0] == "wreath" and len(parts) >= 3 and parts[1] == "z2":
            base = parse_group(":".join(parts[2:]))
            if not isinstance(base, FreeGroup):
                raise ValueError("wreath base must be free:k")
            return WreathZ2(base)
    except ValueError as exc:
        raise ValueError(f"bad group spec {dsl!r}: {exc}") from exc
    raise ValueError(f"bad group spec {dsl!r}")


GROUP_FAMILIES = {
    "lattice:d": "integer lattice Z^d with unit-vector generators",
    "free:k": "free group on k letters (a..z, inverses A..Z)",
    "wreath:z2:free:k": "lamplighter Z_2 wr F_k, moves plus flip-at-position",
    "tree-oriented:d": "d-regular tree with a fixed end and level function",
    "finite:S3": "symmetric group S_3 with its three transpositions",
    "finite:D4": "dihedral group of order 8 with rotation and one reflection",
}

SUBGROUP_COMPATIBILITY = {
    "lattice": ("all", "axis", "coset"),
    "free": ("all", "axis", "coset"),
    "wreath": ("all", "lamp", "coset"),
    "finite": ("all", "generated", "coset"),
    "tree-oriented": ("all", "level"),
}


@dataclass(frozen=True)
class SubgroupSpec:
    """Distinguished vertex set, with generators when it is a (coset of a) subgroup.

    A coset ``gH`` keeps ``H``'s generators and records ``g`` as
    ``base_point``; walks start there and stay inside the coset.
    """

    label: str
    membership: object = field(compare=False)
    generators: tuple = ()
    base_point: object = None
    level: object = None

    def contains(self, v):
        return bool(self.membership(v))

    __contains__ = contains


def parse_subgroup(dsl, model, lamp_radius=1):
    """Parse ``all``, ``lamp``, ``axis:i``, ``level:k``, ``generated:g;h`` or
    ``coset:<element>:<subgroup>`` against ``model``."""
    dsl = dsl.strip()
    kind = dsl.split(":", 1)[0]
    allowed = SUBGROUP_COMPATIBILITY[model.family]
    if kind not in allowed:
        raise SubgroupIncompatible(
            f"subgroup {dsl!r} not available for {model.name}; allowed: {', '.join(allowed)}"
        )
    if kind == "all":
        gens = getattr(model, "generators", ())
        base = model.identity if isinstance(model, GroupModel) else None
        return SubgroupSpec("all", lambda v: True, gens, base)
    if kind == "lamp":
        base = model.base
        flips = [((g,), base.identity) for g in build_ball(base, lamp_radius).vertices]
        e = base.identity
        return SubgroupSpec(f"lamp{lamp_radius}", lambda v: v[1] == e, tuple(flips), model.identity)
    if kind == "axis":
        i = int(dsl.split(":")[1])
        if model.family == "lattice":
            if not 0 <= i < model.d:
                raise SubgroupIncompatible(f"axis {i} outside Z^{model.d}")
            gens = (model.generators[2 * i], model.generators[2 * i + 1])
            return SubgroupSpec(
                f"axis{i}",
                lambda v: all(x == 0 for j, x in enumerate(v) if j != i),
                gens,
                model.identity,
            )
        if not 0 <= i < model.k:
            raise SubgroupIncompatible(f"axis {i} outside F_{model.k}")
        letter = i + 1
        return SubgroupSpec(
            f"axis{i}", lambda v: all(abs(s) == letter for s in v), ((letter,), (-letter,)), ()
        )
    if kind == "level":
        lev = int(dsl.split(":")[1])
        return SubgroupSpec(f"level{lev}", lambda v: model.level(v) == lev, (), None, lev)
    if kind == "generated":
        gens = [model.parse(t) for t in dsl.split(":", 1)[1].split(";") if t.strip()]
        members = {model.identity}
        frontier = [model.identity]
        while frontier:
            nxt = []
            for g in frontier:
                for s in gens + [model.invert(s) for s in gens]:
                    h = model.multiply(g, s)
                    if h not in members:
                        members.add(h)
                        nxt.append(h)
            frontier = nxt
        sym = []
        for s in gens:
            for t in (s, model.invert(s)):
                if t not in sym and t != model.identity:
                    sym.append(t)
        label = "gen" + "-".join(model.format(s) for s in gens)
        frozen = frozenset(members)
        return SubgroupSpec(label, frozen.__contains__, tuple(sym), model.identity)
    # coset:<element>:<subgroup>
    try:
        _, elem_text, inner = dsl.split(":", 2)
    except ValueError as exc:
        raise ValueError(f"coset spec must be coset:<element>:<subgroup>: {dsl!r}") from exc
    inner_spec = parse_subgroup(inner, model, lamp_radius)
    gamma = model.parse(elem_text)
    gamma_inv = model.invert(gamma)
    return SubgroupSpec(
        f"coset{model.format(gamma)}-{inner_spec.label}",
        lambda v: inner_spec.contains(model.multiply(gamma_inv, v)),
        inner_spec.generators,
        gamma,
    )


def check_subgroup(model, spec, rng, samples=200, radius=3):
    """Spot-check identity membership and closure under the listed generators."""
    if spec.base_point is None:
        return True
    if not spec.contains(spec.base_point):
        raise AssertionError(f"{spec.label}: base point is not a member")
    if not spec.generators:
        return True
    x = spec.base_point
    for _ in range(samples):
        s = spec.generators[rng.integers(len(spec.generators))]
        x = model.multiply(x, s)
        if not spec.contains(x):
            raise AssertionError(f"{spec.label}: not closed under {model.format(s)}")
        if model.word_length(x) > radius + model.word_length(spec.base_point):
            x = spec.base_point
    return True


@dataclass(eq=False)
class BallGraph:
    """Truncated Cayley graph B_R(o) in flat numpy arrays.

    ``nbr[v, j]`` is the index of ``v * s_j`` (or ``-1`` past the boundary) and
    ``eid[v, j]`` the id of that edge.  Vertices are in BFS order with ties
    broken by the model's normal-form order, so ``build_ball(R)`` is a prefix
    of ``build_ball(R + 1)``.
    """

    model: GraphModel
    radius: int
    vertices: list
    index: dict
    dist: np.ndarray
    nbr: np.ndarray
    eid: np.ndarray
    edges: np.ndarray
    fingerprints: np.ndarray
    edge_keys: np.ndarray
    _masks: dict = field(default_factory=dict, repr=False)
    _steps: dict = field(default_factory=dict, repr=False)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def boundary(self):
        return self.dist == self.radius

    def interior(self, margin):
        return self.dist <= self.radius - margin

    def index_of(self, element):
        try:
            return self.index[element]
        except KeyError:
            raise VertexOutsideBall(
                f"{self.model.format(element)} is outside the ball of radius {self.radius}"
            ) from None

    def mask(self, spec):
        """Boolean membership array for ``spec``, cached by label."""
        m = self._masks.get(spec.label)
        if m is None:
            m = np.fromiter((spec.contains(v) for v in self.vertices), bool, len(self.vertices))
            self._masks[spec.label] = m
        return m

    def step_table(self, generators):
        """``table[v, j]`` = index of ``v * generators[j]`` or ``-1`` outside the ball."""
        key = tuple(generators)
        table = self._steps.get(key)
        if table is None:
            if key == getattr(self.model, "generators", None):
                table = self.nbr
            else:
                table = np.full((self.n_vertices, len(key)), -1, np.int32)
                mul = self.model.multiply
                for i, v in enumerate(self.vertices):
                    for j, s in enumerate(key):
                        table[i, j] = self.index.get(mul(v, s), -1)
            self._steps[key] = table
        return table


def build_ball(model, R, max_vertices=None):
    """BFS-complete ball of radius ``R`` around the identity.

    ``max_vertices`` defaults to the current :func:`vertex_budget`.
    """
    if R < 0:
        raise ValueError("radius must be >= 0")
    if max_vertices is None:
        max_vertices = _budget[0]
    identity = model.identity
    vertices = [identity]
    index = {identity: 0}
    dist = [0]
    adjacency = []
    frontier = [identity]
    for r in range(1, R + 1):
        new = set()
        for v in frontier:
            nbrs = model.neighbors(v)
            adjacency.append(nbrs)
            for w in nbrs:
                if w not in index:
                    new.add(w)
        layer = sorted(new, key=model.sort_key)
        if len(vertices) + len(layer) > max_vertices:
            raise BallTooLarge(
                f"ball of radius {R} in {model.name} exceeds {max_vertices} vertices"
            )
        for w in layer:
            index[w] = len(vertices)
            vertices.append(w)
            dist.append(r)
        frontier = layer
    for v in frontier:
        adjacency.append(model.neighbors(v))

    n, deg = len(vertices), model.degree
    nbr = np.full((n, deg), -1, np.int32)
    for i, nbrs in enumerate(adjacency):
        if len(set(nbrs)) != deg or vertices[i] in nbrs:
            raise ValueError(f"{model.name}: Cayley graph is not simple at {vertices[i]!r}")
        for j, w in enumerate(nbrs):
            nbr[i, j] = index.get(w, -1)

    src = np.repeat(np.arange(n, dtype=np.int64), deg)
    dst = nbr.ravel().astype(np.int64)
    keep = dst > src
    pair_code = np.unique(src[keep] * n + dst[keep])
    edges = np.stack([pair_code // n, pair_code % n], axis=1).astype(np.int32)
    lo, hi = np.minimum(src, dst), np.maximum(src, dst)
    valid = dst >= 0
    eid = np.full(n * deg, -1, np.int32)
    eid[valid] = np.searchsorted(pair_code, lo[valid] * n + hi[valid])
    eid = eid.reshape(n, deg)

    fps = np.array([model.fingerprint(v) for v in vertices], dtype=np.uint64)
    keys = kernels.edge_keys(fps[edges[:, 0]], fps[edges[:, 1]])
    return BallGraph(
        model=model,
        radius=R,
        vertices=vertices,
        index=index,
        dist=np.asarray(dist, dtype=np.int32),
        nbr=nbr,
        eid=eid,
        edges=edges,
        fingerprints=fps,
        edge_keys=keys,
    )


def cached_ball(model, R, max_vertices=None):
    return _cached_ball(model, R, _budget[0] if max_vertices is None else max_vertices)


@functools.lru_cache(maxsize=32)
def _cached_ball(model, R, max_vertices):
    return build_ball(model, R, max_vertices)


def subgroup_ball_count(ball, spec):
    """``|B_n(o) & H|`` for ``n = 0..R``."""
    m = ball.mask(spec)
    per_radius = np.bincount(ball.dist[m], minlength=ball.radius + 1)
    return np.cumsum(per_radius)


def growth_rate(counts, start=1):
    """Exponential growth rate of a count sequence from a log-linear fit."""
    n = np.arange(len(counts))[start:]
    y = np.log(np.asarray(counts, dtype=float)[start:])
    slope = np.polyfit(n, y, 1)[0]
    return math.exp(slope)


class LazyGraph:
    """On-demand view of the full Cayley graph, optionally filtered.

    Neighbour lists and edge keys are memoised, so repeated explorations around
    the same region (one per seed) only pay for hashing once.  ``keep`` may
    reject vertices; ``radius`` is a shortcut for ``word_length <= radius``.
    """

    def __init__(self, model, radius=None, keep=None, memo_limit=3_000_000):
        self.model = model
        self.radius = radius
        self.keep = keep
        self.memo_limit = memo_limit
        self._adj = {}
        self._fp = {}

    def _fingerprint(self, v):
        fp = self._fp.get(v)
        if fp is None:
            fp = self.model.fingerprint(v)
            self._fp[v] = fp
        return fp

    def dist(self, v):
        return self.model.word_length(v)

    def allowed(self, v):
        if self.radius is not None and self.model.word_length(v) > self.radius:
            return False
        return self.keep is None or self.keep(v)

    def adjacent(self, v):
        """``[(w, edge_key), ...]`` over allowed neighbours of ``v``."""
        out = self._adj.get(v)
        if out is None:
            if len(self._adj) > self.memo_limit:
                self._adj.clear()
                self._fp.clear()
            fv = self._fingerprint(v)
            out = tuple(
                (w, hashing.edge_key(fv, self._fingerprint(w)))
                for w in self.model.neighbors(v)
                if self.allowed(w)
            )
            self._adj[v] = out
        return out


@dataclass(eq=False)
class TreeWindow:
    """Part of the oriented tree seen from the origin's ``height``-th ancestor.

    Holds every vertex that descends from the ancestor ``a_height`` and sits at
    level ``>= 0``; the origin is ``a_0``.  Vertices are stored in heap order
    from ``a_height`` (children of ``i`` are ``b*i + 1 .. b*i + b`` with
    ``b = d - 1``), so ``nbr``/``eid``/``edge_keys`` plug straight into the
    invasion kernel.  For clusters measured on level 0 the cut below level 0
    loses nothing: those vertices hang off level-0 vertices and lead nowhere
    else.
    """

    model: OrientedTree
    height: int
    level: np.ndarray
    nbr: np.ndarray
    eid: np.ndarray
    edge_keys: np.ndarray
    origin: int

    @property
    def n_vertices(self):
        return len(self.level)

    @property
    def radius(self):
        return self.height

    def vertex(self, i):
        i = int(i)
        b = self.model.d - 1
        labels = []
        while i > 0:
            labels.append((i - 1) % b)
            i = (i - 1) // b
        labels.reverse()
        t = 0
        while t < len(labels) and labels[t] == 0:
            t += 1
        if t == len(labels):
            return (self.height - t, ())
        return (self.height - t, tuple(labels[t:]))

    def index_of(self, v):
        k, w = v
        if k > self.height or self.model.level(v) < 0:
            raise VertexOutsideBall(f"{self.model.format(v)} is outside the window")
        b = self.model.d - 1
        i = 0
        for c in (0,) * (self.height - k) + tuple(w):
            i = b * i + 1 + c
        return i


def tree_window(model, height, max_vertices=None):
    """Build the :class:`TreeWindow` of the given height; the default cap
    is twice the current :func:`vertex_budget`."""
    if not isinstance(model, OrientedTree):
        raise TypeError("tree windows exist only for the oriented tree")
    b = model.d - 1
    n = sum(b**g for g in range(height + 1))
    if max_vertices is None:
        max_vertices = 2 * _budget[0]
    if n > max_vertices:
        raise BallTooLarge(f"tree window of height {height} has {n} vertices")
    level = np.empty(n, np.int32)
    fps = np.empty(n, np.uint64)
    fps[0] = hashing.level_anchor(height)
    level[0] = height
    start = 0
    for g in range(height):
        size = b**g
        nxt = start + size
        parents = np.arange(start, nxt)
        for c in range(b):
            kids = b * parents + 1 + c
            code = np.uint64(((c + hashing.LETTER_OFFSET) * hashing.LETTER_MULT) & hashing.MASK64)
            fps[kids] = kernels.mix64(fps[parents] ^ code)
            level[kids] = height - g - 1
        # child 0 of an ancestor is the next ancestor, named by its own anchor
        fps[b * start + 1] = hashing.level_anchor(height - g - 1)
        start = nxt
    nbr = np.full((n, b + 1), -1, np.int32)
    eid = np.full((n, b + 1), -1, np.int32)
    idx = np.arange(1, n)
    par = (idx - 1) // b
    nbr[idx, 0] = par
    eid[idx, 0] = idx - 1
    nbr[par, 1 + (idx - 1) % b] = idx
    eid[par, 1 + (idx - 1) % b] = idx - 1
    keys = kernels.edge_keys(fps[par], fps[idx])
    origin = sum(b**g for g in range(height))
    return TreeWindow(model, height, level, nbr, eid, keys, origin)

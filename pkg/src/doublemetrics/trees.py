"""Rooted trees, their boundaries, and metrics built from prefix maps.

Nodes are words (tuples of child indices); the root is ``()``. A ray of a
depth-``N`` truncation is a leaf word of length ``N``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations, product
from typing import Iterable, Sequence

import numpy as np

from .spaces import CrossMetric, FiniteMetricSpace, ScaleFamily, min_plus
from .rays import RayConfig, RayFamily, best_targets, default_bound, estimate_all

#: smallest stratum constant, so that every cross edge ``2 C`` is at least 1
C_MIN = 0.5


def parse_word(w) -> tuple:
    if isinstance(w, str):
        if "." in w:
            return tuple(int(c) for c in w.split("."))
        return tuple(int(c) for c in w)
    return tuple(int(c) for c in w)


def word_label(w: Sequence[int]) -> str:
    if any(c > 9 for c in w):
        return ".".join(map(str, w))
    return "".join(map(str, w))


def common_prefix(a: Sequence[int], b: Sequence[int]) -> int:
    n = 0
    for x, y in zip(a, b):
        if x != y:
            break
        n += 1
    return n


def is_prefix(u: Sequence[int], w: Sequence[int]) -> bool:
    return len(u) <= len(w) and tuple(w[: len(u)]) == tuple(u)


class RootedTree:
    """Depth-``N`` truncation of a rooted tree without dead ends."""

    def __init__(self, depth: int, children: dict):
        self.depth = int(depth)
        self._children = {}
        nodes = [()]
        frontier = [()]
        for level in range(self.depth):
            nxt = []
            for w in frontier:
                k = int(children.get(w, 0))
                if k < 1:
                    raise ValueError(f"dead end at node {word_label(w)!r} (depth {level})")
                self._children[w] = k
                nxt.extend(w + (c,) for c in range(k))
            nodes.extend(nxt)
            frontier = nxt
        for w in frontier:
            self._children[w] = 0
        self.nodes = nodes
        self._index = {w: i for i, w in enumerate(nodes)}
        self.leaves = frontier
        self._dist = None

    @classmethod
    def regular(cls, branching: int, depth: int) -> "RootedTree":
        return cls.from_rule(depth, lambda w: branching)

    @classmethod
    def half_line(cls, depth: int) -> "RootedTree":
        return cls.from_rule(depth, lambda w: 1)

    @classmethod
    def two_ray_line(cls, depth: int) -> "RootedTree":
        """The real line seen from 0: two rays glued at the root."""
        return cls.from_rule(depth, lambda w: 2 if not w else 1)

    @classmethod
    def from_rule(cls, depth: int, rule) -> "RootedTree":
        children, frontier = {}, [()]
        for _ in range(depth):
            nxt = []
            for w in frontier:
                children[w] = rule(w)
                nxt.extend(w + (c,) for c in range(children[w]))
            frontier = nxt
        return cls(depth, children)

    @classmethod
    def from_levels(cls, depth: int, levels: Sequence[Sequence[int]]) -> "RootedTree":
        """``levels[l][i]`` is the child count of the ``i``-th node at depth ``l``."""
        if len(levels) < depth:
            raise ValueError(f"need child counts for {depth} levels, got {len(levels)}")
        children, frontier = {}, [()]
        for lvl in range(depth):
            if len(levels[lvl]) != len(frontier):
                raise ValueError(f"level {lvl} lists {len(levels[lvl])} nodes, tree has {len(frontier)}")
            nxt = []
            for w, k in zip(frontier, levels[lvl]):
                children[w] = int(k)
                nxt.extend(w + (c,) for c in range(int(k)))
            frontier = nxt
        return cls(depth, children)

    def levels(self) -> list[list[int]]:
        out = []
        for lvl in range(self.depth):
            out.append([self._children[w] for w in self.nodes if len(w) == lvl])
        return out

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, w) -> bool:
        return tuple(w) in self._index

    def index(self, w) -> int:
        return self._index[tuple(w)]

    def children(self, w) -> int:
        return self._children[tuple(w)]

    def first_extension(self, w, length: int) -> tuple:
        """``w`` followed by first children down to ``length`` (or cut to it)."""
        w = tuple(w)
        if len(w) >= length:
            return w[:length]
        if w not in self:
            raise KeyError(f"{word_label(w)!r} is not a node")
        return w + (0,) * (min(length, self.depth) - len(w))

    @property
    def dist(self) -> np.ndarray:
        if self._dist is None:
            depth = np.array([len(w) for w in self.nodes])
            # anc[i, l] = index of the depth-l ancestor of node i, -1 if shallower
            anc = np.full((len(self.nodes), self.depth + 1), -1)
            for i, w in enumerate(self.nodes):
                for lvl in range(len(w) + 1):
                    anc[i, lvl] = self._index[w[:lvl]]
            meet = np.zeros((len(self.nodes),) * 2, dtype=int)
            for lvl in range(1, self.depth + 1):
                col = anc[:, lvl]
                meet += (col[:, None] == col[None, :]) & (col[:, None] >= 0)
            self._dist = (depth[:, None] + depth[None, :] - 2 * meet).astype(float)
        return self._dist

    def space(self) -> FiniteMetricSpace:
        return FiniteMetricSpace([word_label(w) for w in self.nodes], self.dist, 0)

    def rays(self) -> RayFamily:
        return RayFamily(
            self.leaves,
            {r: {R: self._index[r[:R]] for R in range(self.depth + 1)} for r in self.leaves},
        )

    def subtrees_match(self, u, v) -> bool:
        """Labelled isomorphism of the subtrees below ``u`` and ``v`` as far as
        both are inside the truncation."""
        u, v = tuple(u), tuple(v)
        if u not in self or v not in self:
            return False
        stack = [()]
        while stack:
            w = stack.pop()
            a, b = u + w, v + w
            if len(a) >= self.depth or len(b) >= self.depth:
                continue
            if self._children[a] != self._children[b]:
                return False
            stack.extend(w + (c,) for c in range(self._children[a]))
        return True

    def to_dict(self) -> dict:
        return {"depth": self.depth, "children": self.levels()}


def boundary_distance(a, b) -> float:
    """``exp(-|common prefix|)``; identical truncated rays give the upper
    bound ``exp(-N)``."""
    a, b = tuple(a), tuple(b)
    if len(a) != len(b):
        raise ValueError("boundary points come from different truncations")
    return math.exp(-common_prefix(a, b))


@dataclass(frozen=True)
class PrefixPair:
    u: tuple
    v: tuple
    C: float

    def __post_init__(self):
        object.__setattr__(self, "u", parse_word(self.u))
        object.__setattr__(self, "v", parse_word(self.v))
        object.__setattr__(self, "C", float(self.C))


@dataclass(frozen=True)
class PrefixMap:
    """A boundary map sending ``u_i w`` to ``v_i w`` with constant ``C_i``.

    Pairs with smaller ``C`` form lower strata; on the union of cylinders with
    ``C <= c`` the boundary map is bi-Lipschitz with constant ``e^c``.
    """

    pairs: tuple = ()

    def __post_init__(self):
        pairs = tuple(p if isinstance(p, PrefixPair) else PrefixPair(*p) for p in self.pairs)
        object.__setattr__(self, "pairs", pairs)

    @classmethod
    def from_triples(cls, triples: Iterable) -> "PrefixMap":
        return cls(tuple(PrefixPair(*t) for t in triples))

    def problems(self, tree: RootedTree) -> list[str]:
        out = []
        for i, p in enumerate(self.pairs):
            if p.u not in tree or p.v not in tree:
                out.append(f"pair {i}: prefix not in tree")
                continue
            if max(len(p.u), len(p.v)) >= tree.depth:
                out.append(f"pair {i}: prefix reaches truncation depth {tree.depth}")
            if not tree.subtrees_match(p.u, p.v):
                out.append(f"pair {i}: subtrees below {word_label(p.u)!r} and {word_label(p.v)!r} differ")
            if p.C < C_MIN:
                out.append(f"pair {i}: C={p.C} below {C_MIN}")
            if p.C < abs(len(p.v) - len(p.u)):
                out.append(f"pair {i}: C={p.C} below depth change {abs(len(p.v) - len(p.u))}")
        for (i, p), (j, q) in combinations(enumerate(self.pairs), 2):
            if is_prefix(p.u, q.u) or is_prefix(q.u, p.u):
                out.append(f"pairs {i},{j}: domain cylinders overlap")
            if is_prefix(p.v, q.v) or is_prefix(q.v, p.v):
                out.append(f"pairs {i},{j}: image cylinders overlap")
            shift = abs(common_prefix(p.v, q.v) - common_prefix(p.u, q.u))
            if shift > max(p.C, q.C):
                out.append(f"pairs {i},{j}: meet depth moves by {shift} > max C")
        return out

    def check(self, tree: RootedTree) -> "PrefixMap":
        errs = self.problems(tree)
        if errs:
            raise ValueError("; ".join(errs))
        return self

    def pair_of(self, ray) -> PrefixPair | None:
        for p in self.pairs:
            if is_prefix(p.u, ray):
                return p
        return None

    def image(self, tree: RootedTree, ray) -> tuple | None:
        p = self.pair_of(ray)
        if p is None:
            return None
        return tree.first_extension(p.v + tuple(ray[len(p.u):]), tree.depth)

    def boundary_map(self, tree: RootedTree) -> dict:
        """Leaf -> leaf action at the truncation depth."""
        out = {}
        for r in tree.leaves:
            t = self.image(tree, r)
            if t is not None:
                out[r] = t
        return out

    def levels(self) -> list[float]:
        return sorted({p.C for p in self.pairs})

    def transport(self, tree: RootedTree) -> dict:
        """Depth-preserving node map ``z -> (f(z), C)`` on every node lying on
        a ray of the domain. Each node uses the pair of smallest ``C`` through
        it (ties: smallest ``u``)."""
        out = {}
        for p in sorted(self.pairs, key=lambda p: (p.C, p.u)):
            for z in tree.nodes:
                if z in out:
                    continue
                if is_prefix(p.u, z):
                    target = p.v + z[len(p.u):]
                elif is_prefix(z, p.u):
                    target = p.v
                else:
                    continue
                out[z] = (tree.first_extension(target, tree.depth)[: len(z)], p.C)
        return out

    def to_dict(self) -> dict:
        return {"pairs": [{"u": word_label(p.u), "v": word_label(p.v), "C": p.C} for p in self.pairs]}

    @classmethod
    def from_dict(cls, data: dict) -> "PrefixMap":
        return cls(tuple(PrefixPair(d["u"], d["v"], float(d["C"])) for d in data["pairs"]))


@dataclass(frozen=True, eq=False)
class TreeCrossMetric(CrossMetric):
    tree: RootedTree | None = field(default=None, repr=False)
    source: PrefixMap | None = None


def chi_tree(tree: RootedTree, F: PrefixMap, gluing: float = 1.0) -> TreeCrossMetric:
    """Metric on the doubled tree: both copies plus an edge ``z -- f(z)'`` of
    length ``2 C`` for every transported node, and a root edge of length
    ``gluing``. The cross block is ``min`` over single crossings."""
    F.check(tree)
    d = tree.dist
    edges = [(0, 0, float(gluing))]
    for z, (fz, C) in F.transport(tree).items():
        edges.append((tree.index(z), tree.index(fz), 2 * C))
    src = np.array([e[0] for e in edges])
    dst = np.array([e[1] for e in edges])
    length = np.array([e[2] for e in edges])
    cross = min_plus(d[:, src] + length[None, :], d[dst, :])
    return TreeCrossMetric(tree.space(), cross, 1.0, tree, F)


def transport_distortion(tree: RootedTree, F: PrefixMap) -> list[dict]:
    """Worst ``|d(f x, f y) - d(x, y)|`` over each stratum ``C <= c``."""
    moved = F.transport(tree)
    d = tree.dist
    out = []
    for c in F.levels():
        zs = [z for z, (_, C) in moved.items() if C <= c]
        i = [tree.index(z) for z in zs]
        j = [tree.index(moved[z][0]) for z in zs]
        worst = float(np.abs(d[np.ix_(j, j)] - d[np.ix_(i, i)]).max()) if zs else 0.0
        out.append({"C": c, "nodes": len(zs), "max_distortion": worst, "bound": 2 * c, "ok": worst <= 2 * c + 1e-9})
    return out


@dataclass(frozen=True)
class RecoveredMap:
    """Boundary partial map read off a cross metric."""

    mapping: dict
    bounds: dict
    costs: dict
    estimates: dict = field(repr=False, default_factory=dict)

    def strata(self) -> list[tuple[int, frozenset]]:
        levels = {r: max(1, math.ceil(b - 1e-9)) for r, b in self.bounds.items()}
        if not levels:
            return []
        return [(m, frozenset(r for r, k in levels.items() if k <= m)) for m in range(1, max(levels.values()) + 1)]

    def to_dict(self) -> dict:
        return {
            "pairs": [[word_label(r), word_label(t)] for r, t in sorted(self.mapping.items())],
            "strata": [{"m": m, "rays": sorted(word_label(r) for r in A)} for m, A in self.strata()],
            "residuals": {word_label(r): c for r, c in sorted(self.costs.items())},
        }


def psi_tree(rho: CrossMetric, tree: RootedTree, config: RayConfig = RayConfig()) -> RecoveredMap:
    """Recover the boundary map of ``rho``: each ray with finite ``f_rho``
    goes to the ray it stays uniformly close to, depth for depth."""
    if len(rho.space) != len(tree):
        raise ValueError("cross metric does not live on this tree")
    fam = ScaleFamily.from_filtration(rho, range(1, tree.depth + 1))
    rays = tree.rays()
    est = estimate_all(fam, rays, config)
    finite = [r for r in tree.leaves if est[r].finite]
    limit = default_bound(est, config)
    # truncation leaves the true target up to 2C above the best worst case,
    # so admit everything within twice the ray's bound and let the deep end decide
    admit = {r: 2 * est[r].bound for r in finite}
    best = best_targets(rho, rays, finite, tree.leaves, admit=admit)
    mapping, bounds, costs = {}, {}, {}
    for r, (t, cost) in best.items():
        if cost > limit:
            continue
        mapping[r], bounds[r], costs[r] = t, est[r].bound, cost
    return RecoveredMap(mapping, bounds, costs, est)


def compose_maps(f: dict, g: dict) -> dict:
    """``f ∘ g`` on the leaves where it is defined."""
    return {r: f[t] for r, t in g.items() if t in f}


def rays_lemma_check(r1, r2, t1, t2, C: float) -> dict:
    """Meet depths of the source pair (``L``) and target pair (``M``) and
    whether ``|M - L| < C``."""
    L = common_prefix(r1, r2)
    M = common_prefix(t1, t2)
    diff = abs(M - L)
    ratio = boundary_distance(t1, t2) / boundary_distance(r1, r2)
    return {
        "L": L, "M": M, "diff": diff, "C": C, "ratio": ratio,
        "strict": diff < C, "within_tolerance": diff <= C + 1e-9,
    }


def all_prefix_maps(tree: RootedTree, max_len: int, max_pairs: int) -> list[PrefixMap]:
    """Every valid prefix map with prefixes of length ``<= max_len``, each
    pair using its smallest admissible ``C``."""
    words = [w for w in tree.nodes if len(w) <= max_len and len(w) < tree.depth]
    cands = [
        PrefixPair(u, v, max(C_MIN, abs(len(u) - len(v))))
        for u, v in product(words, words)
        if tree.subtrees_match(u, v)
    ]
    out = [PrefixMap(())]
    for k in range(1, max_pairs + 1):
        for combo in combinations(cands, k):
            F = PrefixMap(combo)
            if not F.problems(tree):
                out.append(F)
    return out


def corollary_check(depth: int = 6, max_len: int = 2) -> dict:
    """Realisable boundary maps on the half-line and the two-ray line.

    Returns, per tree, the set of distinct boundary maps of all small prefix
    maps and whether each one survives the metric round trip.
    """
    report = {}
    for name, tree, pairs in (
        ("half_line", RootedTree.half_line(depth), 1),
        ("two_ray_line", RootedTree.two_ray_line(depth), 2),
    ):
        maps = {}
        for F in all_prefix_maps(tree, max_len, pairs):
            key = tuple(sorted(F.boundary_map(tree).items()))
            maps.setdefault(key, F)
        roundtrip = {}
        for key, F in maps.items():
            got = psi_tree(chi_tree(tree, F), tree).mapping
            roundtrip[key] = got == dict(key)
        report[name] = {
            "tree": tree,
            "maps": sorted(maps),
            "count": len(maps),
            "roundtrip": roundtrip,
            "all_roundtrip": all(roundtrip.values()),
        }
    return report

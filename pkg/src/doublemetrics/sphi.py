"""The subsemigroup S_Φ of a finite inverse semigroup and its map onto PB(Φ).

Partial bijections compose like functions: ``(s * t)(x) = s(t(x))``, so
``s.star() * s`` is the identity on the domain of ``s``.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from itertools import combinations, permutations
from typing import Callable, Hashable, Iterable, Sequence


@dataclass(frozen=True, order=True)
class PartialBijection:
    """An injective partial map of ``{1..n}`` stored as sorted ``(x, s(x))`` pairs."""

    n: int
    pairs: tuple = ()

    def __post_init__(self):
        pairs = tuple(sorted((int(a), int(b)) for a, b in self.pairs))
        object.__setattr__(self, "pairs", pairs)
        dom = [a for a, _ in pairs]
        img = [b for _, b in pairs]
        if len(set(dom)) != len(dom) or len(set(img)) != len(img):
            raise ValueError(f"not a partial bijection: {pairs}")
        if any(not 1 <= x <= self.n for x in dom + img):
            raise ValueError(f"points outside 1..{self.n}: {pairs}")

    @classmethod
    def from_dict(cls, n: int, mapping: dict) -> "PartialBijection":
        return cls(n, tuple(mapping.items()))

    @classmethod
    def identity(cls, n: int, on: Iterable[int] | None = None) -> "PartialBijection":
        pts = range(1, n + 1) if on is None else on
        return cls(n, tuple((p, p) for p in pts))

    @property
    def mapping(self) -> dict:
        return dict(self.pairs)

    @property
    def domain(self) -> frozenset:
        return frozenset(a for a, _ in self.pairs)

    @property
    def image(self) -> frozenset:
        return frozenset(b for _, b in self.pairs)

    def __call__(self, x):
        return self.mapping[x]

    def __mul__(self, other: "PartialBijection") -> "PartialBijection":
        if self.n != other.n:
            raise ValueError("universe sizes differ")
        m = self.mapping
        return PartialBijection(self.n, tuple((a, m[b]) for a, b in other.pairs if b in m))

    def star(self) -> "PartialBijection":
        return PartialBijection(self.n, tuple((b, a) for a, b in self.pairs))

    def is_idempotent(self) -> bool:
        return all(a == b for a, b in self.pairs)

    def to_dict(self) -> dict:
        return {"n": self.n, "pairs": [list(p) for p in self.pairs]}


def all_partial_bijections(n: int) -> list[PartialBijection]:
    pts = range(1, n + 1)
    out = []
    for k in range(n + 1):
        for dom in combinations(pts, k):
            for img in combinations(pts, k):
                for perm in permutations(img):
                    out.append(PartialBijection(n, tuple(zip(dom, perm))))
    return sorted(out, key=lambda s: (len(s.pairs), s.pairs))


class FiniteInverseSemigroup:
    """A finite inverse semigroup with zero and one, given by its operations.

    Products are tabulated lazily and memoised by element index.
    """

    def __init__(self, elements: Sequence[Hashable], product: Callable, star: Callable, zero, one):
        self.elements = list(elements)
        self._index = {s: i for i, s in enumerate(self.elements)}
        if len(self._index) != len(self.elements):
            raise ValueError("duplicate elements")
        self._product = product
        self._star = star
        self.zero = zero
        self.one = one
        self._table: dict = {}
        for s in (zero, one):
            if s not in self._index:
                raise ValueError(f"{s!r} is not an element")

    def __len__(self) -> int:
        return len(self.elements)

    def __contains__(self, s) -> bool:
        return s in self._index

    def mul(self, *factors):
        out = factors[0]
        for f in factors[1:]:
            key = (self._index[out], self._index[f])
            if key not in self._table:
                p = self._product(out, f)
                if p not in self._index:
                    raise ValueError(f"product {p!r} leaves the semigroup")
                self._table[key] = p
            out = self._table[key]
        return out

    def star(self, s):
        return self._star(s)

    def idempotents(self) -> list:
        return [s for s in self.elements if self.mul(s, s) == s]

    def check_axioms(self) -> list[str]:
        """Failed inverse-semigroup laws (empty if none)."""
        problems = []
        for s in self.elements:
            t = self.star(s)
            if self.mul(s, t, s) != s or self.mul(t, s, t) != t:
                problems.append(f"pseudoinverse law fails for {s!r}")
        idem = self.idempotents()
        for e in idem:
            for f in idem:
                if self.mul(e, f) != self.mul(f, e):
                    problems.append(f"idempotents {e!r}, {f!r} do not commute")
        return problems

    def pseudoinverses(self, s) -> list:
        """Brute-force list of all ``t`` with ``sts = s`` and ``tst = t``."""
        return [t for t in self.elements if self.mul(s, t, s) == s and self.mul(t, s, t) == t]


MAX_PB_SIZE = 6


def pb_semigroup(n: int) -> FiniteInverseSemigroup:
    """The symmetric inverse monoid ``PB({1..n})``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if n > MAX_PB_SIZE:
        raise ValueError(f"PB(X_{n}) is too large to tabulate (n <= {MAX_PB_SIZE})")
    return FiniteInverseSemigroup(
        all_partial_bijections(n),
        lambda s, t: s * t,
        PartialBijection.star,
        PartialBijection(n),
        PartialBijection.identity(n),
    )


class PhiSet:
    """Mutually equivalent non-zero idempotents of ``S``.

    The equivalence witnesses (``s s* = e``, ``s* s = f``) are searched for
    eagerly, so a malformed family fails here.
    """

    def __init__(self, S: FiniteInverseSemigroup, members: Sequence):
        self.S = S
        self.members = list(members)
        if not self.members:
            raise ValueError("Phi must be non-empty")
        if len(set(self.members)) != len(self.members):
            raise ValueError("Phi has repeated members")
        for e in self.members:
            if e not in S or S.mul(e, e) != e:
                raise ValueError(f"{e!r} is not an idempotent of S")
            if e == S.zero:
                raise ValueError("Phi may not contain zero")
        self.witnesses = {}
        for i, e in enumerate(self.members):
            for j, f in enumerate(self.members[i + 1:], start=i + 1):
                w = next((s for s in S.elements
                          if S.mul(s, S.star(s)) == e and S.mul(S.star(s), s) == f), None)
                if w is None:
                    raise ValueError(f"idempotents {e!r} and {f!r} are not equivalent")
                self.witnesses[i, j] = w

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)


@dataclass(frozen=True)
class Membership:
    """Outcome of the S_Φ test. ``forward[i]`` is the index of the ``f`` found
    for ``members[i]`` (``None`` when ``e s* s = 0``); ``backward`` is the
    same for ``s*``."""

    member: bool
    forward: tuple
    backward: tuple
    reason: str = ""

    def __bool__(self) -> bool:
        return self.member


def _certificate(s, S: FiniteInverseSemigroup, phi: PhiSet):
    """``f`` indices for ``s`` in S(Φ), or a failure message."""
    ss, s_s = S.mul(s, S.star(s)), S.mul(S.star(s), s)
    cert = []
    for i, e in enumerate(phi):
        p = S.mul(e, s_s)
        if p == S.zero:
            cert.append(None)
            continue
        if p != e:
            return None, f"e{i} s*s is neither 0 nor e{i}"
        se = S.mul(s, e)
        found = [j for j, f in enumerate(phi) if S.mul(f, s) == se and S.mul(f, ss) == f]
        if not found:
            return None, f"no f in Phi with s e{i} = f s and f s s* = f"
        if len(found) > 1:
            raise AssertionError(f"f is not unique for e{i}: {found}")
        cert.append(found[0])
    return tuple(cert), ""


def is_in_sphi(s, S: FiniteInverseSemigroup, phi: PhiSet) -> Membership:
    fwd, why = _certificate(s, S, phi)
    if fwd is None:
        return Membership(False, (), (), why)
    bwd, why = _certificate(S.star(s), S, phi)
    if bwd is None:
        return Membership(False, fwd, (), "star: " + why)
    return Membership(True, fwd, bwd)


class NotInSPhiError(ValueError):
    pass


def alpha(s, S: FiniteInverseSemigroup, phi: PhiSet, membership: Membership | None = None) -> PartialBijection:
    """The partial bijection of Φ induced by ``s``; Φ is numbered ``1..|Φ|``."""
    m = is_in_sphi(s, S, phi) if membership is None else membership
    if not m:
        raise NotInSPhiError(m.reason or f"{s!r} is not in S_Phi")
    return PartialBijection(len(phi), tuple((i + 1, f + 1) for i, f in enumerate(m.forward) if f is not None))


@dataclass(frozen=True)
class SPhiEnumeration:
    elements: tuple
    images: tuple
    certificates: tuple

    @property
    def classes(self) -> dict:
        groups = defaultdict(list)
        for s, a in zip(self.elements, self.images):
            groups[a].append(s)
        return dict(groups)

    def image_of(self, s) -> PartialBijection:
        return self.images[self.elements.index(s)]


def enumerate_sphi(S: FiniteInverseSemigroup, phi: PhiSet) -> SPhiEnumeration:
    elems, images, certs = [], [], []
    for s in S.elements:
        m = is_in_sphi(s, S, phi)
        if m:
            elems.append(s)
            images.append(alpha(s, S, phi, m))
            certs.append(m)
    return SPhiEnumeration(tuple(elems), tuple(images), tuple(certs))


def block_idempotents(n: int, blocks: Iterable[Iterable[int]]) -> list[PartialBijection]:
    return [PartialBijection.identity(n, b) for b in blocks]

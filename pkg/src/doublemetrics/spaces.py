"""Finite pointed metric spaces and compatible metrics on their doubles.

A compatible metric on ``X ⊔ X`` agrees with ``d_X`` on both copies, so it is
fully described by its cross block ``cross[i, j] = rho(x_i, x_j')``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

#: relative tolerance used for every metric inequality
RTOL = 1e-9


def _tol(values) -> np.ndarray:
    return RTOL * np.maximum(1.0, np.abs(values))


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def min_plus(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Tropical product ``out[i, j] = min_k a[i, k] + b[k, j]``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"shape mismatch {a.shape} x {b.shape}")
    out = np.full((a.shape[0], b.shape[1]), np.inf)
    for k in range(a.shape[1]):
        np.minimum(out, a[:, k, None] + b[None, k, :], out=out)
    return out


@dataclass(frozen=True)
class Violation:
    """One failed axiom together with the indices that witness it."""

    axiom: str
    witness: tuple
    lhs: float
    rhs: float

    def __post_init__(self):
        object.__setattr__(self, "lhs", float(self.lhs))
        object.__setattr__(self, "rhs", float(self.rhs))

    def __str__(self) -> str:
        return f"{self.axiom} at {self.witness}: {self.lhs:g} vs {self.rhs:g}"


class InvalidMetricError(ValueError):
    """Raised by the validators; ``violations`` holds the full report."""

    def __init__(self, violations: Sequence[Violation]):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations)
        super().__init__(f"{len(self.violations)} violated axiom(s): {lines}")


def _triangle_witness(d: np.ndarray):
    dtol = _tol(d)
    for j in range(len(d)):
        bad = d - (d[:, j, None] + d[None, j, :]) > dtol
        if bad.any():
            i, k = np.argwhere(bad)[0]
            return (int(i), j, int(k)), float(d[i, k]), float(d[i, j] + d[j, k])
    return None


def check_space(dist) -> list[Violation]:
    """Every violated metric axiom of ``dist`` (one witness per axiom)."""
    d = np.asarray(dist, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError(f"distance matrix must be square, got shape {d.shape}")
    if not np.all(np.isfinite(d)):
        raise ValueError("distance matrix has non-finite entries")
    out = []
    asym = np.abs(d - d.T) > _tol(d)
    if asym.any():
        i, j = np.argwhere(asym)[0]
        out.append(Violation("symmetry", (int(i), int(j)), d[i, j], d[j, i]))
    diag = np.flatnonzero(np.abs(np.diag(d)) > RTOL)
    if diag.size:
        i = int(diag[0])
        out.append(Violation("zero diagonal", (i,), d[i, i], 0.0))
    off = ~np.eye(len(d), dtype=bool)
    nonpos = off & (d <= 0)
    if nonpos.any():
        i, j = np.argwhere(nonpos)[0]
        out.append(Violation("positivity", (int(i), int(j)), d[i, j], 0.0))
    tri = _triangle_witness(d)
    if tri is not None:
        out.append(Violation("triangle", *tri))
    return out


@dataclass(frozen=True, eq=False)
class FiniteMetricSpace:
    """A finite pointed metric space given by its distance matrix."""

    point_ids: tuple
    dist: np.ndarray
    basepoint: int = 0

    def __post_init__(self):
        object.__setattr__(self, "point_ids", tuple(self.point_ids))
        object.__setattr__(self, "dist", _frozen(self.dist))

    def __len__(self) -> int:
        return len(self.point_ids)

    def index(self, label) -> int:
        return self.point_ids.index(label)

    def indices(self, labels: Iterable) -> list[int]:
        lookup = {p: i for i, p in enumerate(self.point_ids)}
        return [lookup[p] for p in labels]

    def radius(self) -> np.ndarray:
        """Distance of every point to the basepoint."""
        return self.dist[self.basepoint]

    def restrict(self, idx: Sequence[int]) -> "FiniteMetricSpace":
        idx = list(idx)
        if self.basepoint not in idx:
            raise ValueError("restriction must keep the basepoint")
        return FiniteMetricSpace(
            [self.point_ids[i] for i in idx],
            self.dist[np.ix_(idx, idx)],
            idx.index(self.basepoint),
        )

    def same_as(self, other: "FiniteMetricSpace") -> bool:
        return (
            self is other
            or (
                self.point_ids == other.point_ids
                and self.basepoint == other.basepoint
                and self.dist.shape == other.dist.shape
                and bool(np.all(np.abs(self.dist - other.dist) <= _tol(self.dist)))
            )
        )

    @classmethod
    def from_points(cls, coords, point_ids=None, basepoint=0) -> "FiniteMetricSpace":
        """Euclidean distances between rows of ``coords``."""
        c = np.asarray(coords, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        d = np.sqrt(((c[:, None, :] - c[None, :, :]) ** 2).sum(-1))
        ids = list(range(len(c))) if point_ids is None else point_ids
        return cls(ids, d, basepoint)

    @classmethod
    def line(cls, values, basepoint=0) -> "FiniteMetricSpace":
        """Points of the real line with labels equal to their coordinates."""
        vals = list(values)
        return cls.from_points(np.array(vals, dtype=float), vals, basepoint)


def validate_space(dist, basepoint: int = 0, point_ids=None) -> FiniteMetricSpace:
    """Build a :class:`FiniteMetricSpace`, raising :class:`InvalidMetricError`
    with every violated axiom if ``dist`` is not a metric."""
    violations = check_space(dist)
    if violations:
        raise InvalidMetricError(violations)
    d = np.asarray(dist, dtype=float)
    ids = list(range(len(d))) if point_ids is None else list(point_ids)
    if len(ids) != len(d):
        raise ValueError("point_ids length does not match the matrix")
    if not 0 <= basepoint < len(d):
        raise ValueError(f"basepoint {basepoint} out of range")
    return FiniteMetricSpace(ids, d, basepoint)


def check_cross(space: FiniteMetricSpace, cross, min_gap: float = 1.0) -> list[Violation]:
    c = np.asarray(cross, dtype=float)
    d = space.dist
    if c.shape != d.shape:
        raise ValueError(f"cross block shape {c.shape} does not match space {d.shape}")
    if not np.all(np.isfinite(c)):
        raise ValueError("cross block has non-finite entries")
    out = []
    low = c < min_gap - _tol(min_gap)
    if low.any():
        i, j = np.argwhere(low)[0]
        out.append(Violation("gap", (int(i), int(j)), c[i, j], min_gap))
    dtol = _tol(d)
    # x side: rho(x, y') <= d(x, z) + rho(z, y') and rho(x, y') + rho(z, y') >= d(x, z);
    # the y side is the same statement for the transpose
    for side, block in (("x", c), ("y", c.T)):
        reach = min_plus(d, block)
        bad = block - reach > _tol(block)
        if bad.any():
            i, j = (int(v) for v in np.argwhere(bad)[0])
            k = int(np.argmin(d[i] + block[:, j]))
            out.append(Violation(f"mixed triangle ({side})", (i, j, k), abs(block[i, j] - block[k, j]), d[i, k]))
        spread = min_plus(block, block.T)
        bad = d - spread > dtol
        if bad.any():
            i, k = (int(v) for v in np.argwhere(bad)[0])
            j = int(np.argmin(block[i] + block[k]))
            out.append(Violation(f"co-triangle ({side})", (i, j, k), block[i, j] + block[k, j], d[i, k]))
    return out


@dataclass(frozen=True, eq=False)
class CrossMetric:
    """Cross block of a metric on the double of ``space``."""

    space: FiniteMetricSpace
    cross: np.ndarray
    min_gap: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "cross", _frozen(self.cross))

    def __len__(self) -> int:
        return len(self.space)

    def full_matrix(self) -> np.ndarray:
        """The ``2n x 2n`` distance matrix of the double."""
        d = self.space.dist
        return np.block([[d, self.cross], [self.cross.T, d]])

    def distance_to_copy(self) -> np.ndarray:
        """``rho(x, X')`` for every point ``x``."""
        return self.cross.min(axis=1)

    def restrict(self, idx: Sequence[int]) -> "CrossMetric":
        idx = list(idx)
        return CrossMetric(self.space.restrict(idx), self.cross[np.ix_(idx, idx)], self.min_gap)

    def shifted(self, c: float) -> "CrossMetric":
        return CrossMetric(self.space, self.cross + c, self.min_gap)


def validate_cross(space: FiniteMetricSpace, cross, min_gap: float = 1.0) -> CrossMetric:
    violations = check_cross(space, cross, min_gap)
    if violations:
        raise InvalidMetricError(violations)
    return CrossMetric(space, cross, min_gap)


def _subset_indices(space: FiniteMetricSpace, subset, by_label: bool) -> list[int]:
    idx = space.indices(subset) if by_label else [int(i) for i in subset]
    if not idx:
        raise ValueError("subset must be non-empty")
    return sorted(set(idx))


def subset_metric(space: FiniteMetricSpace, subset, by_label: bool = False) -> CrossMetric:
    """Glue the two copies along ``subset``:
    ``cross(x, y') = min_a d(x, a) + 1 + d(a, y)``."""
    idx = _subset_indices(space, subset, by_label)
    d = space.dist
    cross = min_plus(d[:, idx] + 1.0, d[idx, :])
    return CrossMetric(space, cross)


def hausdorff_distance(space: FiniteMetricSpace, a, b, by_label: bool = False) -> float:
    ia = _subset_indices(space, a, by_label)
    ib = _subset_indices(space, b, by_label)
    block = space.dist[np.ix_(ia, ib)]
    return float(max(block.min(axis=1).max(), block.min(axis=0).max()))


@dataclass(frozen=True, eq=False)
class ScaleFamily:
    """Coherent truncations ``stages[t]`` at increasing ``scales[t]``.

    ``inclusions[t][i]`` is the stage-``t+1`` index of stage-``t`` point ``i``.
    """

    scales: tuple
    stages: tuple
    inclusions: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))
        object.__setattr__(self, "stages", tuple(self.stages))
        if not self.inclusions:
            incl = [_label_inclusion(a.space, b.space) for a, b in zip(self.stages, self.stages[1:])]
        else:
            incl = [np.asarray(m, dtype=int) for m in self.inclusions]
        object.__setattr__(self, "inclusions", tuple(incl))
        self.check()

    def __len__(self) -> int:
        return len(self.stages)

    def check(self) -> None:
        if len(self.scales) != len(self.stages):
            raise ValueError("one scale per stage is required")
        if any(b <= a for a, b in zip(self.scales, self.scales[1:])):
            raise ValueError("scales must be strictly increasing")
        if len(self.inclusions) != len(self.stages) - 1:
            raise ValueError("need one inclusion between consecutive stages")
        for t, inc in enumerate(self.inclusions):
            lo, hi = self.stages[t], self.stages[t + 1]
            if len(inc) != len(lo) or len(set(inc.tolist())) != len(inc):
                raise ValueError(f"inclusion {t} is not an injection")
            if inc[lo.space.basepoint] != hi.space.basepoint:
                raise ValueError(f"inclusion {t} does not preserve the basepoint")
            sub = np.ix_(inc, inc)
            for name, small, big in (
                ("dist", lo.space.dist, hi.space.dist[sub]),
                ("cross", lo.cross, hi.cross[sub]),
            ):
                if np.any(np.abs(small - big) > _tol(small)):
                    raise ValueError(f"stage {t} {name} is not the restriction of stage {t + 1}")

    @classmethod
    def from_filtration(cls, rho: CrossMetric, scales: Sequence[float], radius=None) -> "ScaleFamily":
        """Stage ``t`` is ``rho`` restricted to points with ``radius <= scales[t]``.

        ``radius`` defaults to the distance to the basepoint.
        """
        r = rho.space.radius() if radius is None else np.asarray(radius, dtype=float)
        stages, incl, prev = [], [], None
        for s in scales:
            idx = np.flatnonzero(r <= s + _tol(s)).tolist()
            if rho.space.basepoint not in idx:
                idx = sorted(idx + [rho.space.basepoint])
            stages.append(rho.restrict(idx))
            if prev is not None:
                pos = {p: k for k, p in enumerate(idx)}
                incl.append(np.array([pos[p] for p in prev]))
            prev = idx
        return cls(scales, stages, incl)

    def global_indices(self) -> list[np.ndarray]:
        """For each stage, indices of its points inside the final stage."""
        out = [np.arange(len(self.stages[-1]))]
        for inc in reversed(self.inclusions):
            out.append(out[-1][inc])
        return out[::-1]


def _label_inclusion(lo: FiniteMetricSpace, hi: FiniteMetricSpace) -> np.ndarray:
    pos = {p: k for k, p in enumerate(hi.point_ids)}
    try:
        return np.array([pos[p] for p in lo.point_ids], dtype=int)
    except KeyError as exc:
        raise ValueError(f"point {exc.args[0]!r} missing from the next stage") from None

"""Polar-grid truncations of R^n and metrics built from partial isometries.

A grid point is the origin or ``radius * direction`` for a listed unit
direction; the origin has index 0 and direction ``i`` at ``radii[j]`` has
index ``1 + i * len(radii) + j``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import orthogonal_procrustes

from .spaces import CrossMetric, FiniteMetricSpace, ScaleFamily, min_plus
from .rays import RayConfig, RayFamily, best_targets, default_bound, estimate_all

SNAP_TOL = 1e-9
ORTHO_TOL = 1e-10


def default_radii(rmax: float) -> list[float]:
    """1-2-5 ladder up to ``rmax`` (always ending at ``rmax``)."""
    out, decade = [], 1.0
    while decade <= rmax:
        for m in (1, 2, 5):
            if m * decade < rmax:
                out.append(m * decade)
        decade *= 10
    out.append(float(rmax))
    return out


def planar_directions(k: int, offset: float = 0.0) -> np.ndarray:
    ang = offset + 2 * np.pi * np.arange(k) / k
    return np.column_stack([np.cos(ang), np.sin(ang)])


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def _angle(a: np.ndarray, b: np.ndarray) -> float:
    """Angle between unit vectors, accurate near 0 (unlike ``arccos``)."""
    return 2 * math.asin(min(1.0, float(np.linalg.norm(a - b)) / 2))


class PolarGrid:
    def __init__(self, directions, radii: Sequence[float]):
        dirs = np.atleast_2d(np.asarray(directions, dtype=float))
        norms = np.linalg.norm(dirs, axis=1)
        if np.any(np.abs(norms - 1) > 1e-12):
            raise ValueError("directions must be unit vectors")
        radii = [float(r) for r in radii]
        if not radii or radii[0] <= 0 or any(b <= a for a, b in zip(radii, radii[1:])):
            raise ValueError("radii must be positive and strictly increasing")
        if len(dirs) > 1:
            gap = np.linalg.norm(dirs[:, None] - dirs[None, :], axis=-1) + 2 * np.eye(len(dirs))
            if gap.min() <= SNAP_TOL:
                raise ValueError("repeated direction")
        self.directions = dirs
        self.radii = radii
        self.n = dirs.shape[1]
        coords = [np.zeros(self.n)]
        ids = ["o"]
        for i, d in enumerate(dirs):
            for R in radii:
                coords.append(R * d)
                ids.append(f"d{i}@{R:g}")
        self.coords = np.array(coords)
        self._space = FiniteMetricSpace.from_points(self.coords, ids, 0)

    @property
    def space(self) -> FiniteMetricSpace:
        return self._space

    def __len__(self) -> int:
        return len(self.coords)

    def point(self, direction: int, radius: float) -> int:
        if radius == 0:
            return 0
        return 1 + direction * len(self.radii) + self.radii.index(float(radius))

    def snap(self, vectors) -> list[int]:
        """Grid direction index of each unit vector (within ``SNAP_TOL``)."""
        out = []
        for v in np.atleast_2d(vectors):
            err = np.linalg.norm(self.directions - v, axis=1)
            k = int(np.argmin(err))
            if err[k] > SNAP_TOL:
                raise ValueError(f"direction {v} is not on the grid (off by {err[k]:.3g})")
            out.append(k)
        return out

    def with_images(self, u: np.ndarray) -> "PolarGrid":
        """This grid plus the images of its directions under ``u``."""
        dirs = list(self.directions)
        for v in np.asarray(self.directions) @ np.asarray(u).T:
            if min(np.linalg.norm(d - v) for d in dirs) > SNAP_TOL:
                dirs.append(v / np.linalg.norm(v))
        return PolarGrid(dirs, self.radii)

    def with_radii(self, radii: Sequence[float]) -> "PolarGrid":
        return PolarGrid(self.directions, radii)

    def rays(self) -> RayFamily:
        ids = tuple(range(len(self.directions)))
        samples = {i: {0.0: 0, **{R: self.point(i, R) for R in self.radii}} for i in ids}
        return RayFamily(ids, samples)

    def to_dict(self) -> dict:
        return {"n": self.n, "directions": self.directions.tolist(), "radii": list(self.radii)}


@dataclass(frozen=True)
class PartialIsometry:
    """An orthogonal ``u`` restricted to nested direction strata.

    ``strata`` is a list of ``(m, directions)`` with increasing integer
    weights ``m >= 1``; each set contains the previous one.
    """

    u: np.ndarray
    strata: tuple = ()

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        if u.ndim != 2 or u.shape[0] != u.shape[1]:
            raise ValueError("u must be square")
        if np.abs(u.T @ u - np.eye(len(u))).max() > ORTHO_TOL:
            raise ValueError("u is not orthogonal")
        object.__setattr__(self, "u", u)
        strata = tuple((int(m), frozenset(int(i) for i in A)) for m, A in self.strata)
        for (m1, a1), (m2, a2) in zip(strata, strata[1:]):
            if m2 <= m1:
                raise ValueError("stratum weights must increase")
            if not a1 <= a2:
                raise ValueError(f"stratum {m1} is not contained in stratum {m2}")
        if strata and strata[0][0] < 1:
            raise ValueError("stratum weights start at 1")
        object.__setattr__(self, "strata", strata)

    @property
    def domain(self) -> frozenset:
        return self.strata[-1][1] if self.strata else frozenset()

    def weight(self, direction: int) -> int | None:
        for m, A in self.strata:
            if direction in A:
                return m
        return None

    def direction_map(self, grid: PolarGrid) -> dict:
        dom = sorted(self.domain)
        if not dom:
            return {}
        images = grid.snap(grid.directions[dom] @ self.u.T)
        return dict(zip(dom, images))

    def to_dict(self) -> dict:
        return {"matrix": self.u.tolist(), "strata": [{"m": m, "directions": sorted(A)} for m, A in self.strata]}

    @classmethod
    def from_dict(cls, data: dict) -> "PartialIsometry":
        return cls(np.array(data["matrix"], dtype=float), tuple((s["m"], s["directions"]) for s in data["strata"]))


def chi_euclid(grid: PolarGrid, pi: PartialIsometry) -> CrossMetric:
    """``cross(x, y') = min_m min_{z in E_m} d(x, z) + m + 1 + d(u z, y)``
    with ``E_0`` the origin."""
    if pi.u.shape[0] != grid.n:
        raise ValueError("dimension mismatch between grid and isometry")
    src, dst, length = [0], [0], [1.0]
    for i, j in pi.direction_map(grid).items():
        m = pi.weight(i)
        for R in grid.radii:
            src.append(grid.point(i, R))
            dst.append(grid.point(j, R))
            length.append(m + 1.0)
    d = grid.space.dist
    src, dst, length = np.array(src), np.array(dst), np.array(length)
    cross = min_plus(d[:, src] + length[None, :], d[dst, :])
    return CrossMetric(grid.space, cross)


@dataclass(frozen=True)
class IsometryEstimate:
    """Directions recovered from a cross metric plus an orthogonal fit.

    ``envelope[r]`` is ``2 asin(C / R_max)``: every direction whose ray stays
    within ``C`` of ray ``r`` at radius ``R_max`` lies this close (in angle)
    to the recovered target.
    """

    pairs: dict
    costs: dict
    bounds: dict
    u: np.ndarray | None
    residuals: dict
    envelope: dict
    conforming: bool
    estimates: dict = field(repr=False, default_factory=dict)

    @property
    def angle(self) -> float | None:
        """Rotation angle of a planar fit (``None`` for reflections or n != 2)."""
        if self.u is None or self.u.shape != (2, 2) or np.linalg.det(self.u) < 0:
            return None
        return math.atan2(self.u[1, 0], self.u[0, 0])

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values(), default=0.0)

    @property
    def max_envelope(self) -> float:
        return max(self.envelope.values(), default=0.0)

    def to_dict(self) -> dict:
        return {
            "status": "CONFORMING" if self.conforming else "NONCONFORMING",
            "pairs": [[r, t] for r, t in sorted(self.pairs.items())],
            "matrix": None if self.u is None else self.u.tolist(),
            "angle": self.angle,
            "residuals": {str(k): v for k, v in sorted(self.residuals.items())},
            "envelope": {str(k): v for k, v in sorted(self.envelope.items())},
            "strata": sorted({str(r): max(1, math.ceil(b - 1e-9)) for r, b in self.bounds.items()}.items()),
        }


def psi_euclid(rho: CrossMetric, grid: PolarGrid, config: RayConfig = RayConfig(), angular_tol: float = 1e-2) -> IsometryEstimate:
    if len(rho.space) != len(grid):
        raise ValueError("cross metric does not live on this grid")
    fam = ScaleFamily.from_filtration(rho, grid.radii)
    rays = grid.rays()
    est = estimate_all(fam, rays, config)
    finite = [r for r in rays.rays if est[r].finite]
    limit = default_bound(est, config)
    pairs, costs, bounds = {}, {}, {}
    for r, (t, cost) in best_targets(rho, rays, finite, rays.rays).items():
        if cost <= limit:
            pairs[r], costs[r], bounds[r] = t, cost, est[r].bound
    if not pairs:
        return IsometryEstimate({}, {}, {}, None, {}, {}, True, est)
    src = grid.directions[sorted(pairs)]
    dst = grid.directions[[pairs[r] for r in sorted(pairs)]]
    fit, _ = orthogonal_procrustes(src, dst)
    u = fit.T
    residuals = {r: _angle(u @ grid.directions[r], grid.directions[t]) for r, t in pairs.items()}
    rmax = grid.radii[-1]
    envelope = {r: 2 * math.asin(min(1.0, c / rmax)) for r, c in costs.items()}
    conforming = max(residuals.values()) <= angular_tol
    return IsometryEstimate(pairs, costs, bounds, u, residuals, envelope, conforming, est)


def angle_preservation_check(rho: CrossMetric, grid: PolarGrid, r1: int, r2: int, t1: int, t2: int, radii: Sequence[float], C: float | None = None) -> list[dict]:
    """Chord-based angle ``beta`` between the image rays against the source
    angle ``alpha``, checking ``|sin(alpha/2) - sin(beta/2)| <= C / R``.

    ``C`` defaults to the largest ``rho(x_i, y_i')`` seen on the listed radii.
    """
    alpha = _angle(grid.directions[r1], grid.directions[r2])
    if C is None:
        C = max(
            rho.cross[grid.point(r, R), grid.point(t, R)]
            for R in radii for r, t in ((r1, t1), (r2, t2))
        )
    rows = []
    for R in radii:
        y1, y2 = grid.coords[grid.point(t1, R)], grid.coords[grid.point(t2, R)]
        chord = float(np.linalg.norm(y1 - y2))
        beta = 2 * math.asin(min(1.0, chord / (2 * R)))
        gap = abs(math.sin(alpha / 2) - math.sin(beta / 2))
        rows.append({
            "R": R, "alpha": alpha, "beta": beta,
            "source_chord": 2 * R * math.sin(alpha / 2), "image_chord": chord,
            "gap": gap, "bound": C / R, "ok": gap <= C / R + 1e-12,
        })
    return rows

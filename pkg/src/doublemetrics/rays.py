"""Per-ray asymptotic gluing bounds f_rho and the strata A_m they define."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Hashable, Sequence

import numpy as np

from .spaces import CrossMetric, ScaleFamily

#: tolerance used when rounding bounds to strata
BOUND_TOL = 1e-9


@dataclass(frozen=True)
class RayFamily:
    """Rays through a finite space.

    ``samples[r]`` maps radius -> point index (in the space the family was
    built for) for ray ``r``; radius 0 is the basepoint.
    """

    rays: tuple
    samples: dict = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "rays", tuple(self.rays))
        missing = [r for r in self.rays if r not in self.samples]
        if missing:
            raise ValueError(f"rays without samples: {missing}")

    def sample(self, r: Hashable, radius: float) -> int | None:
        return self.samples[r].get(radius)

    def radii(self, r: Hashable) -> list:
        return sorted(self.samples[r])

    def check(self, space) -> None:
        rad = space.radius()
        for r in self.rays:
            for R, p in self.samples[r].items():
                if abs(rad[p] - R) > 1e-9 * max(1.0, R):
                    raise ValueError(f"ray {r!r} sample at radius {R} has radius {rad[p]}")


@dataclass(frozen=True)
class RayConfig:
    tail_fraction: float = 0.5
    divergence_bound: float | None = None
    #: how many final stages must be non-increasing for a finite verdict
    window: int = 2


@dataclass(frozen=True)
class FRhoEstimate:
    ray: Hashable
    scales: tuple
    tail_sup: tuple
    finite: bool
    bound: float
    reason: str = ""

    @property
    def stratum(self) -> int | None:
        """Smallest integer dominating the tail, or ``None`` if divergent."""
        if not self.finite:
            return None
        return max(1, math.ceil(self.bound - BOUND_TOL))

    def rows(self):
        verdict = "FINITE" if self.finite else "DIVERGENT"
        for R, v in zip(self.scales, self.tail_sup):
            yield (self.ray, R, v, verdict, self.bound if self.finite else math.inf)


def _stage_gaps(fam: ScaleFamily) -> list[np.ndarray]:
    """``rho(x, X')`` at every stage, indexed by final-stage point."""
    glob = fam.global_indices()
    n = len(fam.stages[-1])
    out = []
    for stage, g in zip(fam.stages, glob):
        gap = np.full(n, np.nan)
        gap[g] = stage.distance_to_copy()
        out.append(gap)
    return out


def estimate_f_rho(fam: ScaleFamily, rays: RayFamily, ray: Hashable, config: RayConfig = RayConfig(), _gaps=None) -> FRhoEstimate:
    """Finite proxy for ``inf{C : limsup_{x in r} rho(x, X') < C}``.

    At each stage ``R`` the tail sup is the largest ``rho(x, X')`` over ray
    samples with radius in ``[tail_fraction * R, R]``. The verdict is finite
    when that sequence is non-increasing over the last ``config.window``
    stages and, if set, below ``config.divergence_bound``.
    Sample indices refer to the final stage of ``fam``.
    """
    gaps = _stage_gaps(fam) if _gaps is None else _gaps
    samples = rays.samples[ray]
    tail = []
    for R, gap in zip(fam.scales, gaps):
        pts = [p for r, p in samples.items() if config.tail_fraction * R - 1e-12 <= r <= R + 1e-12]
        vals = gap[pts] if pts else np.array([])
        vals = vals[~np.isnan(vals)]
        if vals.size == 0:
            raise ValueError(f"ray {ray!r} has no samples in the tail window at scale {R}")
        tail.append(float(vals.max()))
    last = tail[-config.window:]
    bound = tail[-1]
    if len(tail) < config.window:
        return FRhoEstimate(ray, fam.scales, tuple(tail), False, bound, "too few stages")
    if any(b > a + BOUND_TOL * max(1.0, a) for a, b in zip(last, last[1:])):
        return FRhoEstimate(ray, fam.scales, tuple(tail), False, bound, "tail still growing")
    if config.divergence_bound is not None and bound > config.divergence_bound:
        return FRhoEstimate(ray, fam.scales, tuple(tail), False, bound, "exceeds divergence bound")
    return FRhoEstimate(ray, fam.scales, tuple(tail), True, bound)


def estimate_all(fam: ScaleFamily, rays: RayFamily, config: RayConfig = RayConfig()) -> dict:
    """Estimates for every ray. Without an explicit divergence bound, the
    default is ten times the largest bound among rays whose tail stabilised."""
    gaps = _stage_gaps(fam)
    est = {r: estimate_f_rho(fam, rays, r, config, gaps) for r in rays.rays}
    if config.divergence_bound is None:
        finite = [e.bound for e in est.values() if e.finite]
        if finite:
            limit = 10 * max(finite)
            est = {
                r: e if not e.finite or e.bound <= limit
                else FRhoEstimate(e.ray, e.scales, e.tail_sup, False, e.bound, "exceeds default bound")
                for r, e in est.items()
            }
    return est


def default_bound(estimates: dict, config: RayConfig = RayConfig()) -> float:
    if config.divergence_bound is not None:
        return config.divergence_bound
    finite = [e.bound for e in estimates.values() if e.finite]
    return 10 * max(finite) if finite else math.inf


def strata(fam: ScaleFamily, rays: RayFamily, config: RayConfig = RayConfig(), estimates: dict | None = None) -> list[tuple[int, frozenset]]:
    """Nested ``(m, A_m)`` with ``A_m = {r : f_rho(r) <= m}`` for ``m = 1..max``."""
    est = estimate_all(fam, rays, config) if estimates is None else estimates
    levels = {r: e.stratum for r, e in est.items() if e.finite}
    if not levels:
        return []
    top = max(levels.values())
    return [(m, frozenset(r for r, k in levels.items() if k <= m)) for m in range(1, top + 1)]


def filtration_family(rho: CrossMetric, scales: Sequence[float]) -> ScaleFamily:
    return ScaleFamily.from_filtration(rho, scales)


def best_targets(rho: CrossMetric, rays: RayFamily, sources: Sequence, candidates: Sequence,
                 key: Callable = None, admit: dict | None = None) -> dict:
    """For each source ray, the candidate ray minimising the worst
    radius-matched ``rho(x_R, y_R')``.

    With ``admit`` (source -> ceiling), every candidate whose worst cost is
    within the ceiling stays in play, not only the minimisers. Survivors are
    ranked by closeness at the largest radius, then the next largest, and
    so on; remaining ties go to the smallest ``key``.
    Returns ``source -> (target, cost)``.
    """
    key = key or (lambda r: r)
    cands = sorted(candidates, key=key)
    sources = list(sources)
    if not cands or not sources:
        return {}
    radii = sorted(set().union(*(rays.samples[r].keys() for r in cands)))

    def table(rs):
        return np.array([[rays.samples[r].get(R, -1) for R in radii] for r in rs], dtype=int)

    src, dst = table(sources), table(cands)
    per_radius = np.full((len(radii), len(sources), len(cands)), -np.inf)
    for k in range(len(radii)):
        ok = (src[:, k, None] >= 0) & (dst[None, :, k] >= 0)
        vals = rho.cross[np.maximum(src[:, k], 0)[:, None], np.maximum(dst[:, k], 0)[None, :]]
        per_radius[k] = np.where(ok, vals, -np.inf)
    cost = per_radius.max(axis=0)
    ceiling = cost.min(axis=1, keepdims=True)
    if admit is not None:
        extra = np.array([[admit.get(r, -np.inf)] for r in sources], dtype=float)
        ceiling = np.maximum(ceiling, extra)
    alive = (cost <= ceiling) | _near(cost, ceiling)
    for k in reversed(range(len(radii))):
        level = np.where(alive, per_radius[k], np.inf)
        alive &= _near(level, level.min(axis=1, keepdims=True))
    best = np.argmax(alive, axis=1)
    return {r: (cands[b], float(cost[i, b])) for i, (r, b) in enumerate(zip(sources, best))}


def _near(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        return (a == b) | (np.abs(a - b) <= 1e-9 * np.maximum(1.0, np.abs(b)))

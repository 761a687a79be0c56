"""Composition, pseudoinverse and desk-scale coarse equivalence of cross metrics."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .spaces import CrossMetric, ScaleFamily, min_plus

#: additive constant of the composition law
GLUE = 1.0


def _same_space(rho: CrossMetric, sigma: CrossMetric) -> None:
    if not rho.space.same_as(sigma.space):
        raise ValueError("cross metrics live on different spaces")


def compose(rho: CrossMetric, sigma: CrossMetric) -> CrossMetric:
    """``rho ∘ sigma`` with ``sigma`` applied first:
    ``(rho∘sigma)(x, y') = min_u sigma(x, u') + 1 + rho(u, y')``."""
    _same_space(rho, sigma)
    return CrossMetric(rho.space, min_plus(sigma.cross, rho.cross) + GLUE, rho.min_gap)


def star(rho: CrossMetric) -> CrossMetric:
    return CrossMetric(rho.space, rho.cross.T, rho.min_gap)


def idempotent_defect(rho: CrossMetric) -> float:
    """Largest deviation from the exact identity ``rho∘rho = rho + 2``."""
    sq = compose(rho, rho).cross
    return float(np.abs(sq - rho.cross - 2 * GLUE).max())


def sandwich_check(rho: CrossMetric) -> bool:
    """Lower half of ``rho rho* rho ~ rho``: entrywise ``>= rho + 2``."""
    s = compose(rho, compose(star(rho), rho)).cross
    lower = rho.cross + 2 * GLUE
    return bool(np.all(s >= lower - 1e-9 * np.maximum(1.0, np.abs(lower))))


@dataclass(frozen=True)
class DistortionProfile:
    """``values[r, k] = sup{d'(p, q) : d(p, q) <= thresholds[k]}`` at stage ``r``.

    Pairs range over the whole double of each stage, including ``p = q``.
    """

    thresholds: tuple
    scales: tuple
    values: np.ndarray

    def at(self, stage: int, t: float) -> float:
        return float(self.values[stage, self.thresholds.index(t)])

    def is_monotone(self) -> bool:
        v = self.values
        return bool(np.all(np.diff(v, axis=0) >= 0) and np.all(np.diff(v, axis=1) >= 0))


def _check_matching(fam: ScaleFamily, fam2: ScaleFamily) -> None:
    if len(fam) != len(fam2) or fam.scales != fam2.scales:
        raise ValueError("families have different stages")
    for a, b in zip(fam.stages, fam2.stages):
        if not a.space.same_as(b.space):
            raise ValueError("families have different point sets")
    for i, j in zip(fam.inclusions, fam2.inclusions):
        if not np.array_equal(i, j):
            raise ValueError("families have different inclusions")


def _sup_below(src: np.ndarray, dst: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    # sort once, then running max of dst along increasing src
    order = np.argsort(src, kind="stable")
    s, running = src[order], np.maximum.accumulate(dst[order])
    pos = np.searchsorted(s, thresholds * (1 + 1e-12) + 1e-12, side="right")
    out = np.zeros(len(thresholds))
    hit = pos > 0
    out[hit] = running[pos[hit] - 1]
    return out


def distortion_profile(fam: ScaleFamily, fam2: ScaleFamily, thresholds: Sequence[float]) -> DistortionProfile:
    """How far ``fam2`` can stretch pairs that ``fam`` keeps within each threshold."""
    _check_matching(fam, fam2)
    t = np.asarray(sorted(float(x) for x in thresholds))
    rows = []
    for a, b in zip(fam.stages, fam2.stages):
        d = a.space.dist.ravel()
        diag = _sup_below(d, d, t)
        cross = _sup_below(a.cross.ravel(), b.cross.ravel(), t)
        rows.append(np.maximum(diag, cross))
    return DistortionProfile(tuple(t.tolist()), fam.scales, np.array(rows))


class Status(str, Enum):
    EQUIVALENT_AT_SCALE = "EQUIVALENT_AT_SCALE"
    DIVERGENT = "DIVERGENT"
    INCONCLUSIVE = "INCONCLUSIVE"


@dataclass(frozen=True)
class EquivalenceConfig:
    thresholds: tuple = (1.0, 2.0, 4.0, 8.0)
    divergence_bound: float = 100.0
    window: int = 2


@dataclass(frozen=True)
class EquivalenceVerdict:
    status: Status
    forward: DistortionProfile
    backward: DistortionProfile
    stabilization_stage: int | None = None
    witness: dict = field(default_factory=dict)

    @property
    def envelope(self) -> dict:
        return {
            "thresholds": list(self.forward.thresholds),
            "forward": self.forward.values[-1].tolist(),
            "backward": self.backward.values[-1].tolist(),
        }

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "stabilization_stage": self.stabilization_stage,
            "envelope": self.envelope,
            "witness": self.witness,
        }


def _stable_from(values: np.ndarray) -> int:
    last = values[-1]
    s = len(values) - 1
    while s > 0 and np.array_equal(values[s - 1], last):
        s -= 1
    return s


def coarse_equivalent(fam: ScaleFamily, fam2: ScaleFamily, config: EquivalenceConfig = EquivalenceConfig()) -> EquivalenceVerdict:
    """Three-valued finite proxy for ``[d] = [d']``.

    DIVERGENT wins if the smallest threshold is stretched past
    ``config.divergence_bound`` at any stage, in either direction.
    """
    fwd = distortion_profile(fam, fam2, config.thresholds)
    bwd = distortion_profile(fam2, fam, config.thresholds)
    low_f, low_b = fwd.values[:, 0], bwd.values[:, 0]
    if max(low_f.max(), low_b.max()) > config.divergence_bound:
        side = "forward" if low_f.max() >= low_b.max() else "backward"
        prof = fwd if side == "forward" else bwd
        stage = int(np.argmax(prof.values[:, 0] > config.divergence_bound))
        src, dst = (fam, fam2) if side == "forward" else (fam2, fam)
        witness = _stretched_pair(src.stages[-1], dst.stages[-1], fwd.thresholds[0])
        witness.update(direction=side, first_stage=stage, phi=float(prof.values[-1, 0]))
        return EquivalenceVerdict(Status.DIVERGENT, fwd, bwd, None, witness)
    if len(fam) < 3:
        return EquivalenceVerdict(Status.INCONCLUSIVE, fwd, bwd)
    s = max(_stable_from(fwd.values), _stable_from(bwd.values))
    if len(fam) - s >= config.window:
        return EquivalenceVerdict(Status.EQUIVALENT_AT_SCALE, fwd, bwd, s)
    return EquivalenceVerdict(Status.INCONCLUSIVE, fwd, bwd)


def _stretched_pair(src: CrossMetric, dst: CrossMetric, t: float) -> dict:
    """The cross pair realising ``sup{dst : src <= t}``."""
    masked = np.where(src.cross <= t, dst.cross, -np.inf)
    i, j = np.unravel_index(np.argmax(masked), masked.shape)
    ids = src.space.point_ids
    return {"x": ids[i], "y_prime": ids[j], "src": float(src.cross[i, j]), "dst": float(dst.cross[i, j])}

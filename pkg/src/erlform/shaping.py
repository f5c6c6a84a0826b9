"""Evolvable reward shaping.

The shaped reward is ``r_perf * w_perf + sum_i r_i * w_i``. The weights form
the genome that evolution varies; the auxiliary rewards come from the
environment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from erlform.errors import StructuralError
from erlform.moo import ObjectiveVector

W_MIN = 0.0
W_MAX = 4.0


@dataclass(frozen=True)
class ShapingWeights:
    w_perf: float
    aux: tuple[tuple[str, float], ...]

    def __post_init__(self):
        aux = tuple((str(k), float(w)) for k, w in self.aux)
        object.__setattr__(self, "aux", aux)
        object.__setattr__(self, "w_perf", float(self.w_perf))
        for name, w in (("perf", self.w_perf),) + aux:
            if not math.isfinite(w) or w < W_MIN or w > W_MAX:
                raise StructuralError(f"weight {name}={w} outside [{W_MIN}, {W_MAX}]")
        if len({k for k, _ in aux}) != len(aux):
            raise StructuralError("duplicate auxiliary task ids")

    @property
    def task_ids(self) -> tuple[str, ...]:
        return tuple(k for k, _ in self.aux)

    def as_dict(self) -> dict[str, float]:
        """Flat key/value form; the performance weight is keyed ``perf``."""
        out = {"perf": self.w_perf}
        out.update(self.aux)
        return out

    @classmethod
    def from_dict(cls, d: Mapping[str, float]) -> "ShapingWeights":
        d = dict(d)
        w_perf = d.pop("perf")
        return cls(w_perf, tuple(d.items()))

    def to_array(self) -> np.ndarray:
        return np.array([self.w_perf] + [w for _, w in self.aux])

    def with_array(self, arr: Sequence[float]) -> "ShapingWeights":
        return ShapingWeights(arr[0], tuple(zip(self.task_ids, arr[1:])))


@dataclass(frozen=True)
class RewardSample:
    r_perf: float
    aux: tuple[tuple[str, float], ...]

    @property
    def task_ids(self) -> tuple[str, ...]:
        return tuple(k for k, _ in self.aux)


def shaped_reward(s: RewardSample, w: ShapingWeights) -> float:
    if s.task_ids != w.task_ids:
        raise StructuralError(f"reward tasks {s.task_ids} do not match weights {w.task_ids}")
    total = s.r_perf * w.w_perf
    for (_, r), (_, wi) in zip(s.aux, w.aux):
        total += r * wi
    return total


def normalize_objectives(raw: Sequence[Sequence[tuple[str, float]]]) -> list[ObjectiveVector]:
    """Min-max normalize each objective over the given population snapshot.

    An objective whose values are all equal maps to 0.5 for everyone.
    """
    if not raw:
        return []
    ids = tuple(k for k, _ in raw[0])
    for row in raw:
        if tuple(k for k, _ in row) != ids:
            raise StructuralError("inconsistent objective sets across the population")
    m = np.array([[v for _, v in row] for row in raw], dtype=float).reshape(len(raw), len(ids))
    if not np.all(np.isfinite(m)):
        raise StructuralError("non-finite raw objective value")
    lo, hi = m.min(axis=0), m.max(axis=0)
    span = hi - lo
    degenerate = span == 0
    out = np.where(degenerate, 0.5, (m - lo) / np.where(degenerate, 1.0, span))
    out = np.clip(out, 0.0, 1.0)
    return [ObjectiveVector(ids, tuple(row)) for row in out]


def normalize_vectors(vectors: Sequence[ObjectiveVector]) -> list[ObjectiveVector]:
    return normalize_objectives([tuple(zip(v.ids, v.values)) for v in vectors])

"""Objective-space mathematics.

Dominance relations (plain and prioritized), scalarization, non-dominated
sorting, crowding-distance truncation and exact 2D/3D hypervolume. All
objectives are maximized and live in [0, 1].
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from erlform.errors import (
    SelectionError,
    StructuralError,
    UnsupportedDimensionError,
    UsageError,
)

PERF = "perf"


@dataclass(frozen=True)
class ObjectiveVector:
    """Named scores in [0, 1], one per objective, in a fixed order."""

    ids: tuple[str, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.ids) != len(self.values):
            raise StructuralError(f"{len(self.ids)} ids but {len(self.values)} values")
        if len(set(self.ids)) != len(self.ids):
            raise StructuralError(f"duplicate objective ids in {self.ids}")
        for name, v in zip(self.ids, self.values):
            if not math.isfinite(v) or v < 0.0 or v > 1.0:
                raise StructuralError(f"objective {name!r}={v} outside [0, 1]")

    @classmethod
    def from_mapping(cls, scores: Mapping[str, float]) -> "ObjectiveVector":
        return cls(tuple(scores), tuple(scores.values()))

    def __getitem__(self, objective_id: str) -> float:
        try:
            return self.values[self.ids.index(objective_id)]
        except ValueError:
            raise StructuralError(f"objective {objective_id!r} not in {self.ids}") from None

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.ids, self.values))

    def select(self, ids: Sequence[str]) -> tuple[float, ...]:
        return tuple(self[i] for i in ids)


class Kind(str, enum.Enum):
    SOP1 = "SOP1"
    SOP2 = "SOP2"
    MOP1 = "MOP1"
    MOP2 = "MOP2"
    MOP3 = "MOP3"

    @property
    def is_single(self) -> bool:
        return self in (Kind.SOP1, Kind.SOP2)


class Dominance(enum.Enum):
    FIRST = "FirstDominates"
    SECOND = "SecondDominates"
    INCOMPARABLE = "Incomparable"
    EQUAL = "Equal"

    def flipped(self) -> "Dominance":
        if self is Dominance.FIRST:
            return Dominance.SECOND
        if self is Dominance.SECOND:
            return Dominance.FIRST
        return self


@dataclass(frozen=True)
class FormulationSpec:
    """Which of the five formulations governs comparison and selection."""

    kind: Kind
    behavior_ids: tuple[str, ...]
    perf_id: str = PERF

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "behavior_ids", tuple(self.behavior_ids))
        if not self.behavior_ids:
            raise StructuralError("at least one behavior objective is required")
        if self.perf_id in self.behavior_ids or len(set(self.behavior_ids)) != len(self.behavior_ids):
            raise StructuralError("behavior ids must be distinct and exclude the performance id")

    @property
    def flat_ids(self) -> tuple[str, ...]:
        """The scalar objectives the formulation looks at, flattened."""
        if self.kind is Kind.SOP1:
            return (self.perf_id,)
        if self.kind in (Kind.SOP2, Kind.MOP1):
            return self.behavior_ids
        return (self.perf_id,) + self.behavior_ids

    @property
    def complexes(self) -> tuple[tuple[str, ...], ...]:
        """Priority-ordered complex objectives; only MOP2 has them."""
        if self.kind is not Kind.MOP2:
            raise UsageError(f"{self.kind.value} has no complex objectives")
        return tuple((self.perf_id, b) for b in self.behavior_ids)


def _check_same_ids(a: ObjectiveVector, b: ObjectiveVector):
    if a.ids != b.ids:
        raise StructuralError(f"mismatched objective sets {a.ids} vs {b.ids}")


def pareto_dominates(a: ObjectiveVector, b: ObjectiveVector, ids: Sequence[str]) -> bool:
    """True iff ``a`` is no worse than ``b`` on every id and better on one."""
    _check_same_ids(a, b)
    strict = False
    for i in ids:
        x, y = a[i], b[i]
        if x < y:
            return False
        if x > y:
            strict = True
    return strict


def _lex_cmp(a: ObjectiveVector, b: ObjectiveVector, components: Sequence[str]) -> int:
    for c in components:
        x, y = a[c], b[c]
        if x > y:
            return 1
        if x < y:
            return -1
    return 0


def _check_complexes(complexes: Sequence[Sequence[str]]):
    if not complexes:
        raise StructuralError("empty complex-objective list")
    for comp in complexes:
        if not comp or len(set(comp)) != len(comp):
            raise StructuralError(f"invalid complex objective {comp!r}")


def prioritized_dominates(
    a: ObjectiveVector, b: ObjectiveVector, complexes: Sequence[Sequence[str]]
) -> bool:
    """Dominance where each objective is a lexicographically compared tuple.

    Within a complex objective the first component decides; later components
    only break exact ties. ``a`` dominates when it is no worse on every complex
    and strictly better on at least one.
    """
    _check_complexes(complexes)
    _check_same_ids(a, b)
    strict = False
    for comp in complexes:
        c = _lex_cmp(a, b, comp)
        if c < 0:
            return False
        if c > 0:
            strict = True
    return strict


def scalarize(v: ObjectiveVector, f: FormulationSpec) -> float:
    if f.kind is Kind.SOP1:
        return v[f.perf_id]
    if f.kind is Kind.SOP2:
        return math.fsum(v[b] for b in f.behavior_ids)
    raise UsageError(f"cannot scalarize under multi-objective {f.kind.value}")


def compare(a: ObjectiveVector, b: ObjectiveVector, f: FormulationSpec) -> Dominance:
    _check_same_ids(a, b)
    if f.kind.is_single:
        x, y = scalarize(a, f), scalarize(b, f)
        if x > y:
            return Dominance.FIRST
        if x < y:
            return Dominance.SECOND
        return Dominance.EQUAL
    if a.select(f.flat_ids) == b.select(f.flat_ids):
        return Dominance.EQUAL
    if f.kind is Kind.MOP2:
        if prioritized_dominates(a, b, f.complexes):
            return Dominance.FIRST
        if prioritized_dominates(b, a, f.complexes):
            return Dominance.SECOND
        return Dominance.INCOMPARABLE
    if pareto_dominates(a, b, f.flat_ids):
        return Dominance.FIRST
    if pareto_dominates(b, a, f.flat_ids):
        return Dominance.SECOND
    return Dominance.INCOMPARABLE


def _as_matrix(pop: Sequence[ObjectiveVector], ids: Sequence[str]) -> np.ndarray:
    if not pop:
        raise StructuralError("empty population")
    first = pop[0].ids
    for v in pop:
        if v.ids != first:
            raise StructuralError(f"inconsistent objective sets {first} vs {v.ids}")
    return np.array([v.select(ids) for v in pop], dtype=float).reshape(len(pop), len(ids))


def _lex_greater(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise lexicographic ``a[i] > b[j]``; columns in priority order."""
    gt = np.zeros((a.shape[0], b.shape[0]), dtype=bool)
    for k in range(a.shape[1] - 1, -1, -1):
        x, y = a[:, k][:, None], b[:, k][None, :]
        gt = (x > y) | ((x == y) & gt)
    return gt


def dominance_matrix(pop: Sequence[ObjectiveVector], f: FormulationSpec) -> np.ndarray:
    """Boolean matrix ``D`` with ``D[i, j]`` true iff ``pop[i]`` dominates ``pop[j]``."""
    if f.kind.is_single:
        s = np.array([scalarize(v, f) for v in pop])
        _as_matrix(pop, f.flat_ids)
        return s[:, None] > s[None, :]
    if f.kind is Kind.MOP2:
        ge = np.ones((len(pop), len(pop)), dtype=bool)
        gt_any = np.zeros_like(ge)
        for comp in f.complexes:
            m = _as_matrix(pop, comp)
            gt = _lex_greater(m, m)
            ge &= ~gt.T
            gt_any |= gt
        return ge & gt_any
    m = _as_matrix(pop, f.flat_ids)
    ge = np.all(m[:, None, :] >= m[None, :, :], axis=2)
    gt = np.any(m[:, None, :] > m[None, :, :], axis=2)
    return ge & gt


def nondominated_sort(pop: Sequence[ObjectiveVector], f: FormulationSpec) -> list[list[int]]:
    """Stratify ``pop`` into fronts of mutually non-dominating indices.

    Single-objective kinds degenerate to levels of equal scalar value.
    """
    dom = dominance_matrix(pop, f)
    dominated_by = dom.sum(axis=0)
    remaining = np.ones(len(pop), dtype=bool)
    fronts = []
    while remaining.any():
        front = np.flatnonzero(remaining & (dominated_by == 0))
        fronts.append(front.tolist())
        remaining[front] = False
        dominated_by = dominated_by - dom[front].sum(axis=0)
    return fronts


def crowding_distance(front: Sequence[ObjectiveVector], ids: Sequence[str]) -> list[float]:
    if not front:
        raise StructuralError("empty front")
    n = len(front)
    if n <= 2:
        return [math.inf] * n
    m = _as_matrix(front, ids)
    dist = np.zeros(n)
    for k in range(m.shape[1]):
        col = m[:, k]
        lo, hi = col.min(), col.max()
        if hi == lo:
            continue
        order = np.argsort(col, kind="stable")
        dist[order[0]] = math.inf
        dist[order[-1]] = math.inf
        gaps = (col[order[2:]] - col[order[:-2]]) / (hi - lo)
        dist[order[1:-1]] += gaps
    return dist.tolist()


def _hv2d(m: np.ndarray) -> float:
    order = np.lexsort((-m[:, 1], -m[:, 0]))
    hv = 0.0
    y_max = 0.0
    for x, y in m[order]:
        if y > y_max:
            hv += x * (y - y_max)
            y_max = y
    return hv


def _hv3d(m: np.ndarray) -> float:
    m = m[np.argsort(-m[:, 2], kind="stable")]
    levels = np.unique(m[:, 2])[::-1]
    hv = 0.0
    for k, z in enumerate(levels):
        below = levels[k + 1] if k + 1 < len(levels) else 0.0
        if z <= 0.0:
            break
        hv += (z - below) * _hv2d(m[m[:, 2] >= z][:, :2])
    return hv


def hypervolume_array(points: np.ndarray) -> float:
    """Exact hypervolume of an ``(n, d)`` array against the origin, ``d`` in {2, 3}."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] not in (2, 3):
        raise UnsupportedDimensionError(f"hypervolume needs 2 or 3 objectives, got shape {points.shape}")
    if points.shape[0] == 0:
        return 0.0
    if points.shape[1] == 2:
        return _hv2d(points)
    return _hv3d(points)


def hypervolume(points: Sequence[ObjectiveVector], ids: Sequence[str]) -> float:
    """Lebesgue measure dominated by ``points`` in the ``ids`` subspace.

    The reference point is the origin; dominated points add nothing.
    """
    if len(ids) not in (2, 3):
        raise UnsupportedDimensionError(f"hypervolume supports 2 or 3 objectives, got {len(ids)}")
    if not points:
        return 0.0
    return hypervolume_array(_as_matrix(points, ids))


def _age_key(ind) -> tuple:
    return (ind.birth_iteration, ind.id)


def diverse_select(
    pop: Sequence,
    n: int,
    f: FormulationSpec,
    vectors: Sequence[ObjectiveVector] | None = None,
) -> list:
    """Choose ``n`` survivors from ``pop``.

    Multi-objective kinds fill whole fronts, then cut the splitting front by
    descending crowding distance over the flat objective ids. Single-objective
    kinds keep the top ``n`` scalars, older individuals first on ties.

    ``pop`` items need ``objectives``, ``birth_iteration`` and ``id``.
    ``vectors`` overrides the objective vectors used for comparison (for
    instance after population-level normalization). Survivors are returned in
    their input order.
    """
    if n < 1 or len(pop) < n:
        raise SelectionError(f"cannot select {n} from {len(pop)} individuals")
    if vectors is None:
        if any(ind.objectives is None for ind in pop):
            raise SelectionError("unevaluated individual entered selection")
        vectors = [ind.objectives for ind in pop]
    if len(vectors) != len(pop):
        raise StructuralError("one vector per individual required")

    if f.kind.is_single:
        scores = [scalarize(v, f) for v in vectors]
        ranked = sorted(range(len(pop)), key=lambda i: (-scores[i],) + _age_key(pop[i]))
        chosen = set(ranked[:n])
    else:
        chosen = set()
        for front in nondominated_sort(vectors, f):
            if len(chosen) + len(front) <= n:
                chosen.update(front)
                if len(chosen) == n:
                    break
                continue
            crowd = crowding_distance([vectors[i] for i in front], f.flat_ids)
            ranked = sorted(
                range(len(front)),
                key=lambda k: (-crowd[k],) + _age_key(pop[front[k]]),
            )
            chosen.update(front[k] for k in ranked[: n - len(chosen)])
            break
    return [ind for i, ind in enumerate(pop) if i in chosen]


def objective_matrix(pop: Iterable[ObjectiveVector], ids: Sequence[str]) -> np.ndarray:
    return _as_matrix(list(pop), ids)

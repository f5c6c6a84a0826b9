"""Population loop: mating, crossover, mutation, train/evaluate, diverse selection.

Offspring accumulate in a buffer; whenever it holds at least ``n``
individuals the population is replaced by a diversity-preserving selection
over parents and offspring and the buffer is cleared. One such selection is
one iteration.

Every random decision made for a child (mutation noise, training rollouts,
evaluation matches) comes from a generator seeded by ``(master_seed,
child_id)``, so the per-child pipeline can run in worker processes without
changing results. Mating and crossover draw from the master generator in the
parent process.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import Executor, ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from erlform import envs
from erlform.errors import EvaluationError, StructuralError, TrainingDivergenceError, UsageError
from erlform.moo import (
    Dominance,
    FormulationSpec,
    Kind,
    ObjectiveVector,
    compare,
    diverse_select,
    dominance_matrix,
    hypervolume,
)
from erlform.shaping import W_MAX, ShapingWeights, normalize_vectors
from erlform.trainer import TrainBudget, train

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Individual:
    id: int
    params: np.ndarray = field(repr=False, compare=False)
    weights: ShapingWeights
    objectives: ObjectiveVector | None = None
    birth_iteration: int = 0
    seed: int = 0
    parents: tuple[int, ...] = ()

    @property
    def evaluated(self) -> bool:
        return self.objectives is not None


@dataclass(frozen=True)
class EvolutionConfig:
    population: int = 16
    parents_per_round: int | None = None
    offspring_per_round: int | None = None
    mutation_sigma: float = 0.3
    crossover_rate: float = 0.5
    iterations: int = 50
    formulation: FormulationSpec = field(default_factory=lambda: FormulationSpec(Kind.MOP2, ("agg", "def")))
    budget: TrainBudget = field(default_factory=TrainBudget)
    pin_w_perf: bool = False
    reevaluate: bool = False

    def __post_init__(self):
        if self.population < 2:
            raise StructuralError("population must be >= 2")
        if self.u < 2 or self.v < 1:
            raise StructuralError("need at least 2 parents and 1 offspring per round")
        if self.iterations < 0:
            raise StructuralError("iterations must be >= 0")
        if self.mutation_sigma < 0 or not 0.0 <= self.crossover_rate <= 1.0:
            raise StructuralError("mutation_sigma must be >= 0 and crossover_rate in [0, 1]")

    @property
    def u(self) -> int:
        return self.parents_per_round if self.parents_per_round is not None else max(2, self.population // 2)

    @property
    def v(self) -> int:
        return self.offspring_per_round if self.offspring_per_round is not None else self.population


@dataclass
class Snapshot:
    """Population state right after one selection event (iteration 0: initial)."""

    iteration: int
    members: list[dict]
    discarded: int
    hv3d: float
    hv2d: float
    invariant_violations: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "members": self.members,
            "discarded": self.discarded,
            "hv3d": self.hv3d,
            "hv2d": self.hv2d,
            "invariant_violations": list(self.invariant_violations),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Snapshot":
        return cls(
            d["iteration"], d["members"], d["discarded"], d["hv3d"], d["hv2d"], list(d.get("invariant_violations", []))
        )


def individual_seed(master_seed: int, ind_id: int) -> int:
    return int(np.random.SeedSequence([master_seed, ind_id]).generate_state(1)[0])


def _child_streams(master_seed: int, ind_id: int, salt: int = 0) -> list[np.random.Generator]:
    """Independent generators for mutation, training and evaluation."""
    ss = np.random.SeedSequence([master_seed, ind_id, salt])
    return [np.random.default_rng(s) for s in ss.spawn(3)]


def evaluation_stream(master_seed: int, ind_id: int) -> np.random.Generator:
    """The generator an individual's birth evaluation was drawn from."""
    return _child_streams(master_seed, ind_id)[2]


def init_population(
    cfg: EvolutionConfig, env_cfg: envs.EnvConfig, master_seed: int, first_id: int = 0
) -> list[Individual]:
    """``n`` untrained individuals with independent params and uniform weights."""
    shape = envs.policy_shape(env_cfg)
    task_ids = envs.make_env(env_cfg).task_ids
    pop = []
    for k in range(cfg.population):
        ind_id = first_id + k
        seed = individual_seed(master_seed, ind_id)
        rng = np.random.default_rng(seed)
        params = shape.init(rng)
        w = rng.uniform(0.0, W_MAX, size=1 + len(task_ids))
        if cfg.pin_w_perf:
            w[0] = 1.0
        weights = ShapingWeights(w[0], tuple(zip(task_ids, w[1:])))
        pop.append(Individual(ind_id, params, weights, None, 0, seed))
    return pop


def comparison_vectors(pop: Sequence[Individual], f: FormulationSpec) -> list[ObjectiveVector]:
    """Vectors used to compare ``pop`` members under ``f``.

    SOP2 sums behavior scores, so they are min-max normalized over the given
    group first; other formulations are invariant to that map and use raw
    scores.
    """
    for ind in pop:
        if not ind.evaluated:
            raise UsageError(f"individual {ind.id} is not evaluated")
    vecs = [ind.objectives for ind in pop]
    if f.kind is Kind.SOP2:
        return normalize_vectors(vecs)
    return vecs


def mating(
    pop: Sequence[Individual],
    u: int,
    f: FormulationSpec,
    rng: np.random.Generator,
    vectors: Sequence[ObjectiveVector] | None = None,
) -> list[Individual]:
    """``u`` parents by binary tournament (pairs drawn with replacement)."""
    if vectors is None:
        vectors = comparison_vectors(pop, f)
    if u > len(pop):
        raise UsageError(f"cannot pick {u} parents from {len(pop)}")
    parents = []
    for _ in range(u):
        i, j = (int(x) for x in rng.integers(len(pop), size=2))
        rel = compare(vectors[i], vectors[j], f)
        if rel is Dominance.FIRST:
            win = i
        elif rel is Dominance.SECOND:
            win = j
        else:
            win = i if rng.random() < 0.5 else j
        parents.append(pop[win])
    return parents


def crossover(
    parents: Sequence[Individual],
    v: int,
    rate: float,
    rng: np.random.Generator,
    next_id: Callable[[], int] | None = None,
    master_seed: int = 0,
    birth_iteration: int = 0,
) -> list[Individual]:
    """Uniform crossover of shaping weights; the network comes from the first parent."""
    if len(parents) < 2:
        raise UsageError("crossover needs at least two parents")
    if next_id is None:
        counter = iter(range(max(p.id for p in parents) + 1, 1 << 62))
        next_id = lambda: next(counter)  # noqa: E731
    children = []
    for _ in range(v):
        a, b = (int(x) for x in rng.choice(len(parents), size=2, replace=False))
        first, second = parents[a], parents[b]
        wa, wb = first.weights.to_array(), second.weights.to_array()
        take_second = rng.random(len(wa)) < rate
        child_id = next_id()
        children.append(
            Individual(
                child_id,
                first.params.copy(),
                first.weights.with_array(np.where(take_second, wb, wa)),
                None,
                birth_iteration,
                individual_seed(master_seed, child_id),
                (first.id, second.id),
            )
        )
    return children


def mutate(child: Individual, sigma: float, rng: np.random.Generator, pin_w_perf: bool = False) -> Individual:
    """Log-normal multiplicative noise on every shaping weight, clipped to [0, W_MAX]."""
    if child.evaluated:
        raise UsageError("mutating an evaluated individual")
    w = child.weights.to_array()
    w = np.clip(w * np.exp(sigma * rng.standard_normal(len(w))), 0.0, W_MAX)
    if pin_w_perf:
        w[0] = child.weights.w_perf
    return replace(child, weights=child.weights.with_array(w))


@dataclass(frozen=True)
class _Job:
    ind: Individual
    env_cfg: object
    budget: TrainBudget
    sigma: float
    pin_w_perf: bool
    master_seed: int
    do_mutate: bool
    salt: int = 0


def develop(job: _Job) -> Individual | str:
    """mutate -> train -> evaluate for one child; a string signals divergence."""
    mut_rng, train_rng, eval_rng = _child_streams(job.master_seed, job.ind.id, job.salt)
    ind = job.ind
    if job.do_mutate:
        ind = mutate(ind, job.sigma, mut_rng, job.pin_w_perf)
    env = envs.make_env(job.env_cfg)
    shape = envs.policy_shape(job.env_cfg)
    try:
        params = train(shape, ind.params, env, ind.weights, job.budget, train_rng)
        report = envs.evaluate(params, job.env_cfg, eval_rng)
    except (TrainingDivergenceError, EvaluationError) as exc:
        return f"individual {ind.id}: {exc}"
    return replace(ind, params=params, objectives=report.objective_vector)


def reevaluate(job: _Job) -> Individual:
    _, _, eval_rng = _child_streams(job.master_seed, job.ind.id, job.salt)
    report = envs.evaluate(job.ind.params, job.env_cfg, eval_rng)
    return replace(job.ind, objectives=report.objective_vector)


def _map(executor: Executor | None, fn, items):
    if executor is None:
        return [fn(x) for x in items]
    return list(executor.map(fn, items))


def snapshot(
    iteration: int, pop: Sequence[Individual], f: FormulationSpec, discarded: int, violations=()
) -> Snapshot:
    members = [
        {
            "id": ind.id,
            "birth_iteration": ind.birth_iteration,
            "parents": list(ind.parents),
            "objectives": ind.objectives.as_dict(),
            "weights": ind.weights.as_dict(),
        }
        for ind in pop
    ]
    vecs = [ind.objectives for ind in pop]
    ids3 = (f.perf_id,) + f.behavior_ids
    hv3 = hypervolume(vecs, ids3) if len(ids3) == 3 else float("nan")
    hv2 = hypervolume(vecs, f.behavior_ids) if len(f.behavior_ids) == 2 else float("nan")
    return Snapshot(iteration, members, discarded, hv3, hv2, list(violations))


def _selection_violations(
    before: Sequence[Individual], after: Sequence[Individual], n: int, f: FormulationSpec
) -> list[str]:
    out = []
    if len(after) != n:
        out.append(f"population size {len(after)} != {n}")
    if any(not ind.evaluated for ind in after):
        out.append("unevaluated survivor")
    vecs = comparison_vectors(before, f)
    dom = dominance_matrix(vecs, f)
    index = {ind.id: k for k, ind in enumerate(before)}
    for ind in after:
        if dom[:, index[ind.id]].sum() >= n:
            out.append(f"survivor {ind.id} dominated by >= {n} members")
    if f.kind is Kind.SOP1:
        best = max(ind.objectives[f.perf_id] for ind in before)
        if max(ind.objectives[f.perf_id] for ind in after) != best:
            out.append("SOP1 elite lost")
    return out


def run(
    cfg: EvolutionConfig,
    env_cfg: envs.EnvConfig,
    master_seed: int,
    workers: int = 1,
    on_snapshot: Callable[[Snapshot], None] | None = None,
) -> tuple[list[Individual], list[Snapshot]]:
    """Evolve for ``cfg.iterations`` selection events.

    Returns the final population and one snapshot per iteration, iteration 0
    being the trained and evaluated initial population. ``workers > 1`` runs
    the per-child pipeline in a process pool; results do not depend on it.
    """
    f = cfg.formulation
    n = cfg.population
    executor = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        return _run(cfg, env_cfg, master_seed, f, n, executor, on_snapshot)
    finally:
        if executor is not None:
            executor.shutdown()


def _run(cfg, env_cfg, master_seed, f, n, executor, on_snapshot):
    rng = np.random.default_rng(np.random.SeedSequence([master_seed, 0x5E1EC7]))
    ids = iter(range(1 << 62))
    pop = init_population(cfg, env_cfg, master_seed)
    for _ in pop:
        next(ids)

    def job(ind, do_mutate, salt=0):
        return _Job(ind, env_cfg, cfg.budget, cfg.mutation_sigma, cfg.pin_w_perf, master_seed, do_mutate, salt)

    developed = _map(executor, develop, [job(ind, False) for ind in pop])
    failures = [d for d in developed if isinstance(d, str)]
    if failures:
        raise TrainingDivergenceError("initial population diverged: " + "; ".join(failures))
    pop = developed
    snaps = [snapshot(0, pop, f, 0)]
    if on_snapshot:
        on_snapshot(snaps[-1])

    queue: list[Individual] = []
    discarded = 0
    rounds_without_progress = 0
    max_idle = 10 * math.ceil(n / cfg.v) + 10
    iteration = 0
    while iteration < cfg.iterations:
        parents = mating(pop, cfg.u, f, rng, comparison_vectors(pop, f))
        children = crossover(parents, cfg.v, cfg.crossover_rate, rng, lambda: next(ids), master_seed, iteration + 1)
        results = _map(executor, develop, [job(c, True) for c in children])
        good = [r for r in results if not isinstance(r, str)]
        for msg in results:
            if isinstance(msg, str):
                log.warning("discarding diverged child, %s", msg)
        discarded += len(results) - len(good)
        queue.extend(good)
        rounds_without_progress = 0 if good else rounds_without_progress + 1
        if rounds_without_progress > max_idle:
            raise TrainingDivergenceError(f"no child survived training in {max_idle} consecutive rounds")
        if len(queue) < n:
            continue
        iteration += 1
        if cfg.reevaluate:
            pop = _map(executor, reevaluate, [job(ind, False, salt=iteration) for ind in pop])
        union = pop + queue
        survivors = diverse_select(union, n, f, comparison_vectors(union, f))
        queue = []
        violations = _selection_violations(union, survivors, n, f)
        pop = survivors
        snaps.append(snapshot(iteration, pop, f, discarded, violations))
        discarded = 0
        if on_snapshot:
            on_snapshot(snaps[-1])
    return pop, snaps

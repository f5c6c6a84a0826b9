import math

import numpy as np
import pytest

from erlform.envs import DuelConfig
from erlform.errors import StructuralError, UsageError
from erlform.evolution import (
    EvolutionConfig,
    Individual,
    Snapshot,
    crossover,
    init_population,
    mating,
    mutate,
    run,
)
from erlform.moo import FormulationSpec, Kind, ObjectiveVector
from erlform.shaping import ShapingWeights
from erlform.trainer import TrainBudget

BEHAVIORS = ("agg", "def")


def spec(kind):
    return FormulationSpec(kind, BEHAVIORS)


def ind(i, perf=0.5, agg=0.5, dfn=0.5, w=(1.0, 1.0, 1.0)):
    return Individual(
        i,
        np.full(3, float(i)),
        ShapingWeights(w[0], (("hit", w[1]), ("hurt", w[2]))),
        ObjectiveVector(("perf", "agg", "def"), (perf, agg, dfn)),
    )


def small_config(kind=Kind.SOP1, iterations=3, episodes=40):
    return EvolutionConfig(
        population=4,
        offspring_per_round=4,
        iterations=iterations,
        formulation=spec(kind),
        budget=TrainBudget(episodes=episodes),
    )


class TestInit:
    def test_distinct_ids_and_seeds(self):
        pop = init_population(EvolutionConfig(), DuelConfig(), 7)
        assert len({p.id for p in pop}) == len(pop) == 16
        assert len({p.seed for p in pop}) == 16

    def test_deterministic(self):
        a = init_population(EvolutionConfig(), DuelConfig(), 7)
        b = init_population(EvolutionConfig(), DuelConfig(), 7)
        assert a == b and all(np.array_equal(x.params, y.params) for x, y in zip(a, b))

    def test_weights_in_range_and_unevaluated(self):
        # 334 individuals x 3 weights: just over 1000 samples
        for p in init_population(EvolutionConfig(population=334), DuelConfig(), 3):
            assert np.all((p.weights.to_array() >= 0) & (p.weights.to_array() <= 4))
            assert not p.evaluated

    def test_pinned_perf_weight(self):
        pop = init_population(EvolutionConfig(pin_w_perf=True), DuelConfig(), 3)
        assert all(p.weights.w_perf == 1.0 for p in pop)

    def test_config_validation(self):
        with pytest.raises(StructuralError):
            EvolutionConfig(population=1)
        with pytest.raises(StructuralError):
            EvolutionConfig(crossover_rate=1.5)


class TestMating:
    def test_dominant_member_wins_three_quarters(self):
        # two members, pairs drawn with replacement: the better one wins 3/4
        pop = [ind(0, perf=0.9), ind(1, perf=0.1)]
        trials = 20_000
        rng = np.random.default_rng(0)
        wins = 0
        for _ in range(trials // 2):
            wins += sum(p.id == 0 for p in mating(pop, 2, spec(Kind.SOP1), rng))
        sigma = math.sqrt(0.75 * 0.25 / trials)
        assert abs(wins / trials - 0.75) < 3 * sigma

    def test_indifferent_population_is_uniform(self):
        pop = [ind(i) for i in range(5)]
        rng = np.random.default_rng(1)
        counts = np.zeros(5)
        for _ in range(2000):
            for p in mating(pop, 5, spec(Kind.MOP1), rng):
                counts[p.id] += 1
        expected = counts.sum() / 5
        chi2 = float(((counts - expected) ** 2 / expected).sum())
        assert chi2 < 18.47  # 0.999 quantile, 4 degrees of freedom

    def test_unevaluated_rejected(self):
        pop = [ind(0), Individual(1, np.zeros(3), ind(0).weights)]
        with pytest.raises(UsageError):
            mating(pop, 2, spec(Kind.SOP1), np.random.default_rng(0))


class TestCrossover:
    parents = [ind(0, w=(0.0, 0.0, 0.0)), ind(1, w=(4.0, 4.0, 4.0))]

    def test_rate_zero_copies_first_parent(self):
        for c in crossover(self.parents, 50, 0.0, np.random.default_rng(0)):
            first = self.parents[0] if c.parents[0] == 0 else self.parents[1]
            assert c.weights == first.weights
            assert np.array_equal(c.params, first.params)

    def test_rate_one_takes_second_parent(self):
        for c in crossover(self.parents, 50, 1.0, np.random.default_rng(0)):
            second = self.parents[1] if c.parents[0] == 0 else self.parents[0]
            assert c.weights == second.weights

    def test_half_rate_is_binomial(self):
        children = crossover(self.parents, 10_000, 0.5, np.random.default_rng(2))
        from_second = 0
        for c in children:
            src = 4.0 if c.parents[1] == 1 else 0.0
            from_second += int(np.sum(c.weights.to_array() == src))
        total = 3 * len(children)
        assert abs(from_second / total - 0.5) < 3 * math.sqrt(0.25 / total)

    def test_children_are_fresh(self):
        children = crossover(self.parents, 5, 0.5, np.random.default_rng(0), birth_iteration=4)
        assert [c.id for c in children] == [2, 3, 4, 5, 6]
        assert all(not c.evaluated and c.birth_iteration == 4 for c in children)

    def test_params_are_copied(self):
        c = crossover(self.parents, 1, 0.5, np.random.default_rng(0))[0]
        c.params[0] = 99.0
        assert self.parents[0].params[0] != 99.0 and self.parents[1].params[0] != 99.0


class TestMutate:
    def child(self, w):
        return Individual(9, np.zeros(3), ShapingWeights(w[0], (("hit", w[1]), ("hurt", w[2]))))

    def test_zero_sigma_is_identity(self):
        c = self.child((1.0, 2.0, 3.0))
        assert mutate(c, 0.0, np.random.default_rng(0)).weights == c.weights

    def test_zero_is_absorbing(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            assert mutate(self.child((0.0, 0.0, 0.0)), 1.0, rng).weights.to_array().tolist() == [0, 0, 0]

    def test_stays_in_bounds(self):
        rng = np.random.default_rng(0)
        child = self.child((3.9, 0.1, 2.0))
        draws = np.array([mutate(child, 2.0, rng).weights.to_array() for _ in range(33_334)])
        assert draws.size >= 100_000 and np.all((draws >= 0) & (draws <= 4))

    def test_pinned_perf_weight(self):
        w = mutate(self.child((1.0, 1.0, 1.0)), 1.0, np.random.default_rng(0), pin_w_perf=True).weights
        assert w.w_perf == 1.0

    def test_evaluated_rejected(self):
        with pytest.raises(UsageError):
            mutate(ind(0), 0.1, np.random.default_rng(0))


class TestRun:
    def test_zero_iterations(self):
        pop, snaps = run(small_config(iterations=0), DuelConfig(), 0)
        assert len(pop) == 4 and all(p.evaluated for p in pop)
        assert [s.iteration for s in snaps] == [0]

    def test_deterministic(self):
        a = run(small_config(Kind.MOP2, iterations=2), DuelConfig(), 5)[1]
        b = run(small_config(Kind.MOP2, iterations=2), DuelConfig(), 5)[1]
        assert [s.to_dict() for s in a] == [s.to_dict() for s in b]

    @pytest.mark.parametrize("kind", list(Kind))
    def test_invariants_hold(self, kind):
        pop, snaps = run(small_config(kind, iterations=2), DuelConfig(), 1)
        assert len(snaps) == 3
        assert all(s.invariant_violations == [] for s in snaps)
        assert all(len(s.members) == 4 for s in snaps)
        assert all(0.0 <= s.hv3d <= 1.0 and 0.0 <= s.hv2d <= 1.0 for s in snaps)

    def test_reevaluation_keeps_invariants(self):
        cfg = EvolutionConfig(population=4, offspring_per_round=4, iterations=2, formulation=spec(Kind.MOP3),
                              budget=TrainBudget(episodes=40), reevaluate=True)
        snaps = run(cfg, DuelConfig(), 1)[1]
        assert len(snaps) == 3 and all(s.invariant_violations == [] for s in snaps)

    def test_snapshot_round_trip(self):
        snaps = run(small_config(iterations=1), DuelConfig(), 2)[1]
        for s in snaps:
            assert Snapshot.from_dict(s.to_dict()) == s

    def test_snapshot_callback(self):
        seen = []
        run(small_config(iterations=2), DuelConfig(), 2, on_snapshot=seen.append)
        assert [s.iteration for s in seen] == [0, 1, 2]

    @pytest.mark.slow
    def test_learning_progress(self):
        improved = 0
        for seed in range(5):
            cfg = small_config(Kind.SOP1, iterations=3, episodes=100)
            snaps = run(cfg, DuelConfig(), seed)[1]
            mean_perf = [np.mean([m["objectives"]["perf"] for m in s.members]) for s in snaps]
            improved += mean_perf[-1] > mean_perf[0]
        assert improved >= 4

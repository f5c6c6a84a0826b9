"""End-to-end acceptance checks; each prints one PASS/FAIL line in the terminal summary."""

import itertools
import time

import numpy as np
import pytest
from conftest import ACCEPTANCE_LINES
from oracles import brute_force_fronts, monte_carlo_hypervolume, ref_dominates

from erlform.envs import TwoArmedBandit
from erlform.harness import ExperimentConfig, emit, run_experiment
from erlform.moo import (
    FormulationSpec,
    Kind,
    ObjectiveVector,
    hypervolume,
    hypervolume_array,
    nondominated_sort,
    pareto_dominates,
    prioritized_dominates,
)
from erlform.policy import PolicyShape, policy_forward
from erlform.shaping import RewardSample, ShapingWeights, shaped_reward
from erlform.trainer import TrainBudget, surrogate_gradient, surrogate_objective, train

pytestmark = pytest.mark.acceptance


def verdict(name: str, ok: bool, detail: str, elapsed: float | None = None) -> None:
    timing = f" [{elapsed:.1f}s]" if elapsed is not None else ""
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}{timing}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def test_dominance_axioms():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    triples = 100_000
    grid = (0.0, 0.5, 1.0)  # coarse values so ties and chains are common
    pools = {}
    for d in (2, 3):
        ids = ("perf", "agg", "def")[:d]
        pools[d] = (ids, [ObjectiveVector(ids, v) for v in itertools.product(grid, repeat=d)])
    complexes = [("perf", "agg"), ("perf", "def")]
    bad = {"irreflexive": 0, "asymmetric": 0, "transitive": 0, "prioritized": 0}
    for k in range(triples):
        ids, pool = pools[2 + k % 2]
        a, b, c = (pool[i] for i in rng.integers(len(pool), size=3))
        ab, ba = pareto_dominates(a, b, ids), pareto_dominates(b, a, ids)
        bad["irreflexive"] += pareto_dominates(a, a, ids)
        bad["asymmetric"] += ab and ba
        bad["transitive"] += ab and pareto_dominates(b, c, ids) and not pareto_dominates(a, c, ids)
        if len(ids) == 3:
            ref = ref_dominates(a.as_dict(), b.as_dict(), "MOP2", "perf", ("agg", "def"))
            bad["prioritized"] += prioritized_dominates(a, b, complexes) != ref
    elapsed = time.perf_counter() - t0
    ok = not any(bad.values()) and elapsed < 10
    verdict("dominance axioms", ok, f"{triples} triples, violations {bad}", elapsed)
    assert ok


def test_sorting_matches_brute_force():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    kinds = list(Kind)
    mismatches = 0
    for k in range(1000):
        kind = kinds[k % len(kinds)]
        behaviors = ("agg", "def")[: 1 + int(rng.integers(2))]
        ids = ("perf", *behaviors)
        n = int(rng.integers(1, 65))
        values = rng.integers(0, 6, size=(n, len(ids))) / 5  # ties on a coarse grid
        pop = [ObjectiveVector(ids, tuple(row)) for row in values]
        f = FormulationSpec(kind, behaviors)
        expected = brute_force_fronts(
            [v.as_dict() for v in pop], lambda a, b, k=kind.value, bs=behaviors: ref_dominates(a, b, k, "perf", bs)
        )
        mismatches += [sorted(fr) for fr in nondominated_sort(pop, f)] != expected
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 30
    verdict("non-dominated sort vs brute force", ok, f"1000 populations, {mismatches} mismatches", elapsed)
    assert ok


def test_hypervolume_matches_monte_carlo():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    outside = []
    for k in range(100):
        d = 2 + k % 2
        pts = rng.random((int(rng.integers(1, 11)), d))
        est, se = monte_carlo_hypervolume(pts, 10**6, rng)
        exact = hypervolume_array(pts)
        if abs(exact - est) > 3 * se:
            outside.append((k, exact, est, se))
    unit = ObjectiveVector(("a", "b"), (1.0, 1.0))
    pair = [ObjectiveVector(("a", "b"), (1.0, 0.5)), ObjectiveVector(("a", "b"), (0.5, 1.0))]
    fixtures = [
        (hypervolume([unit], ("a", "b")), 1.0),
        (hypervolume(pair, ("a", "b")), 0.75),
        (hypervolume_array(np.array([[1.0, 1.0, 1.0]])), 1.0),
        (hypervolume_array(np.array([[1.0, 0.5, 1.0], [0.5, 1.0, 1.0]])), 0.75),
    ]
    fixtures_ok = all(abs(got - want) <= 1e-12 for got, want in fixtures)
    elapsed = time.perf_counter() - t0
    ok = not outside and fixtures_ok and elapsed < 60
    verdict("exact hypervolume vs Monte Carlo", ok,
            f"100 sets, {len(outside)} outside 3 sigma, fixtures exact={fixtures_ok}", elapsed)
    assert ok


def test_mop2_front_is_perf_argmax():
    rng = np.random.default_rng(3)
    f = FormulationSpec(Kind.MOP2, ("agg", "def"))
    failures = 0
    for _ in range(1000):
        n = int(rng.integers(2, 40))
        perf = rng.permutation(n) / n  # pairwise distinct
        beh = rng.random((n, 2))
        pop = [ObjectiveVector(("perf", "agg", "def"), (perf[i], *beh[i])) for i in range(n)]
        failures += nondominated_sort(pop, f)[0] != [int(np.argmax(perf))]
    verdict("MOP2 front 0 is the perf argmax", failures == 0, f"1000 populations, {failures} failures")
    assert failures == 0


def test_trainer_sanity():
    t0 = time.perf_counter()
    shape, w = PolicyShape(1, 2), ShapingWeights(1.0, ())
    probs = []
    for seed in range(10):
        rng = np.random.default_rng(seed)
        out = train(shape, shape.init(rng), TwoArmedBandit(), w, TrainBudget(episodes=500), rng)
        probs.append(float(policy_forward(shape, out, np.ones(1))[0]))

    rng = np.random.default_rng(11)
    toy = PolicyShape(4, 3)
    worst = 0.0
    for beta in (0.0, 0.05):
        params = toy.init(rng) * 10
        obs, actions, adv = rng.standard_normal((3, 4)), rng.integers(3, size=3), rng.standard_normal(3)
        g = surrogate_gradient(toy, params, obs, actions, adv, beta)
        h = 1e-4
        fd = np.empty_like(params)
        for i in range(params.size):
            e = np.zeros_like(params)
            e[i] = h
            fd[i] = (surrogate_objective(toy, params + e, obs, actions, adv, beta)
                     - surrogate_objective(toy, params - e, obs, actions, adv, beta)) / (2 * h)
        worst = max(worst, float(np.linalg.norm(g - fd) / np.linalg.norm(fd)))
    elapsed = time.perf_counter() - t0
    ok = all(p > 0.9 for p in probs) and worst < 1e-3 and elapsed < 20
    verdict("trainer sanity", ok,
            f"bandit P(best) min {min(probs):.3f} over 10 seeds, gradient rel. error {worst:.1e}", elapsed)
    assert ok


def test_pipeline_is_deterministic(tmp_path):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(formulations=("MOP2",), seeds=(0,), iterations=3, evolution={"population": 8})
    outputs = []
    for k, workers in enumerate((1, 1, 4)):
        out = tmp_path / f"out{k}"
        emit(run_experiment(cfg, workers=workers), out)
        outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    elapsed = time.perf_counter() - t0
    ok = outputs[0] == outputs[1] == outputs[2] and elapsed < 300
    verdict("byte-identical outputs", ok, f"{len(outputs[0])} files, 2 executions and workers 1/4", elapsed)
    assert ok


# ---- desk-scale trends on the duel ----------------------------------------------------------

TREND_SEEDS = (0, 1, 2, 3, 4)


@pytest.fixture(scope="module")
def trend_runs():
    t0 = time.perf_counter()
    cfg = ExperimentConfig(seeds=TREND_SEEDS, iterations=15, evolution={"population": 16})
    records = run_experiment(cfg)
    elapsed = time.perf_counter() - t0
    return {(r.formulation, r.seed): r for r in records}, elapsed


def behavior_spread(rec) -> float:
    pts = np.array([[m["objectives"][b] for b in rec.behavior_ids] for m in rec.final.members])
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt((diff**2).sum(-1))
    n = len(pts)
    return float(dist.sum() / (n * (n - 1)))


def test_multi_objective_runs_are_more_diverse(trend_runs):
    runs, elapsed = trend_runs
    assert all(r.ok for r in runs.values()), [r.error for r in runs.values() if not r.ok]
    wins, parts = 0, []
    for seed in TREND_SEEDS:
        spread = {f: behavior_spread(runs[f, seed]) for f in ("SOP1", "SOP2", "MOP1", "MOP3")}
        wins += min(spread["MOP1"], spread["MOP3"]) > max(spread["SOP1"], spread["SOP2"])
        parts.append("/".join(f"{spread[f]:.4f}" for f in ("SOP1", "SOP2", "MOP1", "MOP3")))
    ok = wins >= 4 and elapsed < 1800
    verdict("behavior diversity MOP1,MOP3 > SOP1,SOP2", ok,
            f"{wins}/5 seeds; spread SOP1/SOP2/MOP1/MOP3 per seed: {'; '.join(parts)}", elapsed)
    assert ok


def test_mop1_hypervolume_at_least_mop2(trend_runs):
    runs, _ = trend_runs
    med = {f: float(np.sort([runs[f, s].final_hv2d for s in TREND_SEEDS])[2]) for f in ("MOP1", "MOP2")}
    ok = med["MOP1"] >= med["MOP2"]
    verdict("median behavior hypervolume MOP1 >= MOP2", ok, f"MOP1 {med['MOP1']:.4f}, MOP2 {med['MOP2']:.4f}")
    assert ok


def test_shaping_linearity():
    rng = np.random.default_rng(9)
    tasks = ("hit", "hurt", "aim")
    worst_lin = worst_zero = 0.0
    for _ in range(20_000):
        r = rng.uniform(-10, 10, 4)
        s = RewardSample(r[0], tuple(zip(tasks, r[1:])))
        w1, w2 = rng.uniform(0, 2, 4), rng.uniform(0, 2, 4)
        alpha, beta = rng.uniform(0, 1, 2)
        make = lambda v: ShapingWeights(v[0], tuple(zip(tasks, v[1:])))  # noqa: E731
        lhs = shaped_reward(s, make(alpha * w1 + beta * w2))
        rhs = alpha * shaped_reward(s, make(w1)) + beta * shaped_reward(s, make(w2))
        worst_lin = max(worst_lin, abs(lhs - rhs))
        worst_zero = max(worst_zero, abs(shaped_reward(s, make(np.zeros(4)))))
    ok = worst_lin <= 1e-12 and worst_zero <= 1e-12
    verdict("shaping linearity and annihilation", ok,
            f"20000 cases, max deviation {worst_lin:.1e}, zero-weight max {worst_zero:.1e}")
    assert ok


def test_selection_invariants(trend_runs):
    runs, _ = trend_runs
    problems = []
    events = 0
    for (f, seed), rec in runs.items():
        for prev, snap in zip(rec.snapshots, rec.snapshots[1:]):
            events += 1
            problems += [f"{f}/{seed}/{snap.iteration}: {v}" for v in snap.invariant_violations]
            if len(snap.members) != 16:
                problems.append(f"{f}/{seed}/{snap.iteration}: size {len(snap.members)}")
            # a stale offspring buffer would let children from earlier rounds appear late
            old = {m["id"] for m in prev.members}
            stale = [m["id"] for m in snap.members if m["id"] not in old and m["birth_iteration"] != snap.iteration]
            if stale:
                problems.append(f"{f}/{seed}/{snap.iteration}: stale offspring {stale}")
            if f == "SOP1":
                best_before = max(m["objectives"]["perf"] for m in prev.members)
                if max(m["objectives"]["perf"] for m in snap.members) < best_before:
                    problems.append(f"{f}/{seed}/{snap.iteration}: elite lost")
    ok = not problems
    verdict("selection invariants", ok, f"{events} selection events, {len(problems)} violations")
    assert ok, problems[:10]

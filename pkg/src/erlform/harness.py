"""Experiment orchestration: formulations x seeds, run ranking, summaries and file output."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np
import yaml

from erlform import envs
from erlform.errors import ConfigError, ErlformError, UsageError
from erlform.evolution import EvolutionConfig, Snapshot, evaluation_stream, run
from erlform.moo import PERF, FormulationSpec, Kind
from erlform.trainer import TrainBudget

log = logging.getLogger(__name__)

ENV_CONFIGS = {"duel": envs.DuelConfig, "rally": envs.RallyConfig}
PERF_THRESHOLDS = {"duel": 0.95, "rally": 0.5}
ALL_FORMULATIONS = tuple(k.value for k in Kind)

_EVOLUTION_KEYS = ("population", "parents_per_round", "offspring_per_round", "mutation_sigma",
                   "crossover_rate", "pin_w_perf", "reevaluate")
_BUDGET_KEYS = tuple(f.name for f in dataclasses.fields(TrainBudget))


def _fmt(x) -> str:
    if isinstance(x, float):
        return "nan" if math.isnan(x) else f"{x:.6f}"
    return str(x)


@dataclass(frozen=True)
class ExperimentConfig:
    env_kind: str = "duel"
    formulations: tuple[str, ...] = ALL_FORMULATIONS
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4, 5)
    iterations: int = 50
    evolution: dict = field(default_factory=dict)
    budget: dict = field(default_factory=dict)
    env: dict = field(default_factory=dict)
    output_dir: str = "results"
    rank_by: str = "3d"
    perf_threshold: float | None = None
    export_traces: bool = False

    def __post_init__(self):
        if self.env_kind not in ENV_CONFIGS:
            raise ConfigError(f"env_kind must be one of {sorted(ENV_CONFIGS)}, got {self.env_kind!r}")
        object.__setattr__(self, "formulations", tuple(self.formulations))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.formulations or not self.seeds:
            raise ConfigError("need at least one formulation and one seed")
        bad = [f for f in self.formulations if f not in ALL_FORMULATIONS]
        if bad:
            raise ConfigError(f"unknown formulations {bad}")
        if self.rank_by not in ("3d", "2d"):
            raise ConfigError("rank_by must be '3d' or '2d'")
        for name, allowed in (("evolution", _EVOLUTION_KEYS), ("budget", _BUDGET_KEYS),
                              ("env", self._env_keys())):
            unknown = set(getattr(self, name)) - set(allowed)
            if unknown:
                raise ConfigError(f"unknown {name} keys {sorted(unknown)}")
        # build once so that bad values fail at load time
        self.env_config()
        self.evolution_config(self.formulations[0])

    def _env_keys(self) -> tuple[str, ...]:
        return tuple(f.name for f in dataclasses.fields(ENV_CONFIGS[self.env_kind]))

    @property
    def threshold(self) -> float:
        return PERF_THRESHOLDS[self.env_kind] if self.perf_threshold is None else self.perf_threshold

    def env_config(self) -> envs.EnvConfig:
        try:
            return ENV_CONFIGS[self.env_kind](**self.env)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad environment settings: {exc}") from exc

    def evolution_config(self, formulation: str) -> EvolutionConfig:
        f = FormulationSpec(Kind(formulation), envs.behavior_ids(self.env_config()))
        try:
            return EvolutionConfig(iterations=self.iterations, formulation=f,
                                   budget=TrainBudget(**self.budget), **self.evolution)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad evolution settings: {exc}") from exc

    @classmethod
    def from_mapping(cls, d: dict) -> "ExperimentConfig":
        """Build from one flat key/value mapping, routing keys to their section."""
        top = {f.name for f in dataclasses.fields(cls)} - {"evolution", "budget", "env"}
        env_kind = d.get("env_kind", "duel")
        if env_kind not in ENV_CONFIGS:
            raise ConfigError(f"env_kind must be one of {sorted(ENV_CONFIGS)}, got {env_kind!r}")
        env_keys = {f.name for f in dataclasses.fields(ENV_CONFIGS[env_kind])}
        kw: dict = {"evolution": {}, "budget": {}, "env": {}}
        for key, value in d.items():
            if key in top:
                kw[key] = value
            elif key in _EVOLUTION_KEYS:
                kw["evolution"][key] = value
            elif key in _BUDGET_KEYS:
                kw["budget"][key] = value
            elif key in env_keys:
                kw["env"][key] = value
            else:
                raise ConfigError(f"unknown config key {key!r}")
        return cls(**kw)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            data = yaml.safe_load(Path(path).read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must be a flat mapping")
        return cls.from_mapping(data)


@dataclass
class RunRecord:
    formulation: str
    seed: int
    env_kind: str
    perf_id: str
    behavior_ids: tuple[str, ...]
    snapshots: list[Snapshot] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    error: str | None = None
    # debugging aid, written as NDJSON when present and never part of the JSON record
    traces: list[dict] = field(default_factory=list, compare=False, repr=False)

    @property
    def ok(self) -> bool:
        return self.error is None and bool(self.snapshots)

    @property
    def final(self) -> Snapshot:
        return self.snapshots[-1]

    @property
    def final_hv3d(self) -> float:
        return self.final.hv3d if self.ok else float("nan")

    @property
    def final_hv2d(self) -> float:
        return self.final.hv2d if self.ok else float("nan")

    def to_dict(self) -> dict:
        return {
            "formulation": self.formulation,
            "seed": self.seed,
            "env_kind": self.env_kind,
            "perf_id": self.perf_id,
            "behavior_ids": list(self.behavior_ids),
            "final_hv3d": self.final_hv3d,
            "final_hv2d": self.final_hv2d,
            "summary": self.summary,
            "error": self.error,
            "snapshots": [s.to_dict() for s in self.snapshots],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        return cls(
            d["formulation"],
            d["seed"],
            d["env_kind"],
            d["perf_id"],
            tuple(d["behavior_ids"]),
            [Snapshot.from_dict(s) for s in d["snapshots"]],
            d.get("summary", {}),
            d.get("error"),
        )


def run_summary(members: Sequence[dict], perf_id: str, behavior_ids: Sequence[str], threshold: float) -> dict:
    """Maxima of every objective and the fraction strictly above the perf threshold."""
    out = {f"max_{k}": max(m["objectives"][k] for m in members) for k in (perf_id, *behavior_ids)}
    out["frac_perf_above"] = sum(m["objectives"][perf_id] > threshold for m in members) / len(members)
    return out


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> list[RunRecord]:
    """One record per (formulation, seed), formulations outermost.

    A failing run is recorded with its error and does not stop the others.
    """
    env_cfg = cfg.env_config()
    bids = envs.behavior_ids(env_cfg)
    records = []
    for formulation in cfg.formulations:
        evo = cfg.evolution_config(formulation)
        for seed in cfg.seeds:
            rec = RunRecord(formulation, seed, cfg.env_kind, PERF, bids)
            log.info("run %s seed %d", formulation, seed)
            try:
                pop, snaps = run(evo, env_cfg, seed, workers=workers)
            except (ErlformError, ArithmeticError, ValueError) as exc:
                log.error("run %s seed %d failed: %s", formulation, seed, exc)
                rec.error = f"{type(exc).__name__}: {exc}"
            else:
                rec.snapshots = snaps
                if cfg.export_traces:
                    rec.traces = final_traces(pop, env_cfg, seed)
                rec.summary = run_summary(snaps[-1].members, PERF, bids, cfg.threshold)
            records.append(rec)
    return records


def final_traces(pop, env_cfg: envs.EnvConfig, seed: int) -> list[dict]:
    """Replay each final member's evaluation on its own stream, one dict per match.

    The matches are the ones that produced the member's stored objectives.
    """
    out = []
    for ind in pop:
        report = envs.evaluate(ind.params, env_cfg, evaluation_stream(seed, ind.id))
        out += [{"id": ind.id, "match": k, **tr.to_dict()} for k, tr in enumerate(report.traces)]
    return out


def run_score(rec: RunRecord, rank_by: str = "3d") -> float:
    """Hypervolume for multi-objective runs, best final scalar for single-objective ones."""
    kind = Kind(rec.formulation)
    if kind is Kind.SOP1:
        return max(m["objectives"][rec.perf_id] for m in rec.final.members)
    if kind is Kind.SOP2:
        return max(sum(m["objectives"][b] for b in rec.behavior_ids) for m in rec.final.members)
    return rec.final_hv3d if rank_by == "3d" else rec.final_hv2d


class Ranking(NamedTuple):
    best: RunRecord
    median: RunRecord
    worst: RunRecord


def rank_runs(records: Iterable[RunRecord], rank_by: str = "3d") -> Ranking:
    """Best, lower-median and worst run; ties go to the lower seed being ranked lower."""
    ok = [r for r in records if r.ok]
    if not ok:
        raise UsageError("no successful runs to rank")
    ordered = sorted(ok, key=lambda r: (run_score(r, rank_by), r.seed))
    return Ranking(ordered[-1], ordered[(len(ordered) - 1) // 2], ordered[0])


def _by_formulation(records: Iterable[RunRecord]) -> dict[str, list[RunRecord]]:
    groups: dict[str, list[RunRecord]] = {}
    for r in records:
        groups.setdefault(r.formulation, []).append(r)
    return {f: groups[f] for f in ALL_FORMULATIONS if f in groups}


def summarize(records: Iterable[RunRecord], threshold: float | None = None) -> list[dict]:
    """Per formulation: per-seed maxima and above-threshold fractions, averaged over seeds.

    With ``threshold`` unset the value stored in each record's summary is used.
    """
    rows = []
    for formulation, recs in _by_formulation(records).items():
        ok = [r for r in recs if r.ok]
        row = {"formulation": formulation, "runs": len(ok), "failed": len(recs) - len(ok)}
        if ok:
            per_seed = [
                run_summary(r.final.members, r.perf_id, r.behavior_ids, threshold) if threshold is not None
                else r.summary
                for r in ok
            ]
            keys = [f"max_{k}" for k in (ok[0].perf_id, *ok[0].behavior_ids)] + ["frac_perf_above"]
            for key in keys:
                row[key] = float(np.mean([s[key] for s in per_seed]))
        rows.append(row)
    return rows


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    return _write_text(path, buf.getvalue())


def _write_text(path: Path, text: str) -> Path:
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def _summary_table(records, threshold) -> tuple[list[str], list[list]]:
    rows = summarize(records, threshold)
    keys = ["formulation", "runs", "failed"]
    for row in rows:
        keys += [k for k in row if k not in keys]
    return keys, [[row.get(k, float("nan")) for k in keys] for row in rows]


def write_reports(records: Sequence[RunRecord], out_dir: Path, rank_by: str = "3d",
                  threshold: float | None = None) -> list[Path]:
    """``summary.csv`` and ``ranking.csv``, recomputable from the stored records alone."""
    header, rows = _summary_table(records, threshold)
    summary = _write_csv(out_dir / "summary.csv", header, rows)
    ranking_rows = []
    for formulation, recs in _by_formulation(records).items():
        if not any(r.ok for r in recs):
            continue
        for label, rec in zip(Ranking._fields, rank_runs(recs, rank_by)):
            ranking_rows.append([formulation, label, rec.seed, run_score(rec, rank_by), rec.final_hv3d, rec.final_hv2d])
    ranking = _write_csv(out_dir / "ranking.csv", ["formulation", "rank", "seed", "score", "hv3d", "hv2d"], ranking_rows)
    return [summary, ranking]


def emit(records: Sequence[RunRecord], out_dir: str | Path, rank_by: str = "3d",
         threshold: float | None = None) -> list[Path]:
    """Write every output file for ``records`` into ``out_dir``; returns the paths written."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out}: {exc}") from exc
    written = []
    hv_rows = []
    corr: dict[str, list[list]] = {}
    for rec in records:
        stem = f"{rec.formulation}_{rec.seed}"
        written.append(_write_text(out / f"run_{stem}.json", json.dumps(rec.to_dict(), indent=1, sort_keys=True) + "\n"))
        if rec.traces:
            lines = "".join(json.dumps(t, sort_keys=True) + "\n" for t in rec.traces)
            written.append(_write_text(out / f"traces_{stem}.ndjson", lines))
        if not rec.ok:
            continue
        scatter = [
            [s.iteration, m["id"], m["objectives"][rec.perf_id], *(m["objectives"][b] for b in rec.behavior_ids)]
            for s in rec.snapshots
            for m in s.members
        ]
        written.append(_write_csv(out / f"scatter_{stem}.csv", ["iteration", "id", rec.perf_id, *rec.behavior_ids], scatter))
        hv_rows += [[rec.formulation, rec.seed, s.iteration, s.hv3d, s.hv2d] for s in rec.snapshots]
        for b in rec.behavior_ids:
            corr.setdefault(b, []).extend(
                [rec.formulation, rec.seed, m["id"], m["objectives"][rec.perf_id], m["objectives"][b]]
                for m in rec.final.members
            )
    written.append(_write_csv(out / "hypervolume_series.csv", ["formulation", "seed", "iteration", "hv3d", "hv2d"], hv_rows))
    for b, rows in corr.items():
        written.append(_write_csv(out / f"correlation_{b}.csv", ["formulation", "seed", "id", PERF, b], rows))
    return written + write_reports(records, out, rank_by, threshold)


def load_records(in_dir: str | Path) -> list[RunRecord]:
    paths = sorted(Path(in_dir).glob("run_*.json"))
    records = []
    for p in paths:
        try:
            records.append(RunRecord.from_dict(json.loads(p.read_text())))
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise ErlformError(f"cannot load run record {p}: {exc}") from exc
    order = {f: i for i, f in enumerate(ALL_FORMULATIONS)}
    return sorted(records, key=lambda r: (order.get(r.formulation, 99), r.seed))

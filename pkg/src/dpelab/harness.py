"""Experiment orchestration: configs, the lock-step round loop, traces and summaries."""

from __future__ import annotations

import csv
import json
import logging
import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .agents import DPEPlayer, Follower, Leader, ProtocolViolation
from .baselines import CentralizedController, OracleTeam, RandomHopTeam
from .diagnostics import (
    BadRoundCounter,
    ConcentrationExperiment,
    InstanceTruth,
    RegretMeter,
    RoundCounters,
    lemma1_monte_carlo,
    lemma2_constant,
    lower_bound_constant,
)
from .env import ArmMeans, Environment, mix64
from .index import DEFAULT_TOLERANCE

log = logging.getLogger(__name__)

ALGORITHMS = ("dpe", "centralized", "oracle", "random")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
        self.message = message


def default_checkpoints(T: int) -> list[int]:
    points = []
    p = 100
    while p < T:
        points.append(p)
        p *= 10
    points.append(T)
    return points


@dataclass
class Config:
    K: int
    M: int
    means: list[float]
    T: int
    seeds: list[int] = field(default_factory=lambda: [0])
    algorithm: str = "dpe"
    checkpoints: list[int] = field(default_factory=list)
    output_path: str = ""
    tolerance: float = DEFAULT_TOLERANCE
    truncation: int = 1_000_000
    workers: int = 1
    instrument: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.K < 2:
            raise ConfigError("K", f"need at least 2 arms, got {self.K}")
        if len(self.means) != self.K:
            raise ConfigError("means", f"expected {self.K} values, got {len(self.means)}")
        try:
            ArmMeans(self.means)
        except ValueError as exc:
            raise ConfigError("means", str(exc)) from None
        if not 1 <= self.M < self.K:
            raise ConfigError("M", f"need 1 <= M < K={self.K}, got {self.M}")
        if self.T < 1:
            raise ConfigError("T", f"horizon must be positive, got {self.T}")
        if not self.seeds:
            raise ConfigError("seeds", "no seeds given")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError("algorithm", f"unknown algorithm {self.algorithm!r}")
        if not self.checkpoints:
            self.checkpoints = default_checkpoints(self.T)
        if self.checkpoints != sorted(set(self.checkpoints)):
            raise ConfigError("checkpoints", "must be strictly increasing")
        if self.checkpoints[0] < 1 or self.checkpoints[-1] > self.T:
            raise ConfigError("checkpoints", f"must lie in 1..T={self.T}")
        if not 0 < self.tolerance <= 1e-6:
            raise ConfigError("tolerance", f"must lie in (0, 1e-6], got {self.tolerance}")
        if self.truncation < 10_000:
            raise ConfigError("truncation", f"must be at least 10000, got {self.truncation}")
        if self.workers < 1:
            raise ConfigError("workers", "must be positive")


_ALIASES = {
    "horizon": "T",
    "algo": "algorithm",
    "out": "output_path",
    "output": "output_path",
}


def _convert(key: str, raw) -> object:
    try:
        if key in ("K", "M", "truncation", "workers"):
            return int(raw)
        if key == "T":
            return int(float(raw)) if isinstance(raw, str) else int(raw)
        if key == "tolerance":
            return float(raw)
        if key == "means":
            if isinstance(raw, str):
                return [float(x) for x in raw.split(",") if x.strip()]
            return [float(x) for x in raw]
        if key == "checkpoints":
            if isinstance(raw, str):
                return [int(float(x)) for x in raw.split(",") if x.strip()]
            return [int(x) for x in raw]
        if key == "seeds":
            if isinstance(raw, int):
                return list(range(raw))
            if isinstance(raw, str):
                if raw.startswith("[") and raw.endswith("]"):
                    return [int(p) for p in raw[1:-1].split(",") if p.strip()]
                parts = [p for p in raw.split(",") if p.strip()]
                if len(parts) == 1:
                    return list(range(int(parts[0])))
                return [int(p) for p in parts]
            return [int(x) for x in raw]
        if key == "instrument":
            if isinstance(raw, str):
                if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(raw)
                return raw.lower() in ("true", "1", "yes")
            return bool(raw)
        return str(raw)
    except (TypeError, ValueError):
        raise ConfigError(key, f"cannot parse value {raw!r}") from None


def parse_config(text: str) -> Config:
    """Parse ``key=value`` tokens (whitespace or newline separated) or a JSON object.

    ``seeds`` is either a count (``seeds=50`` means 0..49), a comma list
    with at least two seeds, or a bracketed list such as ``seeds=[7]``.
    """
    text = text.strip()
    if text.startswith("{"):
        try:
            items = dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError("<document>", f"invalid JSON: {exc}") from None
    else:
        items = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0]
            for token in line.split():
                key, sep, value = token.partition("=")
                if not sep:
                    raise ConfigError(token, "expected key=value")
                items[key] = value
    names = {f.name for f in fields(Config)}
    values = {}
    for key, raw in items.items():
        name = _ALIASES.get(key, key)
        if name not in names:
            raise ConfigError(key, "unknown key")
        values[name] = _convert(name, raw)
    for required in ("K", "M", "means", "T"):
        if required not in values:
            raise ConfigError(required, "missing required key")
    return Config(**values)


@dataclass
class TraceRow:
    run_id: int
    seed: int
    algorithm: str
    K: int
    M: int
    t: int
    cum_regret_zeroed: float
    cum_regret_literal: float
    comm_phases: int
    comm_rounds: int
    init_rounds: int
    collisions: int
    set_changes: int


TRACE_COLUMNS = [f.name for f in fields(TraceRow)]
CUMULATIVE_COLUMNS = TRACE_COLUMNS[6:]


@dataclass
class RunResult:
    run_id: int
    seed: int
    rows: list[TraceRow]
    counters: dict[int, RoundCounters] = field(default_factory=dict)
    init_rounds: int = 0
    ranks: list[int] = field(default_factory=list)
    held_arms: list[int] = field(default_factory=list)
    consistent_rounds: int = 0
    consistent_collisions: int = 0
    unexplained_bad_rounds: int = 0
    phase_active_at_end: bool = False
    error: str | None = None


@dataclass
class RunSummary:
    algorithm: str
    K: int
    M: int
    seeds: int
    lower_bound_constant: float
    checkpoints: list[int]
    mean: dict[str, list[float]]
    std: dict[str, list[float]]
    errors: list[str] = field(default_factory=list)

    def at(self, column: str, t: int) -> float:
        return self.mean[column][self.checkpoints.index(t)]

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


class _Recorder:
    def __init__(self, cfg: Config, run_id: int, seed: int):
        self.cfg = cfg
        self.run_id = run_id
        self.seed = seed
        self.rows: list[TraceRow] = []
        self.points = list(cfg.checkpoints)
        self.next = self.points[0]
        self._i = 0

    def due(self, t: int) -> bool:
        return t == self.next

    def record(self, t: int, meter: RegretMeter, phases=0, comm_rounds=0, init_rounds=0,
               collisions=0, set_changes=0) -> None:
        cfg = self.cfg
        self.rows.append(TraceRow(
            self.run_id, self.seed, cfg.algorithm, cfg.K, cfg.M, t,
            meter.zeroed, meter.literal, phases, comm_rounds, init_rounds, collisions,
            set_changes,
        ))
        self._i += 1
        self.next = self.points[self._i] if self._i < len(self.points) else -1


def _collision_count(selections: Sequence[int], hit: frozenset[int]) -> int:
    return sum(1 for a in selections if a in hit)


def run_dpe(cfg: Config, seed: int, run_id: int = 0) -> RunResult:
    """One decentralized run: initialization then exploration-exploitation up to T."""
    means = ArmMeans(cfg.means)
    K, M, T = cfg.K, cfg.M, cfg.T
    env = Environment(means, M, seed)
    rngs = [random.Random(mix64(seed, i)) for i in range(1, M + 1)]
    players = [DPEPlayer(K, cfg.tolerance) for _ in range(M)]
    meter = RegretMeter(means, M)
    rec = _Recorder(cfg, run_id, seed)
    result = RunResult(run_id, seed, rec.rows)
    collisions = 0
    t = 0

    try:
        while t < T and players[0].initializing:
            t += 1
            sel = [p.select(t, g) for p, g in zip(players, rngs)]
            feedback, rl = env.step(sel)
            for p, fb in zip(players, feedback):
                p.observe(t, fb)
            meter.add(sel, rl.collided_arms)
            if rl.collided_arms:
                collisions += _collision_count(sel, rl.collided_arms)
            if any(p.initializing for p in players) != players[0].initializing:
                raise ProtocolViolation(f"players left initialization at different rounds (t={t})")
            if rec.due(t):
                rec.record(t, meter, init_rounds=t, collisions=collisions)
    except ProtocolViolation as exc:
        return _abort(result, rec, meter, t, str(exc), collisions=collisions)

    if players[0].initializing:
        result.init_rounds = t
        return result

    init_rounds = result.init_rounds = t
    result.ranks = [p.outcome.rank for p in players]
    result.held_arms = [p.outcome.arm for p in players]
    if {p.outcome.num_players for p in players} != {M} or sorted(result.ranks) != list(
        range(1, M + 1)
    ):
        return _abort(result, rec, meter, t, "initialization produced inconsistent ranks",
                      init_rounds=init_rounds, collisions=collisions)

    roles = [p.role for p in players]
    leader: Leader = next(r for r in roles if isinstance(r, Leader))
    followers: list[Follower] = [r for r in roles if isinstance(r, Follower)]
    pairs = list(zip(roles, rngs))
    truth = InstanceTruth(means, M) if cfg.instrument else None
    counter = BadRoundCounter(truth) if truth else None
    version = -1
    consistent_rounds = consistent_collisions = 0

    def snapshot(t):
        if counter is not None:
            c = counter.snapshot(t)
            c.comm_rounds, c.init_rounds, c.collisions = leader.comm_rounds, init_rounds, collisions
            result.counters[t] = c

    try:
        while t < T:
            t += 1
            sel = [r.select(t, g) for r, g in pairs]
            feedback, rl = env.step(sel)
            hit = rl.collided_arms
            if counter is not None and not leader.comm_round:
                if leader.version != version:
                    version = leader.version
                    counter.set_view(leader.best.slots, leader.frozen_means, leader.frozen_indices)
                counter.tick(leader.rho)
                slots = leader.best.slots
                for f in followers:
                    if f.best.slots != slots or f.signal_time is not None or f.pending:
                        break
                else:
                    consistent_rounds += 1
                    if hit:
                        consistent_collisions += 1
            for r, fb in zip(roles, feedback):
                r.observe(t, fb)
            meter.add(sel, hit)
            if hit:
                collisions += _collision_count(sel, hit)
            if rec.due(t):
                rec.record(t, meter, leader.phases_started, leader.comm_rounds, init_rounds,
                           collisions, leader.swaps_emitted)
                snapshot(t)
    except ProtocolViolation as exc:
        return _abort(result, rec, meter, t, str(exc), leader.phases_started,
                      leader.comm_rounds, init_rounds, collisions, leader.swaps_emitted)

    result.consistent_rounds = consistent_rounds
    result.consistent_collisions = consistent_collisions
    result.unexplained_bad_rounds = counter.counters.unexplained_bad_rounds if counter else 0
    result.phase_active_at_end = leader.in_comm
    return result


def _abort(result: RunResult, rec: _Recorder, meter: RegretMeter, t: int, reason: str,
           phases=0, comm_rounds=0, init_rounds=0, collisions=0, set_changes=0) -> RunResult:
    log.warning("run %d (seed %d) aborted at t=%d: %s", result.run_id, result.seed, t, reason)
    result.error = f"t={t}: {reason}"
    rec.next = t
    rec.record(t, meter, phases, comm_rounds, init_rounds, collisions, set_changes)
    return result


def run_team(cfg: Config, seed: int, run_id: int = 0) -> RunResult:
    """Centralized, oracle or random-hop run (no initialization phase)."""
    means = ArmMeans(cfg.means)
    env = Environment(means, cfg.M, seed)
    if cfg.algorithm == "centralized":
        team = CentralizedController(cfg.K, cfg.M, cfg.tolerance)
    elif cfg.algorithm == "oracle":
        team = OracleTeam(means, cfg.M)
    elif cfg.algorithm == "random":
        team = RandomHopTeam(cfg.K, [random.Random(mix64(seed, i)) for i in range(1, cfg.M + 1)])
    else:
        raise ConfigError("algorithm", f"{cfg.algorithm!r} is not a team policy")
    meter = RegretMeter(means, cfg.M)
    rec = _Recorder(cfg, run_id, seed)
    collisions = 0
    for t in range(1, cfg.T + 1):
        sel = team.select(t)
        feedback, rl = env.step(sel)
        team.observe(t, feedback)
        meter.add(sel, rl.collided_arms)
        if rl.collided_arms:
            collisions += _collision_count(sel, rl.collided_arms)
        if rec.due(t):
            rec.record(t, meter, collisions=collisions)
    return RunResult(run_id, seed, rec.rows)


def run_one(cfg: Config, seed: int, run_id: int = 0) -> RunResult:
    if cfg.algorithm == "dpe":
        return run_dpe(cfg, seed, run_id)
    return run_team(cfg, seed, run_id)


def _run_job(job: tuple[Config, int, int]) -> RunResult:
    return run_one(*job)


def run_all(cfg: Config, run_id_offset: int = 0) -> list[RunResult]:
    jobs = [(cfg, seed, run_id_offset + i) for i, seed in enumerate(cfg.seeds)]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = [_run_job(j) for j in jobs]
    return sorted(results, key=lambda r: r.run_id)


def summarize(cfg: Config, results: Sequence[RunResult]) -> RunSummary:
    by_t: dict[int, list[TraceRow]] = {t: [] for t in cfg.checkpoints}
    for r in results:
        for row in r.rows:
            if row.t in by_t and r.error is None:
                by_t[row.t].append(row)
    mean: dict[str, list[float]] = {c: [] for c in CUMULATIVE_COLUMNS}
    std: dict[str, list[float]] = {c: [] for c in CUMULATIVE_COLUMNS}
    for t in cfg.checkpoints:
        rows = by_t[t]
        for c in CUMULATIVE_COLUMNS:
            vals = np.array([getattr(row, c) for row in rows], dtype=float)
            mean[c].append(float(vals.mean()) if len(vals) else math.nan)
            std[c].append(float(vals.std(ddof=1)) if len(vals) > 1 else 0.0)
    return RunSummary(
        cfg.algorithm, cfg.K, cfg.M, len(results), lower_bound_constant(cfg.means, cfg.M),
        list(cfg.checkpoints), mean, std, [f"run {r.run_id}: {r.error}" for r in results if r.error],
    )


def run_experiment(cfg: Config) -> tuple[list[TraceRow], RunSummary, list[RunResult]]:
    results = run_all(cfg)
    rows = [row for r in results for row in r.rows]
    return rows, summarize(cfg, results), results


def sweep(cfg: Config, horizons: Iterable[int]) -> tuple[list[TraceRow], list[RunSummary]]:
    rows: list[TraceRow] = []
    summaries = []
    for i, T in enumerate(horizons):
        sub = replace(cfg, T=T, checkpoints=[p for p in cfg.checkpoints if p < T] + [T])
        results = run_all(sub, run_id_offset=i * len(cfg.seeds))
        rows.extend(row for r in results for row in r.rows)
        summaries.append(summarize(sub, results))
    return rows, summaries


def write_csv(rows: Iterable[TraceRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for row in rows:
            w.writerow([getattr(row, c) if not isinstance(getattr(row, c), float)
                        else repr(getattr(row, c)) for c in TRACE_COLUMNS])


class TraceFormatError(ValueError):
    pass


def read_csv(path: str | Path) -> list[TraceRow]:
    types = {f.name: f.type for f in fields(TraceRow)}
    casts = {"int": int, "float": float, "str": str}
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise TraceFormatError("row 1: empty file")
        if header != TRACE_COLUMNS:
            raise TraceFormatError(f"row 1: header {header} does not match {TRACE_COLUMNS}")
        for n, rec in enumerate(reader, start=2):
            if len(rec) != len(TRACE_COLUMNS):
                raise TraceFormatError(f"row {n}: expected {len(TRACE_COLUMNS)} fields, got {len(rec)}")
            try:
                rows.append(TraceRow(*(casts[types[c]](v) for c, v in zip(TRACE_COLUMNS, rec))))
            except ValueError as exc:
                raise TraceFormatError(f"row {n}: {exc}") from None
    if not rows:
        raise TraceFormatError("row 2: no data rows")
    return rows


@dataclass
class InitRun:
    seed: int
    duration: int
    ranks: list[int]
    held_arms: list[int]
    reported_M: list[int]
    exit_rounds: list[int]


def simulate_initialization(K: int, M: int, seed: int, horizon: int) -> InitRun:
    """Run only the initialization phase (stopping at ``horizon`` if it is not done)."""
    env = Environment(ArmMeans(np.linspace(0.9, 0.1, K)), M, seed)
    rngs = [random.Random(mix64(seed, i)) for i in range(1, M + 1)]
    players = [DPEPlayer(K) for _ in range(M)]
    exits = [0] * M
    t = 0
    while t < horizon and any(p.initializing for p in players):
        t += 1
        sel = [p.select(t, g) for p, g in zip(players, rngs)]
        feedback, _ = env.step(sel)
        for i, (p, fb) in enumerate(zip(players, feedback)):
            if p.initializing:
                p.observe(t, fb)
                if not p.initializing:
                    exits[i] = t
    outs = [p.outcome for p in players]
    return InitRun(
        seed, t,
        [o.rank if o else 0 for o in outs],
        [o.arm if o else 0 for o in outs],
        [o.num_players if o else 0 for o in outs],
        exits,
    )


@dataclass
class LemmaConfig:
    M_grid: list[int] = field(default_factory=lambda: list(range(2, 11)))
    truncation: int = 1_000_000
    c_grid: list[float] = field(default_factory=lambda: [0.25, 0.5, 1.0])
    delta_grid: list[float] = field(default_factory=lambda: [0.05, 0.1, 0.5])
    trials: int = 1000
    horizon: int = 100_000
    arm_mean: float = 0.5
    seed: int = 0


def check_lemmas(cfg: LemmaConfig | None = None) -> dict:
    """Run both numeric checks over their grids; every entry carries ``passed``."""
    cfg = cfg or LemmaConfig()
    if cfg.truncation < 10_000:
        raise ConfigError("truncation", f"must be at least 10000, got {cfg.truncation}")
    series = []
    for M in cfg.M_grid:
        r = lemma2_constant(M, cfg.truncation)
        series.append({
            "M": M, "partial_sum": r.partial_sum, "tail_bound": r.tail_bound,
            "total": r.total, "bound": 15.0, "passed": r.passed,
        })
    concentration = []
    for i, c in enumerate(cfg.c_grid):
        for j, delta in enumerate(cfg.delta_grid):
            exp = ConcentrationExperiment(c, delta, cfg.arm_mean, cfg.horizon, cfg.trials)
            empirical, bound = lemma1_monte_carlo(exp, mix64(cfg.seed, 100 * i + j))
            concentration.append({
                "c": c, "delta": delta, "empirical_sum": empirical, "bound": bound,
                "passed": empirical <= bound,
            })
    return {
        "series_constant": series,
        "concentration": concentration,
        "passed": all(e["passed"] for e in series + concentration),
    }

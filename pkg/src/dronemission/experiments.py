"""Experiment harness: episode driver, the two fleet metrics (success rate
and average accumulated reward of successful missions), sweep execution, and
result persistence (episode records as JSON, windowed metrics as CSV).

Three experiment kinds are supported, mirroring the study design:
  * threshold_sweep — fixed 4-task layout, fixed length 5, warm-up multiplier
    swept over psi_values;
  * geometry        — 4 tasks with fixed-vs-random location and length modes;
  * density         — task count swept, random locations and lengths, one
    drone fielded per task.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace, asdict
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import world
from .dqn import AgentConfig, DqnAgent, EpsilonSchedule, Transition, epsilon_at, \
    save_checkpoint
from .energy import PowerRates, scaled_rates
from .world import Action, GridConfig, RewardCoefs

SCHEMA_VERSION = 1

# Default 4-task layout on the 5x5 grid (base at index 0): spread-out points
# (1,2), (4,2), (1,3), (3,4).
FIXED_TASK_LAYOUT: tuple[int, ...] = (11, 14, 16, 23)


class ExperimentConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    """Full description of one experiment: environment, agents, schedule,
    sweep axis, task generation modes, and stopping rule.

    With ``episodes == 0`` each run trains until the epsilon schedule reaches
    its floor and then runs ``floor_episodes`` more, so the trailing metrics
    window sits entirely at the floor; a positive ``episodes`` caps the run
    instead (smoke tests)."""

    kind: str = "threshold_sweep"  # threshold_sweep | geometry | density
    grid: GridConfig = field(default_factory=GridConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    reward: RewardCoefs = field(default_factory=RewardCoefs)
    epsilon: EpsilonSchedule = field(default_factory=EpsilonSchedule)
    seeds: tuple[int, ...] = (1, 2, 3)
    psi_values: tuple[int, ...] = (1, 2, 5, 10)
    task_count: int = 4
    task_count_range: tuple[int, ...] = tuple(range(2, 11))
    length_mode: str = "fixed"      # fixed | uniform
    fixed_length: int = 5
    length_low: int = 1
    length_high: int = 5
    location_mode: str = "fixed"    # fixed | uniform
    fixed_locations: tuple[int, ...] = FIXED_TASK_LAYOUT
    episodes: int = 0
    floor_episodes: int = 100
    window: int = 100

    def __post_init__(self):
        if self.kind not in ("threshold_sweep", "geometry", "density"):
            raise ExperimentConfigError(f"unknown experiment kind {self.kind!r}")
        if self.length_mode not in ("fixed", "uniform") \
                or self.location_mode not in ("fixed", "uniform"):
            raise ExperimentConfigError("modes must be 'fixed' or 'uniform'")
        if self.kind == "density" and self.location_mode == "fixed":
            raise ExperimentConfigError(
                "density sweeps vary the task count and need random locations")
        if self.window < 1 or self.floor_episodes < 0 or self.episodes < 0:
            raise ExperimentConfigError("window/episode counts out of range")
        if not self.seeds:
            raise ExperimentConfigError("at least one seed is required")


@dataclass(frozen=True)
class SweepPoint:
    """One cell of the sweep grid: resolved task-generation settings plus the
    warm-up multiplier in force."""

    index: int
    label: str
    psi: int
    task_count: int
    length_mode: str
    location_mode: str


def sweep_points(spec: ExperimentSpec) -> list[SweepPoint]:
    if spec.kind == "threshold_sweep":
        return [SweepPoint(i, f"psi={psi}", psi, spec.task_count,
                           spec.length_mode, spec.location_mode)
                for i, psi in enumerate(spec.psi_values)]
    if spec.kind == "density":
        return [SweepPoint(i, f"tasks={n}", spec.agent.warmup_multiplier, n,
                           spec.length_mode, spec.location_mode)
                for i, n in enumerate(spec.task_count_range)]
    # geometry: single point described by the spec's own modes
    return [SweepPoint(0, f"loc={spec.location_mode},len={spec.length_mode}",
                       spec.agent.warmup_multiplier, spec.task_count,
                       spec.length_mode, spec.location_mode)]


def candidate_locations(grid: GridConfig) -> list[int]:
    """Points eligible to hold a task: everything but the base station."""
    return [i for i in range(grid.num_points) if i != grid.base_index]


def generate_tasks(point: SweepPoint, spec: ExperimentSpec,
                   rng: np.random.Generator) -> list[tuple[int, int]]:
    """Draw one episode's task set for a sweep point."""
    if point.location_mode == "fixed":
        if len(spec.fixed_locations) != point.task_count:
            raise ExperimentConfigError(
                f"fixed layout has {len(spec.fixed_locations)} locations but "
                f"the sweep point needs {point.task_count}")
        locations = list(spec.fixed_locations)
    else:
        pool = candidate_locations(spec.grid)
        if point.task_count > len(pool):
            raise ExperimentConfigError("more tasks than candidate locations")
        locations = [int(x) for x in
                     rng.choice(len(pool), size=point.task_count, replace=False)]
        locations = [pool[i] for i in locations]
    if point.length_mode == "fixed":
        lengths = [spec.fixed_length] * point.task_count
    else:
        lengths = [int(rng.integers(spec.length_low, spec.length_high + 1))
                   for _ in range(point.task_count)]
    return list(zip(locations, lengths))


@dataclass
class Mission:
    """Environment bundle for one episode."""

    grid: GridConfig
    rates: PowerRates
    coefs: RewardCoefs
    tasks: list[tuple[int, int]]


@dataclass(frozen=True)
class EpisodeRecord:
    episode_index: int
    success: bool
    accumulated_reward: float
    steps_used: int
    final_batteries: tuple[float, ...]
    epsilon_at_start: float

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["final_batteries"] = list(self.final_batteries)
        return d

    @staticmethod
    def from_json_dict(d: dict) -> "EpisodeRecord":
        return EpisodeRecord(
            episode_index=int(d["episode_index"]),
            success=bool(d["success"]),
            accumulated_reward=float(d["accumulated_reward"]),
            steps_used=int(d["steps_used"]),
            final_batteries=tuple(float(b) for b in d["final_batteries"]),
            epsilon_at_start=float(d["epsilon_at_start"]),
        )


def run_episode(mission: Mission, agents: Sequence[DqnAgent],
                rngs: Sequence[np.random.Generator], schedule: EpsilonSchedule,
                global_step: int, episode_index: int = 0,
                learn: bool = True) -> EpisodeRecord:
    """One full episode: per step every drone picks an action epsilon-greedily,
    the world advances once under the joint action, every drone stores the
    shared-reward transition and (when learning) replays a batch."""
    if len(agents) != len(mission.tasks):
        raise ExperimentConfigError("agent count must match task count")
    state = world.reset(mission.grid, mission.tasks, len(agents))
    obs = world.encode_observation(state, mission.grid)
    eps_start = epsilon_at(schedule, global_step)
    total = 0.0
    steps = 0
    success = False
    while True:
        eps = epsilon_at(schedule, global_step + steps)
        actions = [Action(agent.select_action(obs, eps, rng))
                   for agent, rng in zip(agents, rngs)]
        outcome = world.step(state, actions, mission.grid, mission.rates,
                             mission.coefs)
        next_obs = world.encode_observation(outcome.next_state, mission.grid)
        for k, (agent, rng) in enumerate(zip(agents, rngs)):
            agent.store(Transition(obs, int(actions[k]), outcome.reward,
                                   next_obs, outcome.done))
            if learn:
                agent.learn_step(rng)
        total += outcome.reward
        steps += 1
        state, obs = outcome.next_state, next_obs
        if outcome.done:
            success = outcome.success
            break
    return EpisodeRecord(episode_index=episode_index, success=success,
                         accumulated_reward=total, steps_used=steps,
                         final_batteries=state.batteries,
                         epsilon_at_start=eps_start)


def success_rate(records: Sequence[EpisodeRecord]) -> float:
    if not records:
        raise ValueError("success_rate over an empty window")
    return sum(1 for r in records if r.success) / len(records)


def avg_success_reward(records: Sequence[EpisodeRecord]) -> Optional[float]:
    rewards = [r.accumulated_reward for r in records if r.success]
    if not rewards:
        return None
    return sum(rewards) / len(rewards)


@dataclass(frozen=True)
class MetricsSeries:
    """Sliding-window metrics; entry i covers the window ending at episode
    window_end_episodes[i], keyed by that episode's starting epsilon."""

    window: int
    window_end_episodes: tuple[int, ...]
    epsilons: tuple[float, ...]
    success_rate_series: tuple[float, ...]
    avg_success_reward_series: tuple[Optional[float], ...]


def compute_metrics(records: Sequence[EpisodeRecord], window: int) -> MetricsSeries:
    ends, eps, rates_, avgs = [], [], [], []
    for end in range(window - 1, len(records)):
        chunk = records[end - window + 1:end + 1]
        ends.append(records[end].episode_index)
        eps.append(records[end].epsilon_at_start)
        rates_.append(success_rate(chunk))
        avgs.append(avg_success_reward(chunk))
    return MetricsSeries(window=window, window_end_episodes=tuple(ends),
                         epsilons=tuple(eps), success_rate_series=tuple(rates_),
                         avg_success_reward_series=tuple(avgs))


@dataclass
class RunResult:
    point: SweepPoint
    seed: int
    records: list[EpisodeRecord]
    global_step: int
    agents: Optional[list[DqnAgent]] = None


def _rng_tree(seed: int, point_index: int, drone_count: int):
    """Independent streams per (sweep point, seed): one for the environment
    (task draws), and per drone one init seed plus one action/sampling stream."""
    root = np.random.SeedSequence([seed, point_index])
    env_ss, *agent_ss = root.spawn(1 + drone_count)
    env_rng = np.random.default_rng(env_ss)
    init_seeds, act_rngs = [], []
    for ss in agent_ss:
        init_ss, act_ss = ss.spawn(2)
        init_seeds.append(init_ss)
        act_rngs.append(np.random.default_rng(act_ss))
    return env_rng, init_seeds, act_rngs


def run_point(spec: ExperimentSpec, point: SweepPoint, seed: int,
              resume: Optional[tuple[list[DqnAgent], int]] = None,
              keep_agents: bool = True) -> RunResult:
    """Train one (sweep point, seed) cell to its stopping rule."""
    k = point.task_count
    obs_size = world.observation_size(k)
    agent_cfg = replace(spec.agent, warmup_multiplier=point.psi)
    env_rng, init_seeds, act_rngs = _rng_tree(seed, point.index, k)
    if resume is not None:
        agents, global_step = resume
        if len(agents) != k:
            raise ExperimentConfigError("checkpoint drone count mismatch")
    else:
        agents = [DqnAgent(obs_size, agent_cfg, seed=init_seeds[i])
                  for i in range(k)]
        global_step = 0

    rates = scaled_rates()
    records: list[EpisodeRecord] = []
    target_steps = spec.epsilon.span_steps
    floor_reached_at: Optional[int] = None
    episode_index = 0
    while True:
        if spec.episodes > 0:
            if episode_index >= spec.episodes:
                break
        elif global_step >= target_steps:
            if floor_reached_at is None:
                floor_reached_at = episode_index
            if episode_index - floor_reached_at >= spec.floor_episodes:
                break
        tasks = generate_tasks(point, spec, env_rng)
        mission = Mission(spec.grid, rates, spec.reward, tasks)
        rec = run_episode(mission, agents, act_rngs, spec.epsilon, global_step,
                          episode_index=episode_index)
        records.append(rec)
        global_step += rec.steps_used
        episode_index += 1
    return RunResult(point=point, seed=seed, records=records,
                     global_step=global_step,
                     agents=agents if keep_agents else None)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def run_slug(point: SweepPoint, seed: int) -> str:
    return f"point{point.index:02d}_seed{seed}"


def write_records(result: RunResult, out_dir: Path) -> Path:
    rec_dir = Path(out_dir) / "records"
    rec_dir.mkdir(parents=True, exist_ok=True)
    path = rec_dir / f"{run_slug(result.point, result.seed)}.json"
    payload = {
        "schema_version": SCHEMA_VERSION,
        "sweep_point": result.point.label,
        "point_index": result.point.index,
        "seed": result.seed,
        "global_steps": result.global_step,
        "records": [r.to_json_dict() for r in result.records],
    }
    path.write_text(json.dumps(payload))
    return path


def read_records(path: Path) -> dict:
    payload = json.loads(Path(path).read_text())
    if payload.get("schema_version") != SCHEMA_VERSION:
        raise ExperimentConfigError(f"unsupported records schema in {path}")
    payload["records"] = [EpisodeRecord.from_json_dict(d)
                          for d in payload["records"]]
    return payload


def write_metrics_csv(results: Sequence[dict], window: int, path: Path) -> None:
    """One row per (sweep point, seed, window end); ``results`` are records
    payloads as produced by write_records/read_records."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sweep_point", "seed", "window_end_episode",
                         "epsilon", "success_rate", "avg_success_reward",
                         "episodes"])
        for payload in results:
            series = compute_metrics(payload["records"], window)
            for end, eps, sr, avg in zip(series.window_end_episodes,
                                         series.epsilons,
                                         series.success_rate_series,
                                         series.avg_success_reward_series):
                writer.writerow([payload["sweep_point"], payload["seed"], end,
                                 repr(eps), repr(sr),
                                 "" if avg is None else repr(avg), window])


def trailing_summary(payload: dict, window: int) -> dict:
    records = payload["records"]
    tail = records[-window:] if len(records) >= window else records
    avg = avg_success_reward(tail)
    return {
        "sweep_point": payload["sweep_point"],
        "point_index": payload["point_index"],
        "seed": payload["seed"],
        "episodes_total": len(records),
        "final_epsilon": records[-1].epsilon_at_start if records else None,
        "trailing_window": len(tail),
        "trailing_success_rate": success_rate(tail) if tail else None,
        "trailing_avg_success_reward": avg,
    }


def write_summary(results: Sequence[dict], window: int, path: Path) -> None:
    path = Path(path)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "window": window,
        "points": [trailing_summary(p, window) for p in results],
    }
    path.write_text(json.dumps(payload, indent=2))


def _run_point_job(args) -> tuple[str, int]:
    spec, point, seed, out_dir = args
    result = run_point(spec, point, seed)
    write_records(result, Path(out_dir))
    ckpt = Path(out_dir) / "checkpoints" / run_slug(point, seed)
    save_checkpoint(result.agents, ckpt, result.global_step, spec.epsilon)
    _write_eval_context(spec, point, seed, ckpt)
    return run_slug(point, seed), result.global_step


def _write_eval_context(spec: ExperimentSpec, point: SweepPoint, seed: int,
                        ckpt_dir: Path) -> None:
    """Enough context next to a checkpoint to evaluate it standalone."""
    ctx = {
        "schema_version": SCHEMA_VERSION,
        "grid": asdict(spec.grid),
        "reward": asdict(spec.reward),
        "point": asdict(point),
        "fixed_locations": list(spec.fixed_locations),
        "fixed_length": spec.fixed_length,
        "length_low": spec.length_low,
        "length_high": spec.length_high,
        "seed": seed,
    }
    (Path(ckpt_dir) / "mission.json").write_text(json.dumps(ctx, indent=2))


def run_experiment(spec: ExperimentSpec, out_dir: Path,
                   jobs: int = 1) -> list[dict]:
    """Run every (sweep point, seed) cell, persist records, checkpoints,
    windowed metrics CSV and a trailing summary. Returns the records payloads
    in deterministic (point, seed) order."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = [(spec, point, seed, str(out_dir))
             for point in sweep_points(spec) for seed in spec.seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(_run_point_job, cells))
    else:
        for cell in cells:
            _run_point_job(cell)

    results = []
    for point in sweep_points(spec):
        for seed in spec.seeds:
            results.append(read_records(
                out_dir / "records" / f"{run_slug(point, seed)}.json"))
    write_metrics_csv(results, spec.window, out_dir / "metrics.csv")
    write_summary(results, spec.window, out_dir / "summary.json")
    return results

"""Grid-world environment for mission-oriented drone fleets.

Trajectory points form a side x side grid indexed 0..side^2-1, with point i at
cell (i % side, i // side). Point ``base_index`` is the launch/return station.
Each of the K drones picks one of ten actions per time step (eight compass
moves, hover, execute); all drones move simultaneously and share one scalar
reward per step.

Step semantics in brief:
  * moves cover at most one cell; a move off the grid degrades to a hover at
    the current point (same location and cost as Hover there);
  * a straight move crosses 1/sqrt(2) of the per-step travel budget and the
    drone hovers out the remainder, so it costs
    forward/sqrt(2) + hover*(1 - 1/sqrt(2));
  * Execute costs hover+facilities and removes one unit from the task at the
    drone's point, if one remains; several drones may work the same task in
    the same step (lower drone ids are credited first once the task empties);
  * hovering at the base station is free;
  * batteries may go negative; failure is assessed only through the
    return-energy check at mission completion.

An episode ends the moment every task is finished (success iff every drone
can still afford the straight flight home) or when the step clock reaches the
episode length (failure). The return flight itself is not simulated.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from enum import IntEnum
from typing import Optional, Sequence

import numpy as np

from .energy import PowerRates


class WorldConfigError(ValueError):
    """Invalid grid/task/drone-count configuration."""


class TerminalStateError(RuntimeError):
    """Raised when step() is called on a finished episode."""


class Action(IntEnum):
    MOVE_UP = 0
    MOVE_DOWN = 1
    MOVE_LEFT = 2
    MOVE_RIGHT = 3
    MOVE_UP_LEFT = 4
    MOVE_UP_RIGHT = 5
    MOVE_DOWN_LEFT = 6
    MOVE_DOWN_RIGHT = 7
    HOVER = 8
    EXECUTE = 9


NUM_ACTIONS = len(Action)

# (dx, dy) per move action; up is +y.
MOVE_DELTAS: dict[Action, tuple[int, int]] = {
    Action.MOVE_UP: (0, 1),
    Action.MOVE_DOWN: (0, -1),
    Action.MOVE_LEFT: (-1, 0),
    Action.MOVE_RIGHT: (1, 0),
    Action.MOVE_UP_LEFT: (-1, 1),
    Action.MOVE_UP_RIGHT: (1, 1),
    Action.MOVE_DOWN_LEFT: (-1, -1),
    Action.MOVE_DOWN_RIGHT: (1, -1),
}

DIAGONAL_MOVES = frozenset((Action.MOVE_UP_LEFT, Action.MOVE_UP_RIGHT,
                            Action.MOVE_DOWN_LEFT, Action.MOVE_DOWN_RIGHT))


@dataclass(frozen=True)
class GridConfig:
    side_points: int = 5
    cell_side: float = 1.0
    base_index: int = 0
    battery_capacity: float = 1800.0
    episode_length: int = 600

    def __post_init__(self):
        if self.side_points < 1 or self.cell_side <= 0:
            raise WorldConfigError("grid must have positive side and cell size")
        if not 0 <= self.base_index < self.side_points ** 2:
            raise WorldConfigError("base_index outside the grid")
        if self.battery_capacity <= 0 or self.episode_length < 1:
            raise WorldConfigError("battery capacity and episode length must be positive")

    @property
    def num_points(self) -> int:
        return self.side_points ** 2

    @property
    def d_max(self) -> float:
        """Maximum per-step travel distance: the diagonal of one grid square."""
        return self.cell_side * math.sqrt(2.0)

    def xy(self, index: int) -> tuple[int, int]:
        return index % self.side_points, index // self.side_points

    def index(self, x: int, y: int) -> int:
        return y * self.side_points + x

    def distance(self, i: int, j: int) -> float:
        xi, yi = self.xy(i)
        xj, yj = self.xy(j)
        return math.hypot(xi - xj, yi - yj) * self.cell_side


@dataclass(frozen=True)
class Task:
    location: int
    original_length: int
    remaining: int

    def __post_init__(self):
        if self.original_length < 1:
            raise WorldConfigError("task length must be >= 1")
        if not 0 <= self.remaining <= self.original_length:
            raise WorldConfigError("remaining outside [0, original_length]")


@dataclass(frozen=True)
class RewardCoefs:
    """Weights for the terminal energy bonus (gamma_coef) and the
    out-of-power penalty (beta_coef). Distinct from the Bellman discount."""

    gamma_coef: float = 1.0
    beta_coef: float = 1.0


@dataclass(frozen=True)
class WorldState:
    """Joint state at one time step: the shared quintuple plus the clock.

    ``original_lengths`` rides along so observations can normalize each task's
    remaining work; it is constant over an episode.
    """

    task_locations: tuple[int, ...]
    drone_locations: tuple[int, ...]
    last_actions: tuple[Action, ...]
    remaining_lengths: tuple[int, ...]
    batteries: tuple[float, ...]
    clock: int
    original_lengths: tuple[int, ...]

    @property
    def drone_count(self) -> int:
        return len(self.drone_locations)

    def to_json_dict(self) -> dict:
        return {
            "task_locations": list(self.task_locations),
            "drone_locations": list(self.drone_locations),
            "last_actions": [a.name for a in self.last_actions],
            "remaining_lengths": list(self.remaining_lengths),
            "batteries": list(self.batteries),
            "clock": self.clock,
            "original_lengths": list(self.original_lengths),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @staticmethod
    def from_json_dict(d: dict) -> "WorldState":
        return WorldState(
            task_locations=tuple(d["task_locations"]),
            drone_locations=tuple(d["drone_locations"]),
            last_actions=tuple(Action[name] for name in d["last_actions"]),
            remaining_lengths=tuple(d["remaining_lengths"]),
            batteries=tuple(float(b) for b in d["batteries"]),
            clock=int(d["clock"]),
            original_lengths=tuple(d["original_lengths"]),
        )

    @staticmethod
    def from_json(text: str) -> "WorldState":
        return WorldState.from_json_dict(json.loads(text))


@dataclass(frozen=True)
class StepOutcome:
    next_state: WorldState
    reward: float
    done: bool
    success: bool


def reset(config: GridConfig, tasks: Sequence[tuple[int, int]], drone_count: int,
          seed: int = 0) -> WorldState:
    """Initial state: every drone fully charged at the base, tasks untouched.

    ``tasks`` is a list of (location, length) pairs; drone_count must equal
    the task count (one drone is fielded per task). The seed is accepted for
    interface stability; the initial state is deterministic.
    """
    del seed
    if len(tasks) != drone_count:
        raise WorldConfigError(
            f"drone_count ({drone_count}) must equal the task count ({len(tasks)})")
    locations = [loc for loc, _ in tasks]
    if len(set(locations)) != len(locations):
        raise WorldConfigError("duplicate task locations")
    for loc, length in tasks:
        if not 0 <= loc < config.num_points:
            raise WorldConfigError(f"task location {loc} outside the grid")
        if loc == config.base_index:
            raise WorldConfigError("no task may sit on the base station")
        if length < 1:
            raise WorldConfigError("task length must be >= 1")
    return WorldState(
        task_locations=tuple(locations),
        drone_locations=(config.base_index,) * drone_count,
        last_actions=(Action.HOVER,) * drone_count,
        remaining_lengths=tuple(length for _, length in tasks),
        batteries=(config.battery_capacity,) * drone_count,
        clock=0,
        original_lengths=tuple(length for _, length in tasks),
    )


def action_cost(action: Action, at_base: bool, rates: PowerRates,
                cell_side: float = 1.0) -> float:
    """Energy one drone spends on one action.

    A straight move covers cell_side of the d_max = cell_side*sqrt(2) budget,
    so the drone flies the fraction 1/sqrt(2) of the step and hovers the rest.
    """
    del cell_side  # the straight/diagonal blend fraction is scale-invariant
    if action == Action.EXECUTE:
        return rates.hover + rates.facilities
    if action == Action.HOVER:
        return 0.0 if at_base else rates.hover
    if action in DIAGONAL_MOVES:
        return rates.forward
    frac = 1.0 / math.sqrt(2.0)
    return rates.forward * frac + rates.hover * (1.0 - frac)


def return_energy(location: int, config: GridConfig, rates: PowerRates) -> float:
    """Energy needed to fly straight home: (distance / d_max) * forward rate."""
    return config.distance(location, config.base_index) / config.d_max * rates.forward


def mission_complete(state: WorldState, config: GridConfig,
                     rates: PowerRates) -> tuple[bool, bool]:
    """(all tasks finished, every drone can still afford the flight home)."""
    all_done = all(r == 0 for r in state.remaining_lengths)
    can_return = all(
        b >= return_energy(loc, config, rates)
        for b, loc in zip(state.batteries, state.drone_locations))
    return all_done, can_return


def execution_progress(prev: WorldState, next_state: WorldState) -> float:
    """Total task units removed across all drones in one transition."""
    return float(sum(p - n for p, n in
                     zip(prev.remaining_lengths, next_state.remaining_lengths)))


def _out_of_power_count(state: WorldState, config: GridConfig,
                        rates: PowerRates) -> int:
    return sum(1 for b, loc in zip(state.batteries, state.drone_locations)
               if b < return_energy(loc, config, rates))


def reward(prev: WorldState, next_state: WorldState, config: GridConfig,
           rates: PowerRates, gamma_coef: float = 1.0,
           beta_coef: float = 1.0) -> float:
    """Shared per-step reward.

    Task progress always counts; on the step that finishes the last task the
    fleet additionally earns gamma_coef times the mean remaining-battery
    fraction if everyone can get home, or loses beta_coef times the number of
    stranded drones if not.
    """
    progress = execution_progress(prev, next_state)
    all_done, can_return = mission_complete(next_state, config, rates)
    if all_done and can_return:
        mu = sum(next_state.batteries) / (next_state.drone_count
                                          * config.battery_capacity)
        return progress + gamma_coef * mu
    if all_done:
        return progress - beta_coef * _out_of_power_count(next_state, config, rates)
    return progress


def is_terminal(state: WorldState, config: GridConfig) -> bool:
    return all(r == 0 for r in state.remaining_lengths) \
        or state.clock >= config.episode_length


def step(state: WorldState, joint_actions: Sequence[Action], config: GridConfig,
         rates: PowerRates, coefs: RewardCoefs = RewardCoefs(),
         rng: Optional[np.random.Generator] = None) -> StepOutcome:
    """Advance the world by one time step under a joint action.

    All drones act simultaneously. ``rng`` is accepted for interface
    stability; the transition is deterministic.
    """
    del rng
    if is_terminal(state, config):
        raise TerminalStateError("cannot step a finished episode")
    k = state.drone_count
    if len(joint_actions) != k:
        raise ValueError(f"expected {k} actions, got {len(joint_actions)}")

    side = config.side_points
    new_locations = list(state.drone_locations)
    effective = list(joint_actions)
    costs = [0.0] * k

    for i, action in enumerate(joint_actions):
        action = Action(action)
        loc = state.drone_locations[i]
        if action in MOVE_DELTAS:
            x, y = config.xy(loc)
            dx, dy = MOVE_DELTAS[action]
            nx, ny = x + dx, y + dy
            if 0 <= nx < side and 0 <= ny < side:
                new_locations[i] = config.index(nx, ny)
            else:
                action = Action.HOVER  # off-grid: degrade to hover in place
        effective[i] = action
        costs[i] = action_cost(action, loc == config.base_index, rates,
                               config.cell_side)

    # Execute passes decrement in drone-id order so simultaneous workers on a
    # nearly-finished task are credited deterministically.
    remaining = list(state.remaining_lengths)
    task_at = {loc: idx for idx, loc in enumerate(state.task_locations)}
    for i, action in enumerate(effective):
        if action != Action.EXECUTE:
            continue
        task_idx = task_at.get(state.drone_locations[i])
        if task_idx is not None and remaining[task_idx] > 0:
            remaining[task_idx] -= 1

    next_state = WorldState(
        task_locations=state.task_locations,
        drone_locations=tuple(new_locations),
        last_actions=tuple(effective),
        remaining_lengths=tuple(remaining),
        batteries=tuple(b - c for b, c in zip(state.batteries, costs)),
        clock=state.clock + 1,
        original_lengths=state.original_lengths,
    )

    r = reward(state, next_state, config, rates, coefs.gamma_coef, coefs.beta_coef)
    all_done, can_return = mission_complete(next_state, config, rates)
    if all_done:
        done, success = True, can_return
    elif next_state.clock >= config.episode_length:
        done, success = True, False
    else:
        done, success = False, False
    return StepOutcome(next_state=next_state, reward=r, done=done, success=success)


def observation_size(drone_count: int) -> int:
    """Observation width: 2K task xy + 2K drone xy + 10K action one-hots
    + K remaining fractions + K battery fractions = 16K."""
    return 16 * drone_count


def encode_observation(state: WorldState, config: GridConfig) -> np.ndarray:
    """Flatten the shared state into the fixed-length network input.

    Layout, in order: per-task normalized (x, y); per-drone normalized (x, y);
    per-drone one-hot of its last effective action; per-task remaining/original;
    per-drone battery/capacity. Coordinates are scaled by the grid span so all
    structural entries live in [0, 1]; battery fractions may go negative.
    """
    k = state.drone_count
    span = float(max(1, config.side_points - 1))
    obs = np.zeros(observation_size(k), dtype=np.float64)

    for i, loc in enumerate(state.task_locations):
        x, y = config.xy(loc)
        obs[2 * i] = x / span
        obs[2 * i + 1] = y / span
    off = 2 * k
    for i, loc in enumerate(state.drone_locations):
        x, y = config.xy(loc)
        obs[off + 2 * i] = x / span
        obs[off + 2 * i + 1] = y / span
    off = 4 * k
    for i, action in enumerate(state.last_actions):
        obs[off + NUM_ACTIONS * i + int(action)] = 1.0
    off = 14 * k
    for i, (rem, orig) in enumerate(zip(state.remaining_lengths,
                                        state.original_lengths)):
        obs[off + i] = rem / orig if orig > 0 else 0.0
    off = 15 * k
    for i, b in enumerate(state.batteries):
        obs[off + i] = b / config.battery_capacity
    return obs


def replay_actions(config: GridConfig, tasks: Sequence[tuple[int, int]],
                   drone_count: int, joint_sequence: Sequence[Sequence[Action]],
                   rates: PowerRates,
                   coefs: RewardCoefs = RewardCoefs()) -> tuple[float, list[StepOutcome]]:
    """Run a fixed joint-action sequence from reset; returns (accumulated
    reward, per-step outcomes). Stops early if the episode terminates."""
    state = reset(config, tasks, drone_count)
    total = 0.0
    outcomes: list[StepOutcome] = []
    for joint in joint_sequence:
        outcome = step(state, joint, config, rates, coefs)
        outcomes.append(outcome)
        total += outcome.reward
        state = outcome.next_state
        if outcome.done:
            break
    return total, outcomes

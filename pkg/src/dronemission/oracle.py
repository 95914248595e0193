"""Exhaustive enumeration of joint-action sequences on tiny instances.

Produces the exact maximum accumulated reward over all horizon-length joint
action sequences, used as ground truth for the world dynamics and as an upper
bound on anything an agent can score. Intended for desk-scale instances only
(a couple of drones, a 3x3 grid, horizons of a few steps); a node budget
refuses anything bigger.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

from . import world
from .energy import PowerRates, scaled_rates
from .world import Action, GridConfig, RewardCoefs, WorldState

NODE_BUDGET = 10 ** 8


class SearchBudgetError(RuntimeError):
    """Instance too large for exhaustive search; carries the node estimate."""

    def __init__(self, estimate: float):
        super().__init__(f"estimated {estimate:.3g} search nodes exceeds "
                         f"budget {NODE_BUDGET:.0e}")
        self.estimate = estimate


@dataclass(frozen=True)
class OracleResult:
    best_accumulated_reward: float
    best_action_sequences: tuple[tuple[Action, ...], ...]  # per drone
    explored_nodes: int


def _state_key(state: WorldState, steps_left: int):
    # last_actions and the absolute clock do not influence future rewards;
    # steps_left closes over the clock within one fixed-horizon search.
    return (state.drone_locations, state.remaining_lengths, state.batteries,
            steps_left)


def solve_exhaustive(config: GridConfig, tasks: Sequence[tuple[int, int]],
                     drone_count: int, horizon: int,
                     coefs: RewardCoefs = RewardCoefs(),
                     rates: Optional[PowerRates] = None,
                     use_memo: bool = True) -> OracleResult:
    """Exact optimum of accumulated reward over all joint-action sequences of
    the given horizon, by depth-first enumeration with memoization on repeated
    world states. ``use_memo=False`` disables the memo (for pruning audits).
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    estimate = float(world.NUM_ACTIONS) ** (drone_count * horizon)
    if estimate > NODE_BUDGET:
        raise SearchBudgetError(estimate)
    rates = rates if rates is not None else scaled_rates()

    root = world.reset(config, tasks, drone_count)
    joint_actions = list(itertools.product(list(Action), repeat=drone_count))
    memo: dict = {}
    explored = 0

    def best_from(state: WorldState, steps_left: int) -> tuple[float, tuple]:
        """(best future reward, best joint-action list) from this state."""
        nonlocal explored
        if steps_left == 0 or world.is_terminal(state, config):
            return 0.0, ()
        key = _state_key(state, steps_left)
        if use_memo and key in memo:
            return memo[key]
        best_value = float("-inf")
        best_plan: tuple = ()
        for joint in joint_actions:
            explored += 1
            outcome = world.step(state, joint, config, rates, coefs)
            tail_value, tail_plan = best_from(outcome.next_state, steps_left - 1)
            value = outcome.reward + tail_value
            if value > best_value:
                best_value = value
                best_plan = (joint,) + tail_plan
        if use_memo:
            memo[key] = (best_value, best_plan)
        return best_value, best_plan

    best_value, plan = best_from(root, horizon)
    if horizon == 0:
        best_value = 0.0
    per_drone = tuple(tuple(joint[k] for joint in plan)
                      for k in range(drone_count))
    return OracleResult(best_accumulated_reward=best_value,
                        best_action_sequences=per_drone,
                        explored_nodes=explored)

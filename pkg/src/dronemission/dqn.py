"""Per-drone DQN agent: epsilon-greedy control, ring-buffer experience replay
with a warm-up threshold, Bellman-target updates, and periodic target-network
synchronization. Each drone owns its own networks and replay memory; drones
are coupled only through the shared reward and the shared state observation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Optional

import numpy as np

from . import nn
from .world import NUM_ACTIONS


@dataclass(frozen=True)
class Transition:
    state_obs: np.ndarray
    action: int
    reward: float
    next_state_obs: np.ndarray
    terminal: bool


@dataclass(frozen=True)
class EpsilonSchedule:
    """Linear decay of the exploration rate over global environment steps."""

    start: float = 0.5
    decrement_per_step: float = 3e-6
    floor: float = 0.15

    @property
    def span_steps(self) -> int:
        """Steps until the floor is reached."""
        if self.decrement_per_step <= 0:
            return 0
        import math
        return math.ceil((self.start - self.floor) / self.decrement_per_step)


def epsilon_at(schedule: EpsilonSchedule, global_step: int) -> float:
    if global_step < 0:
        raise ValueError("global_step must be >= 0")
    return max(schedule.floor,
               schedule.start - schedule.decrement_per_step * global_step)


@dataclass(frozen=True)
class AgentConfig:
    batch_size: int = 32
    warmup_multiplier: int = 5          # learning starts once count > batch*this
    sync_period_steps: int = 200        # learn-steps between target syncs
    discount: float = 0.95
    hidden_sizes: tuple[int, int] = (128, 128)
    learning_rate: float = 1e-3
    replay_capacity: int = 50_000

    def __post_init__(self):
        if min(self.batch_size, self.warmup_multiplier, self.sync_period_steps,
               self.replay_capacity) < 1:
            raise ValueError("agent integer parameters must be positive")
        if not 0 <= self.discount < 1:
            raise ValueError("discount must be in [0, 1)")


class ReplayMemory:
    """Fixed-capacity ring of transitions in preallocated arrays; the oldest
    entry is overwritten once the ring is full."""

    def __init__(self, capacity: int, obs_size: int):
        self.capacity = capacity
        self.count = 0
        self._next = 0
        self._obs = np.zeros((capacity, obs_size), dtype=np.float64)
        self._next_obs = np.zeros((capacity, obs_size), dtype=np.float64)
        self._actions = np.zeros(capacity, dtype=np.int64)
        self._rewards = np.zeros(capacity, dtype=np.float64)
        self._terminal = np.zeros(capacity, dtype=bool)

    def __len__(self) -> int:
        return self.count

    def push(self, t: Transition) -> None:
        i = self._next
        self._obs[i] = t.state_obs
        self._next_obs[i] = t.next_state_obs
        self._actions[i] = t.action
        self._rewards[i] = t.reward
        self._terminal[i] = t.terminal
        self._next = (i + 1) % self.capacity
        self.count = min(self.count + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        idx = rng.integers(0, self.count, size=batch_size)
        return (self._obs[idx], self._actions[idx], self._rewards[idx],
                self._next_obs[idx], self._terminal[idx])

    def get(self, i: int) -> Transition:
        if not 0 <= i < self.count:
            raise IndexError(i)
        return Transition(self._obs[i].copy(), int(self._actions[i]),
                          float(self._rewards[i]), self._next_obs[i].copy(),
                          bool(self._terminal[i]))


class DqnAgent:
    """One drone's policy/target network pair plus its replay memory."""

    def __init__(self, obs_size: int, config: AgentConfig, seed: int):
        self.obs_size = obs_size
        self.config = config
        dims = (obs_size, config.hidden_sizes[0], config.hidden_sizes[1],
                NUM_ACTIONS)
        self.policy = nn.init(dims, seed=seed)
        self.target = nn.clone(self.policy)
        self.adam = nn.init_adam(self.policy, learning_rate=config.learning_rate)
        self.replay = ReplayMemory(config.replay_capacity, obs_size)
        self.learn_calls = 0

    def select_action(self, obs: np.ndarray, epsilon: float,
                      rng: np.random.Generator) -> int:
        """Epsilon-greedy over the policy net's Q-values; greedy ties go to
        the lowest action index."""
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError("epsilon must be in [0, 1]")
        if rng.random() < epsilon:
            return int(rng.integers(0, NUM_ACTIONS))
        q = nn._forward_cached(self.policy, obs)[-1]
        return int(np.argmax(q))

    def store(self, t: Transition) -> None:
        self.replay.push(t)

    def learn_step(self, rng: np.random.Generator) -> Optional[float]:
        """One replay update; no-op until the stored count strictly exceeds
        batch_size * warmup_multiplier. Returns the batch loss, or None while
        gated."""
        cfg = self.config
        if self.replay.count <= cfg.batch_size * cfg.warmup_multiplier:
            return None
        self.learn_calls += 1
        if self.learn_calls % cfg.sync_period_steps == 0:
            nn.copy_parameters(self.policy, self.target)

        obs, actions, rewards, next_obs, terminal = self.replay.sample(
            cfg.batch_size, rng)
        next_q = nn.forward(self.target, next_obs)
        targets_on_action = rewards + np.where(
            terminal, 0.0, cfg.discount * next_q.max(axis=1))

        cache = nn._forward_cached(self.policy, obs)
        q_pred = cache[-1]
        target_matrix = q_pred.copy()
        target_matrix[np.arange(cfg.batch_size), actions] = targets_on_action
        grads, loss = nn.backward(self.policy, obs, target_matrix,
                                  _cache=cache)
        nn.adam_step(self.policy, self.adam, grads)
        return loss


def save_checkpoint(agents: list[DqnAgent], directory: Path,
                    global_step: int, schedule: EpsilonSchedule) -> None:
    """One .mlp parameter file per drone plus a JSON sidecar with the agent
    configuration and the epsilon-schedule position."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for k, agent in enumerate(agents):
        (directory / f"drone_{k:02d}.mlp").write_bytes(
            nn.save_parameters(agent.policy))
    sidecar = {
        "schema_version": 1,
        "drone_count": len(agents),
        "obs_size": agents[0].obs_size,
        "global_step": global_step,
        "epsilon_schedule": asdict(schedule),
        "agent_config": {**asdict(agents[0].config),
                         "hidden_sizes": list(agents[0].config.hidden_sizes)},
    }
    (directory / "agents.json").write_text(json.dumps(sidecar, indent=2))


def load_checkpoint(directory: Path) -> tuple[list[DqnAgent], int, EpsilonSchedule]:
    """Restore agents from a checkpoint directory. The target network is
    re-synced to the restored policy; replay memory starts empty."""
    directory = Path(directory)
    sidecar_path = directory / "agents.json"
    if not sidecar_path.exists():
        raise FileNotFoundError(f"no agents.json under {directory}")
    sidecar = json.loads(sidecar_path.read_text())
    cfg_dict = dict(sidecar["agent_config"])
    cfg_dict["hidden_sizes"] = tuple(cfg_dict["hidden_sizes"])
    config = AgentConfig(**cfg_dict)
    schedule = EpsilonSchedule(**sidecar["epsilon_schedule"])
    agents = []
    for k in range(sidecar["drone_count"]):
        agent = DqnAgent(sidecar["obs_size"], config, seed=0)
        net = nn.load_parameters((directory / f"drone_{k:02d}.mlp").read_bytes())
        if net.dims != agent.policy.dims:
            raise nn.FormatError(f"checkpoint dims {net.dims} do not match "
                                 f"config dims {agent.policy.dims}")
        agent.policy = net
        agent.target = nn.clone(net)
        agents.append(agent)
    return agents, int(sidecar["global_step"]), schedule

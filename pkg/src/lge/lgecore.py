"""Latent go-explore: return-then-explore driven by latent novelty.

Each episode first samples a final goal from stored states, preferring the
sparse end of a nonparametric latent-density ranking through a truncated
geometric distribution over ranks. The stored trajectory up to that state
is reduced to subgoals spaced more than the latent threshold apart, the
goal-conditioned agent chases the subgoals one at a time, and once the
plan is exhausted the episode finishes with repeated random actions. The
encoder retrains on a fixed step cadence, after which all stored states
are re-embedded and the density table is rebuilt.

:class:`ExplorationRunner` owns the phase structure, replay storage,
per-step training, and coverage rows; the latent specifics live in
:class:`LgeRunner`, and the cell-based baseline reuses the same loop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .agent import SacAgent
from .density import (
    density_order,
    knn_log_density,
    sample_rank_truncated_geometric,
)
from .envsim import MazeEnv
from .evalmetrics import CoverageTracker
from .latentrep import LatentRepresentation
from .replay import LatentGoalReward, ReplayBuffer

__all__ = ["LgeConfig", "LgeRunner", "ExplorationRunner", "RunStreams", "make_streams"]


@dataclass
class LgeConfig:
    latent_threshold: float = 1.0
    geometric_p: float = 0.05
    latent_dim: int = 16
    encoder_hidden: tuple[int, ...] = (64, 64)
    encoder_objective: str = "forward"
    encoder_lr: float = 1e-3
    encoder_batch_size: int = 32
    encoder_grad_steps: int = 500
    encoder_train_every: int = 5000
    post_exploration_steps: int = 50
    action_repeat_prob: float = 0.9
    buffer_capacity: int = 1_000_000
    # ablation switches
    post_exploration: bool = True
    uniform_goal_sampling: bool = False
    reduce_trajectory: bool = True

    def __post_init__(self):
        if self.latent_threshold <= 0:
            raise ValueError("latent_threshold must be positive")
        if not 0.0 < self.geometric_p <= 1.0:
            raise ValueError("geometric_p must be in (0, 1]")
        if self.post_exploration_steps < 1:
            raise ValueError("post_exploration_steps must be positive")
        if not 0.0 <= self.action_repeat_prob <= 1.0:
            raise ValueError("action_repeat_prob must be in [0, 1]")


@dataclass
class RunStreams:
    """Independent random streams for every stochastic component."""

    agent_init: np.random.Generator
    rep_init: np.random.Generator
    actions: np.random.Generator
    explore: np.random.Generator
    batches: np.random.Generator
    updates: np.random.Generator
    goals: np.random.Generator
    encoder: np.random.Generator


def make_streams(seed: int) -> RunStreams:
    children = np.random.SeedSequence(seed).spawn(8)
    return RunStreams(*(np.random.default_rng(c) for c in children))


class ExplorationRunner:
    """Shared return-then-explore loop over a goal-conditioned agent.

    Subclasses provide goal selection (:meth:`prepare_episode`), the
    subgoal-achievement test (:meth:`achieved`), the relabelling reward
    predicate (``reward_fn``), and bookkeeping hooks.
    """

    def __init__(self, env: MazeEnv, agent: SacAgent, tracker: CoverageTracker,
                 streams: RunStreams, buffer_capacity: int,
                 post_exploration_steps: int, action_repeat_prob: float,
                 post_exploration: bool):
        self.env = env
        self.agent = agent
        self.tracker = tracker
        self.streams = streams
        self.buffer = ReplayBuffer(env.observation_dim, env.action_dim, buffer_capacity)
        self.post_exploration_steps = post_exploration_steps
        self.action_repeat_prob = action_repeat_prob
        self.post_exploration = post_exploration
        self.reward_fn = None  # set by subclass
        self.rows: list[tuple[int, int, float]] = []
        self.t = 0

    # -- subclass hooks -----------------------------------------------------------

    def prepare_episode(self) -> list[np.ndarray]:
        """Subgoal states for one episode, final goal last. Empty means a
        pure exploration episode (nothing stored yet)."""
        raise NotImplementedError

    def achieved(self, obs: np.ndarray, goal: np.ndarray) -> bool:
        raise NotImplementedError

    def maybe_refresh(self) -> None:
        """Cadence hook, called once after every environment step."""

    def on_episode_committed(self, start: int, end: int) -> None:
        """Called after an episode's transitions land in the buffer."""

    # -- main loop -----------------------------------------------------------------

    def _record(self, obs: np.ndarray) -> None:
        if self.tracker.visit(obs):
            self.rows.append((self.t, self.tracker.cells_covered, self.tracker.coverage))

    def _explore_action(self, prev_action: np.ndarray | None) -> np.ndarray:
        rng = self.streams.explore
        if prev_action is not None and rng.random() < self.action_repeat_prob:
            return prev_action
        return rng.uniform(-1.0, 1.0, size=self.env.action_dim)

    def _train_step(self) -> None:
        cfg = self.agent.config
        if self.t < cfg.learning_starts or self.buffer.size == 0:
            return
        if self.t % cfg.train_every != 0:
            return
        for _ in range(cfg.gradient_steps):
            batch = self.buffer.her_batch(cfg.batch_size, cfg.her_relabel_prob,
                                          self.reward_fn, self.streams.batches)
            self.agent.update(batch, self.streams.updates)

    def run(self, total_steps: int) -> list[tuple[int, int, float]]:
        if total_steps < 1:
            raise ValueError("total_steps must be positive")
        self.rows = []
        self.t = 0
        first_obs = self.env.reset()
        self._record(first_obs)
        while self.t < total_steps:
            obs = self.env.reset() if self.t else first_obs
            subgoals = self.prepare_episode()
            k = 0
            explore_left: int | None = None
            prev_action: np.ndarray | None = None
            final_goal = subgoals[-1] if subgoals else obs.copy()
            self.buffer.begin_episode()
            start_index = self.buffer.size
            while self.t < total_steps:
                in_explore = k >= len(subgoals)
                if in_explore:
                    if explore_left is None:
                        # a cold-start episode explores even when the
                        # post-exploration phase is ablated away
                        explore_left = self.post_exploration_steps \
                            if (self.post_exploration or not subgoals) else 0
                    if explore_left <= 0:
                        break
                    goal_label = final_goal
                    action = self._explore_action(prev_action)
                    prev_action = action
                else:
                    goal_label = subgoals[k]
                    action = self.agent.act(obs, goal_label, rng=self.streams.actions)
                result = self.env.step(action)
                self.t += 1
                if in_explore:
                    explore_left -= 1
                    done = explore_left == 0
                else:
                    done = False
                self.buffer.add(obs, action, result.obs, goal_label, done)
                if not in_explore and self.achieved(result.obs, subgoals[k]):
                    k += 1  # one subgoal per step, even if several are close
                self._record(result.obs)
                obs = result.obs
                self._train_step()
                self.maybe_refresh()
                if result.truncated:
                    break
                if in_explore and explore_left <= 0:
                    break
            stored = self.buffer.end_episode()
            if stored:
                self.on_episode_committed(start_index, start_index + stored)
        self.rows.append((total_steps, self.tracker.cells_covered, self.tracker.coverage))
        return self.rows


class _GoalTable:
    """Snapshot of buffer indices ordered from lowest to highest density."""

    def __init__(self, order: np.ndarray):
        self.order = order
        self.n = len(order)

    def sample(self, rng: np.random.Generator, p: float, uniform: bool) -> int:
        if uniform:
            rank = int(rng.integers(1, self.n + 1))
        else:
            rank = sample_rank_truncated_geometric(self.n, p, rng)
        return int(self.order[rank - 1])


class LgeRunner(ExplorationRunner):
    def __init__(self, env: MazeEnv, agent: SacAgent, rep: LatentRepresentation,
                 tracker: CoverageTracker, streams: RunStreams, config: LgeConfig):
        super().__init__(env, agent, tracker, streams,
                         buffer_capacity=config.buffer_capacity,
                         post_exploration_steps=config.post_exploration_steps,
                         action_repeat_prob=config.action_repeat_prob,
                         post_exploration=config.post_exploration)
        self.config = config
        self.rep = rep
        self.reward_fn = LatentGoalReward(rep.embed, config.latent_threshold)
        self._table: _GoalTable | None = None
        self._next_refresh = config.encoder_train_every

    # -- latent machinery ----------------------------------------------------------

    def _rebuild_table(self) -> None:
        latents = self.rep.embed(self.buffer.next_obs)
        self.buffer.set_latents(latents)
        if self.buffer.size < 2:
            self._table = _GoalTable(np.zeros(self.buffer.size, dtype=np.int64))
            return
        log_density = knn_log_density(latents.astype(np.float64))
        self._table = _GoalTable(density_order(log_density))

    def maybe_refresh(self) -> None:
        if self.t < self._next_refresh:
            return
        self._next_refresh += self.config.encoder_train_every
        if self.buffer.size == 0:
            return
        self.rep.train_round(self.buffer, self.streams.encoder,
                             grad_steps=self.config.encoder_grad_steps)
        self._rebuild_table()

    def reduce_plan(self, latents: np.ndarray, goal_index: int) -> list[int]:
        """Indices into the latent path spaced more than the threshold apart,
        walking backward from the goal, which is always retained."""
        kept = [goal_index]
        threshold = self.config.latent_threshold
        for j in range(goal_index - 1, -1, -1):
            gap = float(np.linalg.norm(latents[j] - latents[kept[-1]]))
            if gap > threshold:
                kept.append(j)
        kept.reverse()
        return kept

    def prepare_episode(self) -> list[np.ndarray]:
        if self.buffer.episode_count == 0:
            return []
        if self._table is None or self._table.n == 0:
            self._rebuild_table()
        idx = self._table.sample(self.streams.goals, self.config.geometric_p,
                                 self.config.uniform_goal_sampling)
        start, _ = self.buffer.episode_of(idx)
        path = self.buffer.next_obs[start:idx + 1]
        if self.config.reduce_trajectory:
            latents = self.rep.embed(path)
            kept = self.reduce_plan(latents, len(path) - 1)
        else:
            kept = list(range(len(path)))
        return [path[j].copy() for j in kept]

    def achieved(self, obs: np.ndarray, goal: np.ndarray) -> bool:
        return bool(self.reward_fn(obs[None, :], goal[None, :])[0])

"""Cell-based go-explore baseline.

Observations discretise into cells by coordinate-wise floor division with a
fixed cell size. An archive keeps, per cell, a visit count and the shortest
trajectory prefix that first entered the cell. Episodes pick a goal cell
with weight 1/(1+count), replay that cell's best prefix as subgoals (the
first state entering each distinct cell along it), then explore randomly,
sharing the loop, agent, and relabelled training of the latent method. The
achievement test is same-cell membership.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .agent import SacAgent
from .envsim import MazeEnv
from .evalmetrics import CoverageTracker
from .lgecore import ExplorationRunner, RunStreams
from .replay import CellGoalReward

__all__ = ["GoExploreConfig", "GoExploreRunner", "cell_of"]


def cell_of(obs: np.ndarray, cell_size: float) -> tuple[int, ...]:
    """Archive cell of one observation: floor of each coordinate over size."""
    scaled = np.floor(np.asarray(obs, dtype=np.float64) / cell_size)
    return tuple(int(v) for v in scaled)


@dataclass
class GoExploreConfig:
    cell_size: float = 2.0
    post_exploration_steps: int = 50
    action_repeat_prob: float = 0.9
    buffer_capacity: int = 1_000_000
    post_exploration: bool = True

    def __post_init__(self):
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")


@dataclass
class _CellRecord:
    count: int
    prefix_len: int
    # states from the episode start through the first entry into the cell
    prefix: np.ndarray
    representative: np.ndarray = field(init=False)

    def __post_init__(self):
        self.representative = self.prefix[-1]


class GoExploreRunner(ExplorationRunner):
    def __init__(self, env: MazeEnv, agent: SacAgent, tracker: CoverageTracker,
                 streams: RunStreams, config: GoExploreConfig):
        super().__init__(env, agent, tracker, streams,
                         buffer_capacity=config.buffer_capacity,
                         post_exploration_steps=config.post_exploration_steps,
                         action_repeat_prob=config.action_repeat_prob,
                         post_exploration=config.post_exploration)
        self.config = config
        self.reward_fn = CellGoalReward(config.cell_size)
        # insertion order is the deterministic cell enumeration for sampling
        self.archive: dict[tuple[int, ...], _CellRecord] = {}

    # -- archive -----------------------------------------------------------------

    def _offer(self, cell: tuple[int, ...], prefix_len: int, prefix: np.ndarray) -> None:
        record = self.archive.get(cell)
        if record is None:
            self.archive[cell] = _CellRecord(count=0, prefix_len=prefix_len,
                                             prefix=prefix.copy())
        elif prefix_len < record.prefix_len:
            record.prefix_len = prefix_len
            record.prefix = prefix.copy()
            record.representative = record.prefix[-1]

    def on_episode_committed(self, start: int, end: int) -> None:
        obs0 = self.buffer.obs[start]
        cell0 = cell_of(obs0, self.config.cell_size)
        self._offer(cell0, 0, obs0[None, :])
        self.archive[cell0].count += 1
        path = self.buffer.next_obs[start:end]
        for i in range(len(path)):
            cell = cell_of(path[i], self.config.cell_size)
            record = self.archive.get(cell)
            if record is None or i + 1 < record.prefix_len:
                self._offer(cell, i + 1, np.vstack([obs0[None, :], path[:i + 1]]))
            self.archive[cell].count += 1

    # -- hooks ---------------------------------------------------------------------

    def prepare_episode(self) -> list[np.ndarray]:
        if not self.archive:
            return []
        records = list(self.archive.values())
        weights = np.array([1.0 / (1.0 + r.count) for r in records])
        weights /= weights.sum()
        pick = self.streams.goals.choice(len(records), p=weights)
        prefix = records[pick].prefix
        # subgoals: first state entering each distinct cell along the prefix,
        # never the start cell; the target cell's state closes the list
        seen = {cell_of(prefix[0], self.config.cell_size)}
        subgoals: list[np.ndarray] = []
        for state in prefix[1:]:
            cell = cell_of(state, self.config.cell_size)
            if cell not in seen:
                seen.add(cell)
                subgoals.append(state.copy())
        if not subgoals:
            # goal cell is the start cell itself; hold its representative
            subgoals = [prefix[-1].copy()]
        return subgoals

    def achieved(self, obs: np.ndarray, goal: np.ndarray) -> bool:
        return cell_of(obs, self.config.cell_size) == cell_of(goal, self.config.cell_size)

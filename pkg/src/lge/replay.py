"""Episode replay storage with hindsight goal relabelling.

Transitions live in flat arrays; episodes are contiguous index ranges and
are always evicted whole, oldest first. Batches relabel goals with the
future strategy: with probability ``relabel_prob`` the goal becomes the
next observation of a uniformly drawn step from the same episode at or
after the sampled one. Rewards are sparse: 0 when the achievement
predicate holds for (next_obs, goal), else -1. The stored done flag is
never rewritten by relabelling.

The buffer can carry a latent-point cache aligned one-to-one with the
stored next observations; it is the goal-sampling table for the latent
method and must be re-embedded whenever the encoder changes.
"""

from __future__ import annotations

import numpy as np

__all__ = ["ReplayBuffer", "LatentGoalReward", "CellGoalReward"]


class ReplayBuffer:
    """Flat transition storage with whole-episode eviction."""

    def __init__(self, obs_dim: int, action_dim: int, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.obs = np.zeros((0, obs_dim), dtype=np.float64)
        self.action = np.zeros((0, action_dim), dtype=np.float64)
        self.next_obs = np.zeros((0, obs_dim), dtype=np.float64)
        self.goal = np.zeros((0, obs_dim), dtype=np.float64)
        self.done = np.zeros(0, dtype=bool)
        # per-transition exclusive end index of its episode
        self._ep_end = np.zeros(0, dtype=np.int64)
        self._ep_bounds: list[tuple[int, int]] = []
        self._pending: list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, bool]] = []
        self._in_episode = False
        self.latents: np.ndarray | None = None

    # -- episode lifecycle ---------------------------------------------------

    def begin_episode(self) -> None:
        if self._in_episode:
            raise RuntimeError("previous episode still open")
        self._in_episode = True
        self._pending = []

    def add(self, obs, action, next_obs, goal, done: bool) -> None:
        if not self._in_episode:
            raise RuntimeError("add() outside an episode")
        self._pending.append((
            np.asarray(obs, dtype=np.float64).copy(),
            np.asarray(action, dtype=np.float64).copy(),
            np.asarray(next_obs, dtype=np.float64).copy(),
            np.asarray(goal, dtype=np.float64).copy(),
            bool(done),
        ))

    def end_episode(self) -> int:
        """Commit the open episode; returns the number of stored steps."""
        if not self._in_episode:
            raise RuntimeError("end_episode() outside an episode")
        self._in_episode = False
        steps = self._pending
        self._pending = []
        if not steps:
            return 0
        if len(steps) > self.capacity:
            raise ValueError("episode longer than buffer capacity")
        start = self.size
        self.obs = np.vstack([self.obs, [s[0] for s in steps]])
        self.action = np.vstack([self.action, [s[1] for s in steps]])
        self.next_obs = np.vstack([self.next_obs, [s[2] for s in steps]])
        self.goal = np.vstack([self.goal, [s[3] for s in steps]])
        self.done = np.concatenate([self.done, [s[4] for s in steps]])
        end = self.size
        self._ep_end = np.concatenate([self._ep_end, np.full(len(steps), end, dtype=np.int64)])
        self._ep_bounds.append((start, end))
        self._evict_if_needed()
        return len(steps)

    def _evict_if_needed(self) -> None:
        if self.size <= self.capacity:
            return
        drop = 0
        dropped_eps = 0
        for start, end in self._ep_bounds:
            if self.size - drop <= self.capacity:
                break
            drop = end
            dropped_eps += 1
        self.obs = self.obs[drop:].copy()
        self.action = self.action[drop:].copy()
        self.next_obs = self.next_obs[drop:].copy()
        self.goal = self.goal[drop:].copy()
        self.done = self.done[drop:].copy()
        self._ep_end = self._ep_end[drop:] - drop
        self._ep_bounds = [(s - drop, e - drop) for s, e in self._ep_bounds[dropped_eps:]]
        if self.latents is not None:
            if len(self.latents) >= drop:
                self.latents = self.latents[drop:].copy()
            else:
                self.latents = None

    # -- views ----------------------------------------------------------------

    @property
    def size(self) -> int:
        return self.obs.shape[0]

    @property
    def episode_count(self) -> int:
        return len(self._ep_bounds)

    def episode_bounds(self, ep: int) -> tuple[int, int]:
        return self._ep_bounds[ep]

    def episode_of(self, index: int) -> tuple[int, int]:
        """(start, end) bounds of the episode containing a transition index."""
        end = int(self._ep_end[index])
        for start, e in reversed(self._ep_bounds):
            if e == end:
                return (start, e)
        raise IndexError(index)

    # -- latent cache -----------------------------------------------------------

    def set_latents(self, latents: np.ndarray) -> None:
        latents = np.asarray(latents)
        if latents.shape[0] != self.size:
            raise ValueError("latent cache must align with stored transitions")
        self.latents = latents

    def append_latents(self, latents: np.ndarray) -> None:
        latents = np.asarray(latents)
        if self.latents is None:
            if latents.shape[0] != self.size:
                raise ValueError("latent cache must align with stored transitions")
            self.latents = latents
            return
        if self.latents.shape[0] + latents.shape[0] != self.size:
            raise ValueError("latent cache must align with stored transitions")
        self.latents = np.vstack([self.latents, latents])

    # -- sampling ----------------------------------------------------------------

    def her_batch(self, batch_size: int, relabel_prob: float, reward_fn,
                  rng: np.random.Generator) -> dict[str, np.ndarray]:
        """Uniform transition batch with future-strategy goal relabelling."""
        if self.size == 0:
            raise RuntimeError("cannot sample from an empty buffer")
        if not 0.0 <= relabel_prob <= 1.0:
            raise ValueError("relabel_prob must be in [0, 1]")
        idx = rng.integers(0, self.size, size=batch_size)
        relabel = rng.random(batch_size) < relabel_prob
        ep_end = self._ep_end[idx]
        # future index j uniform over {i, ..., episode end - 1}
        j = idx + (rng.random(batch_size) * (ep_end - idx)).astype(np.int64)
        goals = np.where(relabel[:, None], self.next_obs[j], self.goal[idx])
        achieved = np.asarray(reward_fn(self.next_obs[idx], goals), dtype=bool)
        rewards = np.where(achieved, 0.0, -1.0)
        return {
            "obs": self.obs[idx],
            "action": self.action[idx],
            "next_obs": self.next_obs[idx],
            "goal": goals,
            "reward": rewards,
            "done": self.done[idx].astype(np.float64),
        }


class LatentGoalReward:
    """Goal achieved when encoder embeddings are closer than the threshold."""

    def __init__(self, embed_fn, distance: float):
        if distance <= 0:
            raise ValueError("distance must be positive")
        self.embed_fn = embed_fn
        self.distance = distance

    def __call__(self, next_obs: np.ndarray, goals: np.ndarray) -> np.ndarray:
        za = self.embed_fn(np.atleast_2d(next_obs))
        zb = self.embed_fn(np.atleast_2d(goals))
        dist = np.linalg.norm(za - zb, axis=1)
        return dist < self.distance


class CellGoalReward:
    """Goal achieved when both observations share a grid cell."""

    def __init__(self, cell_size: float):
        if cell_size <= 0:
            raise ValueError("cell_size must be positive")
        self.cell_size = cell_size

    def __call__(self, next_obs: np.ndarray, goals: np.ndarray) -> np.ndarray:
        ca = np.floor(np.atleast_2d(next_obs) / self.cell_size)
        cb = np.floor(np.atleast_2d(goals) / self.cell_size)
        return np.all(ca == cb, axis=1)

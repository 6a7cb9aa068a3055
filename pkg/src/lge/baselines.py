"""Reference exploration baselines that need no learning."""

from __future__ import annotations

import numpy as np

from .envsim import MazeEnv
from .evalmetrics import CoverageTracker

__all__ = ["RandomRunner"]


class RandomRunner:
    """Uniform random actions, resampled independently every step."""

    def __init__(self, env: MazeEnv, tracker: CoverageTracker,
                 rng: np.random.Generator, collect_points: bool = False):
        self.env = env
        self.tracker = tracker
        self.rng = rng
        self.collect_points = collect_points
        self.points: list[tuple[int, np.ndarray]] = []
        self.rows: list[tuple[int, int, float]] = []
        self.t = 0

    def _record(self, obs: np.ndarray) -> None:
        if self.tracker.visit(obs):
            self.rows.append((self.t, self.tracker.cells_covered, self.tracker.coverage))

    def run(self, total_steps: int) -> list[tuple[int, int, float]]:
        if total_steps < 1:
            raise ValueError("total_steps must be positive")
        self.rows = []
        self.t = 0
        obs = self.env.reset()
        self._record(obs)
        while self.t < total_steps:
            if self.t:
                obs = self.env.reset()
            while self.t < total_steps:
                action = self.rng.uniform(-1.0, 1.0, size=self.env.action_dim)
                result = self.env.step(action)
                self.t += 1
                self._record(result.obs)
                if self.collect_points:
                    self.points.append((self.t, result.obs.copy()))
                if result.truncated:
                    break
        self.rows.append((total_steps, self.tracker.cells_covered, self.tracker.coverage))
        return self.rows

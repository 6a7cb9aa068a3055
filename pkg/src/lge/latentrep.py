"""Jointly learned latent representation of observations.

An encoder MLP maps observations to latent points. It trains end to end
through one of two self-supervised objectives on replayed transitions:

* ``forward``: predict the next observation from the current latent and
  the action; loss is the mean over the batch of half the squared error.
* ``inverse``: predict the action from the latents of both endpoints.

The encoder is the only part consumers see: :meth:`embed` turns stored
observations into the latent points used for density scoring, goal
sampling, and goal-reach tests.
"""

from __future__ import annotations

import numpy as np

from .replay import ReplayBuffer
from .tensorcore import Adam, Mlp, Tensor, concat

__all__ = ["LatentRepresentation"]

_OBJECTIVES = ("forward", "inverse")


class LatentRepresentation:
    def __init__(
        self,
        obs_dim: int,
        action_dim: int,
        rng: np.random.Generator,
        latent_dim: int = 16,
        hidden: tuple[int, ...] = (64, 64),
        objective: str = "forward",
        lr: float = 1e-3,
        batch_size: int = 32,
        dtype=np.float64,
    ):
        if objective not in _OBJECTIVES:
            raise ValueError(f"objective must be one of {_OBJECTIVES}")
        if latent_dim < 1:
            raise ValueError("latent_dim must be positive")
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.latent_dim = latent_dim
        self.objective = objective
        self.batch_size = batch_size
        self.dtype = np.dtype(dtype)
        self.encoder = Mlp([obs_dim, *hidden, latent_dim], rng,
                           activation="relu", dtype=dtype)
        if objective == "forward":
            head_in = latent_dim + action_dim
            head_out = obs_dim
        else:
            head_in = 2 * latent_dim
            head_out = action_dim
        self.head = Mlp([head_in, *hidden, head_out], rng,
                        activation="relu", dtype=dtype)
        self.optimizer = Adam(self.encoder.parameters() + self.head.parameters(), lr=lr)

    def embed(self, obs: np.ndarray) -> np.ndarray:
        """Latent points for a batch of observations (no gradients)."""
        obs = np.asarray(obs, dtype=self.dtype)
        single = obs.ndim == 1
        z = self.encoder.forward_array(np.atleast_2d(obs))
        return z[0] if single else z

    def latent_distance(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        za = self.embed(np.atleast_2d(a))
        zb = self.embed(np.atleast_2d(b))
        return np.linalg.norm(za - zb, axis=1)

    def _loss(self, obs, action, next_obs) -> Tensor:
        z = self.encoder(obs)
        if self.objective == "forward":
            pred = self.head(concat([z, Tensor(action.astype(self.dtype))]))
            target = next_obs
        else:
            z_next = self.encoder(next_obs)
            pred = self.head(concat([z, z_next]))
            target = action
        diff = pred - Tensor(target.astype(self.dtype))
        return diff.square().sum(axis=1).mean() * 0.5

    def train_round(self, buffer: ReplayBuffer, rng: np.random.Generator,
                    grad_steps: int = 500) -> float:
        """Train on uniform transition batches; returns the mean loss."""
        if buffer.size == 0:
            raise RuntimeError("cannot train on an empty buffer")
        total = 0.0
        for _ in range(grad_steps):
            idx = rng.integers(0, buffer.size, size=self.batch_size)
            loss = self._loss(buffer.obs[idx], buffer.action[idx], buffer.next_obs[idx])
            self.optimizer.zero_grad()
            loss.backward()
            self.optimizer.step()
            total += float(loss.data)
        return total / grad_steps

    def batch_loss(self, obs, action, next_obs) -> float:
        """Loss of one explicit batch, for diagnostics and tests."""
        return float(self._loss(np.asarray(obs, dtype=self.dtype),
                                np.asarray(action),
                                np.asarray(next_obs)).data)

"""Goal-conditioned soft actor-critic.

Twin critics with Polyak-averaged targets, a squashed-Gaussian actor, and
an automatically tuned entropy temperature. Observations and goals are
concatenated at every network input. One :meth:`SacAgent.update` performs
one gradient step on each of temperature, critics, and actor, then moves
the targets; the whole step is atomic, so a non-finite loss or gradient
anywhere leaves every parameter untouched.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .tensorcore import Adam, Mlp, Tensor, concat, minimum

__all__ = ["SacConfig", "SacAgent"]

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
SQUASH_EPS = 1e-6


@dataclass
class SacConfig:
    obs_dim: int
    action_dim: int
    goal_dim: int | None = None
    hidden: tuple[int, ...] = (300, 400)
    lr: float = 3e-4
    batch_size: int = 256
    gamma: float = 0.99
    tau: float = 0.005
    target_entropy: float | None = None  # None picks -action_dim
    learning_starts: int = 100
    train_every: int = 1
    gradient_steps: int = 1
    her_relabel_prob: float = 0.8
    dtype: str = "float64"

    def __post_init__(self):
        if self.goal_dim is None:
            self.goal_dim = self.obs_dim
        if self.target_entropy is None:
            self.target_entropy = -float(self.action_dim)
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must be in (0, 1]")
        if np.dtype(self.dtype).kind != "f":
            raise ValueError("dtype must be a float type")


class SacAgent:
    def __init__(self, config: SacConfig, rng: np.random.Generator):
        self.config = config
        dtype = np.dtype(config.dtype)
        self.dtype = dtype
        in_dim = config.obs_dim + config.goal_dim
        h_last = config.hidden[-1]
        a_dim = config.action_dim
        # actor: shared trunk, then zero-initialised mean/log-std heads, so
        # the untrained deterministic action is exactly the zero vector
        self.trunk = Mlp([in_dim, *config.hidden], rng, dtype=dtype)
        self.mean_head = Mlp([h_last, a_dim], rng, dtype=dtype, zero_last=True)
        self.logstd_head = Mlp([h_last, a_dim], rng, dtype=dtype, zero_last=True)
        q_in = in_dim + a_dim
        self.q1 = Mlp([q_in, *config.hidden, 1], rng, dtype=dtype, zero_last=True)
        self.q2 = Mlp([q_in, *config.hidden, 1], rng, dtype=dtype, zero_last=True)
        self.q1_target = Mlp([q_in, *config.hidden, 1], rng, dtype=dtype)
        self.q2_target = Mlp([q_in, *config.hidden, 1], rng, dtype=dtype)
        self.q1_target.copy_from(self.q1)
        self.q2_target.copy_from(self.q2)
        self.log_alpha = Tensor(np.zeros(1, dtype=dtype), requires_grad=True)
        actor_params = (self.trunk.parameters() + self.mean_head.parameters()
                        + self.logstd_head.parameters())
        self._critic_params = self.q1.parameters() + self.q2.parameters()
        self.actor_opt = Adam(actor_params, lr=config.lr)
        self.critic_opt = Adam(self._critic_params, lr=config.lr)
        self.ent_opt = Adam([self.log_alpha], lr=config.lr)
        self.updates = 0

    # -- acting -----------------------------------------------------------------

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha.data[0]))

    def _actor_heads_np(self, sg: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        h = np.maximum(self.trunk.forward_array(sg), 0.0)
        mu = self.mean_head.forward_array(h)
        logstd = np.clip(self.logstd_head.forward_array(h), LOG_STD_MIN, LOG_STD_MAX)
        return mu, logstd

    def act(self, obs: np.ndarray, goal: np.ndarray,
            rng: np.random.Generator | None = None,
            deterministic: bool = False) -> np.ndarray:
        sg = np.concatenate([np.asarray(obs, dtype=self.dtype).reshape(-1),
                             np.asarray(goal, dtype=self.dtype).reshape(-1)])[None, :]
        mu, logstd = self._actor_heads_np(sg)
        if deterministic:
            return np.tanh(mu[0]).astype(np.float64)
        if rng is None:
            raise ValueError("stochastic act needs an rng")
        eps = rng.standard_normal(mu.shape).astype(self.dtype)
        return np.tanh(mu + np.exp(logstd) * eps)[0].astype(np.float64)

    def _sample_np(self, sg: np.ndarray, rng: np.random.Generator):
        mu, logstd = self._actor_heads_np(sg)
        eps = rng.standard_normal(mu.shape).astype(self.dtype)
        action = np.tanh(mu + np.exp(logstd) * eps)
        log_prob = (
            (-0.5 * eps * eps - logstd).sum(axis=1)
            - 0.5 * np.log(2.0 * np.pi) * sg.dtype.type(self.config.action_dim)
            - np.log((1.0 - action * action) + SQUASH_EPS).sum(axis=1)
        )
        return action, log_prob

    # -- learning ----------------------------------------------------------------

    def _sample_tape(self, sg: np.ndarray, rng: np.random.Generator):
        x = Tensor(sg)
        h = self.trunk(x).relu()
        mu = self.mean_head(h)
        logstd = self.logstd_head(h).clip(LOG_STD_MIN, LOG_STD_MAX)
        eps = rng.standard_normal(mu.data.shape).astype(self.dtype)
        u = mu + logstd.exp() * Tensor(eps)
        action = u.tanh()
        # constant part of the Gaussian log-density under reparameterisation
        const = (-0.5 * eps * eps).sum(axis=1, keepdims=True) \
            - 0.5 * np.log(2.0 * np.pi) * self.config.action_dim
        gauss = Tensor(const.astype(self.dtype)) - logstd.sum(axis=1, keepdims=True)
        corr = ((1.0 - action.square()) + SQUASH_EPS).log().sum(axis=1, keepdims=True)
        return action, gauss - corr

    def update(self, batch: dict[str, np.ndarray], rng: np.random.Generator) -> dict:
        """One gradient step per component from a relabelled batch."""
        cfg = self.config
        dtype = self.dtype
        sg = np.concatenate([batch["obs"], batch["goal"]], axis=1).astype(dtype)
        next_sg = np.concatenate([batch["next_obs"], batch["goal"]], axis=1).astype(dtype)
        action = np.asarray(batch["action"], dtype=dtype)
        reward = np.asarray(batch["reward"], dtype=dtype).reshape(-1)
        done = np.asarray(batch["done"], dtype=dtype).reshape(-1)
        alpha = self.alpha  # snapshot used by both losses this step

        # critic target from the frozen target networks, no tape
        next_action, next_logp = self._sample_np(next_sg, rng)
        q_in_next = np.concatenate([next_sg, next_action], axis=1)
        q_next = np.minimum(self.q1_target.forward_array(q_in_next),
                            self.q2_target.forward_array(q_in_next)).reshape(-1)
        y = reward + cfg.gamma * (1.0 - done) * (q_next - alpha * next_logp)

        # critic loss and gradients
        q_in = np.concatenate([sg, action], axis=1)
        target = Tensor(y[:, None].astype(dtype))
        self.critic_opt.zero_grad()
        self.actor_opt.zero_grad()
        self.ent_opt.zero_grad()
        critic_loss = ((self.q1(q_in) - target).square().mean()
                       + (self.q2(q_in) - target).square().mean()) * 0.5
        critic_loss.backward()

        # actor loss with critics frozen so their weights take no gradient
        for p in self._critic_params:
            p.requires_grad = False
        try:
            action_pi, logp_pi = self._sample_tape(sg, rng)
            q_input = concat([Tensor(sg), action_pi])
            q_pi = minimum(self.q1(q_input), self.q2(q_input))
            actor_loss = (logp_pi * alpha - q_pi).mean()
            actor_loss.backward()
        finally:
            for p in self._critic_params:
                p.requires_grad = True

        # temperature loss on the detached log-probabilities
        ent_gap = logp_pi.data + dtype.type(cfg.target_entropy)
        ent_loss = -(self.log_alpha * Tensor(ent_gap)).mean()
        ent_loss.backward()

        losses = (float(critic_loss.data), float(actor_loss.data), float(ent_loss.data))
        finite = all(np.isfinite(v) for v in losses) and all(
            p.grad is None or np.isfinite(p.grad).all()
            for p in (self.actor_opt.params + self._critic_params + [self.log_alpha])
        )
        if not finite:
            self.critic_opt.zero_grad()
            self.actor_opt.zero_grad()
            self.ent_opt.zero_grad()
            return {"applied": False, "critic_loss": losses[0],
                    "actor_loss": losses[1], "ent_loss": losses[2], "alpha": alpha}

        self.ent_opt.step()
        self.critic_opt.step()
        self.actor_opt.step()
        self.q1_target.polyak_from(self.q1, cfg.tau)
        self.q2_target.polyak_from(self.q2, cfg.tau)
        self.updates += 1
        return {"applied": True, "critic_loss": losses[0],
                "actor_loss": losses[1], "ent_loss": losses[2], "alpha": alpha}

    # -- persistence ----------------------------------------------------------------

    def _net_map(self) -> dict[str, Mlp]:
        return {"trunk": self.trunk, "mean_head": self.mean_head,
                "logstd_head": self.logstd_head, "q1": self.q1, "q2": self.q2,
                "q1_target": self.q1_target, "q2_target": self.q2_target}

    def save(self, path) -> None:
        arrays = {name: net.params_vector() for name, net in self._net_map().items()}
        arrays["log_alpha"] = self.log_alpha.data.copy()
        arrays["config"] = np.frombuffer(
            json.dumps(asdict(self.config)).encode("utf-8"), dtype=np.uint8)
        np.savez(path, **arrays)

    def load(self, path) -> None:
        with np.load(path) as data:
            stored = json.loads(bytes(data["config"].tobytes()).decode("utf-8"))
            ours = asdict(self.config)
            stored["hidden"] = tuple(stored["hidden"])
            if stored != ours:
                raise ValueError("checkpoint config does not match agent config")
            for name, net in self._net_map().items():
                net.load_params_vector(data[name])
            self.log_alpha.data[...] = data["log_alpha"]

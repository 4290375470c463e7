"""TD3 backbone: deterministic actor, clipped double critics, target nets.

Also provides the per-step probes (min-critic Q and TD-error magnitude at
the freshly collected transition) that the stop controller consumes. The
probes never mutate the agent.
"""

from __future__ import annotations

import json
from typing import NamedTuple

import numpy as np

from .nets import AdamState, Mlp, adam_step


class StepProbe(NamedTuple):
    q_hat: float          # min of the two live critics at (s, a)
    td_error_mag: float   # |bootstrap target - q_hat|, >= 0


class TransitionBatch(NamedTuple):
    states: np.ndarray       # (B, S)
    actions: np.ndarray      # (B, A)
    rewards: np.ndarray      # (B,)
    next_states: np.ndarray  # (B, S)
    dones: np.ndarray        # (B,), 1.0 only on true terminals


class Td3Agent:
    """Twin-critic deterministic policy gradient agent on numpy MLPs."""

    def __init__(
        self,
        state_dim: int,
        action_dim: int,
        rng: np.random.Generator,
        hidden: tuple[int, ...] = (64, 64),
        actor_lr: float = 1e-4,
        critic_lr: float = 1e-3,
        discount: float = 0.95,
        polyak_rate: float = 0.005,
        policy_noise_std: float = 0.2,
        policy_noise_clip: float = 0.5,
        policy_delay: int = 2,
        action_low=None,
        action_high=None,
    ):
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.discount = discount
        self.polyak_rate = polyak_rate
        self.policy_noise_std = policy_noise_std
        self.policy_noise_clip = policy_noise_clip
        self.policy_delay = policy_delay
        self.action_low = np.full(action_dim, -1.0) if action_low is None else np.asarray(action_low, dtype=np.float64)
        self.action_high = np.full(action_dim, 1.0) if action_high is None else np.asarray(action_high, dtype=np.float64)

        actor_dims = [state_dim, *hidden, action_dim]
        critic_dims = [state_dim + action_dim, *hidden, 1]
        self.actor = Mlp.create(actor_dims, rng, output_activation="tanh")
        self.critic1 = Mlp.create(critic_dims, rng)
        self.critic2 = Mlp.create(critic_dims, rng)
        self.target_actor = self.actor.copy()
        self.target_critic1 = self.critic1.copy()
        self.target_critic2 = self.critic2.copy()

        self.actor_opt = AdamState.for_params(self.actor.theta, actor_lr)
        self.critic1_opt = AdamState.for_params(self.critic1.theta, critic_lr)
        self.critic2_opt = AdamState.for_params(self.critic2.theta, critic_lr)

    # ------------------------------------------------------------ acting

    def select_action(self, state: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
        state = np.asarray(state, dtype=np.float64)
        if not np.all(np.isfinite(state)):
            raise ValueError("non-finite state")
        action = self.actor.forward(state)
        if sigma > 0.0:
            action = action + rng.normal(0.0, sigma, size=self.action_dim)
        return np.clip(action, self.action_low, self.action_high)

    # ------------------------------------------------------------ probes

    def probe_batch(
        self,
        states: np.ndarray,
        actions: np.ndarray,
        rewards: np.ndarray,
        next_states: np.ndarray,
        dones: np.ndarray,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized (q_hat, td_error_mag) over a transition array.

        The bootstrap target uses the target nets without policy smoothing
        noise, so probe values are deterministic given the trajectory.
        """
        sa = np.concatenate([states, actions], axis=1)
        q = np.minimum(self.critic1.forward(sa), self.critic2.forward(sa))[:, 0]
        next_a = self.target_actor.forward(next_states)
        nsa = np.concatenate([next_states, next_a], axis=1)
        qt = np.minimum(self.target_critic1.forward(nsa), self.target_critic2.forward(nsa))[:, 0]
        y = rewards + (1.0 - dones) * self.discount * qt
        return q, np.abs(y - q)

    def probe_step(self, state, action, reward: float, next_state, done: float) -> StepProbe:
        sa = np.concatenate([state, action])
        q = min(float(self.critic1.forward(sa)[0]), float(self.critic2.forward(sa)[0]))
        next_a = self.target_actor.forward(next_state)
        nsa = np.concatenate([next_state, next_a])
        qt = min(
            float(self.target_critic1.forward(nsa)[0]),
            float(self.target_critic2.forward(nsa)[0]),
        )
        y = reward + (1.0 - done) * self.discount * qt
        return StepProbe(q, abs(y - q))

    # ------------------------------------------------------------ updates

    def _critic_targets(self, batch: TransitionBatch, rng: np.random.Generator) -> np.ndarray:
        next_a = self.target_actor.forward(batch.next_states)
        noise = rng.normal(0.0, self.policy_noise_std, size=next_a.shape)
        np.clip(noise, -self.policy_noise_clip, self.policy_noise_clip, out=noise)
        next_a = np.clip(next_a + noise, self.action_low, self.action_high)
        nsa = np.concatenate([batch.next_states, next_a], axis=1)
        qt = np.minimum(
            self.target_critic1.forward(nsa), self.target_critic2.forward(nsa)
        )[:, 0]
        return batch.rewards + (1.0 - batch.dones) * self.discount * qt

    def update_critics(self, batch: TransitionBatch, rng: np.random.Generator) -> tuple[float, float]:
        """One Adam step on each critic toward the clipped double-Q target."""
        if len(batch.states) == 0:
            raise ValueError("empty batch")
        y = self._critic_targets(batch, rng)[:, None]
        sa = np.concatenate([batch.states, batch.actions], axis=1)
        inv_b = 1.0 / len(batch.states)
        losses = []
        for critic, opt in ((self.critic1, self.critic1_opt), (self.critic2, self.critic2_opt)):
            q, cache = critic.forward_cached(sa)
            err = q - y
            loss = float(np.mean(err**2))
            if not np.isfinite(loss):
                raise FloatingPointError("non-finite critic loss, update aborted")
            grads, _ = critic.backward_cached(cache, 2.0 * inv_b * err)
            adam_step(critic.theta, grads.flat, opt)
            losses.append(loss)
        return losses[0], losses[1]

    def update_actor(self, batch: TransitionBatch) -> float:
        """Ascend mean critic1 value of the actor's actions (delayed update)."""
        actions, actor_cache = self.actor.forward_cached(batch.states)
        sa = np.concatenate([batch.states, actions], axis=1)
        q, critic_cache = self.critic1.forward_cached(sa)
        loss = float(-np.mean(q))
        if not np.isfinite(loss):
            raise FloatingPointError("non-finite actor loss, update aborted")
        upstream = np.full_like(q, -1.0 / len(q))
        _, sa_grad = self.critic1.backward_cached(critic_cache, upstream)
        action_grad = sa_grad[:, self.state_dim:]
        grads, _ = self.actor.backward_cached(actor_cache, action_grad)
        adam_step(self.actor.theta, grads.flat, self.actor_opt)
        return loss

    def polyak_update(self, rate: float | None = None) -> None:
        rho = self.polyak_rate if rate is None else rate
        for target, live in (
            (self.target_actor, self.actor),
            (self.target_critic1, self.critic1),
            (self.target_critic2, self.critic2),
        ):
            target.theta *= 1.0 - rho
            target.theta += rho * live.theta

    # ------------------------------------------------------------ io

    def hyperparams(self) -> dict:
        return {
            "state_dim": self.state_dim,
            "action_dim": self.action_dim,
            "discount": self.discount,
            "polyak_rate": self.polyak_rate,
            "policy_noise_std": self.policy_noise_std,
            "policy_noise_clip": self.policy_noise_clip,
            "policy_delay": self.policy_delay,
            "action_low": self.action_low.tolist(),
            "action_high": self.action_high.tolist(),
        }

    def save(self, path: str) -> None:
        blob = {
            "hyperparams": self.hyperparams(),
            "nets": {
                name: getattr(self, name).to_dict()
                for name in (
                    "actor", "critic1", "critic2",
                    "target_actor", "target_critic1", "target_critic2",
                )
            },
            "adam": {
                name: getattr(self, name).to_dict()
                for name in ("actor_opt", "critic1_opt", "critic2_opt")
            },
        }
        with open(path, "w") as fh:
            json.dump(blob, fh)

    @classmethod
    def load(cls, path: str) -> "Td3Agent":
        with open(path) as fh:
            blob = json.load(fh)
        hp = blob["hyperparams"]
        agent = cls.__new__(cls)
        agent.state_dim = hp["state_dim"]
        agent.action_dim = hp["action_dim"]
        agent.discount = hp["discount"]
        agent.polyak_rate = hp["polyak_rate"]
        agent.policy_noise_std = hp["policy_noise_std"]
        agent.policy_noise_clip = hp["policy_noise_clip"]
        agent.policy_delay = hp["policy_delay"]
        agent.action_low = np.asarray(hp["action_low"], dtype=np.float64)
        agent.action_high = np.asarray(hp["action_high"], dtype=np.float64)
        for name in ("actor", "critic1", "critic2", "target_actor", "target_critic1", "target_critic2"):
            setattr(agent, name, Mlp.from_dict(blob["nets"][name]))
        for name in ("actor_opt", "critic1_opt", "critic2_opt"):
            setattr(agent, name, AdamState.from_dict(blob["adam"][name]))
        return agent

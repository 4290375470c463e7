"""Uniform replay buffer plus buffer-quality diagnostics.

The diagnostics classify every stored transition by its current min-critic
value and TD-error magnitude against split points (quadrant fractions),
and measure network plasticity as the fraction of strictly positive
hidden activations on a fixed probe batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .td3 import Td3Agent, TransitionBatch


class ReplayBuffer:
    """Fixed-capacity transition ring with uniform with-replacement sampling."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.dones = np.zeros(capacity)
        self.size = 0
        self._cursor = 0

    def push(self, state, action, reward: float, next_state, done: float) -> None:
        i = self._cursor
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.dones[i] = done
        self._cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> TransitionBatch:
        if self.size < batch_size:
            raise ValueError(f"buffer holds {self.size} < batch {batch_size}")
        idx = rng.integers(0, self.size, size=batch_size)
        return TransitionBatch(
            self.states[idx], self.actions[idx], self.rewards[idx],
            self.next_states[idx], self.dones[idx],
        )

    def contents(self) -> TransitionBatch:
        n = self.size
        return TransitionBatch(
            self.states[:n], self.actions[:n], self.rewards[:n],
            self.next_states[:n], self.dones[:n],
        )


@dataclass
class QuadrantStats:
    """Buffer composition by (Q value, TD loss) quadrant; fractions sum to 1."""

    q_split: float
    loss_split: float
    low_q_low_loss: float
    low_q_high_loss: float
    high_q_low_loss: float
    high_q_high_loss: float

    def fractions(self) -> tuple[float, float, float, float]:
        return (
            self.low_q_low_loss,
            self.low_q_high_loss,
            self.high_q_low_loss,
            self.high_q_high_loss,
        )


def buffer_probe_values(buffer: ReplayBuffer, agent: Td3Agent) -> tuple[np.ndarray, np.ndarray]:
    """Per-transition (q, loss) over the whole buffer under the current agent."""
    if buffer.size == 0:
        raise ValueError("empty buffer")
    batch = buffer.contents()
    return agent.probe_batch(*batch)


def classify_quadrants(
    q: np.ndarray, loss: np.ndarray, q_split: float, loss_split: float
) -> QuadrantStats:
    n = len(q)
    if n == 0 or len(loss) != n:
        raise ValueError("need matching nonempty q / loss arrays")
    high_q = q >= q_split
    high_loss = loss >= loss_split
    return QuadrantStats(
        q_split=q_split,
        loss_split=loss_split,
        low_q_low_loss=float((~high_q & ~high_loss).sum() / n),
        low_q_high_loss=float((~high_q & high_loss).sum() / n),
        high_q_low_loss=float((high_q & ~high_loss).sum() / n),
        high_q_high_loss=float((high_q & high_loss).sum() / n),
    )


def quadrant_stats(
    buffer: ReplayBuffer,
    agent: Td3Agent,
    q_split: float | None = None,
    loss_split: float | None = None,
) -> QuadrantStats:
    """Quadrant fractions of the stored data; splits default to the buffer's
    own mean q / mean loss when not supplied."""
    q, loss = buffer_probe_values(buffer, agent)
    if q_split is None:
        q_split = float(q.mean())
    if loss_split is None:
        loss_split = float(loss.mean())
    return classify_quadrants(q, loss, q_split, loss_split)


def fau(activations: np.ndarray) -> float:
    """Fraction of strictly positive entries (active units) in a snapshot."""
    activations = np.asarray(activations, dtype=np.float64)
    if activations.size == 0:
        raise ValueError("empty activation snapshot")
    return float((activations > 0.0).sum() / activations.size)


def hidden_fau(net, inputs: np.ndarray) -> float:
    """FAU over all hidden (post-ReLU) layers of an Mlp on a probe batch."""
    _, cache = net.forward_cached(inputs)
    hidden = cache[1:-1]
    if not hidden:
        raise ValueError("net has no hidden layers")
    return fau(np.concatenate([h.reshape(-1) for h in hidden]))

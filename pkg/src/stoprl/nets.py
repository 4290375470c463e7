"""Dense-network numeric core: forward, reverse-mode gradients, Adam.

Small fully connected nets (ReLU hidden layers, optional tanh output)
backing the actor and critics. Everything is float64 numpy; no autodiff
framework, gradients are hand-derived and checked against finite
differences in the test suite.

Each net stores its parameters in one contiguous vector; the per-layer
weight matrices and bias vectors are reshaped views into it, so optimizer
updates and target-net blends are single-vector operations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

OUTPUT_ACTIVATIONS = ("none", "tanh")


class DimensionError(ValueError):
    """Input or gradient shape does not match the network."""


def _layout_views(theta: np.ndarray, layer_dims: list[int]):
    """Carve weight/bias views for each layer out of the flat vector."""
    weights, biases = [], []
    offset = 0
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        weights.append(theta[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out))
        offset += fan_in * fan_out
        biases.append(theta[offset:offset + fan_out])
        offset += fan_out
    return weights, biases, offset


def param_count(layer_dims: list[int]) -> int:
    return sum(i * o + o for i, o in zip(layer_dims[:-1], layer_dims[1:]))


@dataclass
class Gradients:
    """Parameter gradients: one flat vector plus per-layer shaped views."""

    flat: np.ndarray
    weights: list[np.ndarray]
    biases: list[np.ndarray]


class Mlp:
    """Fully connected net: ReLU hidden layers, configurable output activation.

    ``weights[k]`` has shape ``(layer_dims[k], layer_dims[k+1])``; inputs may
    be a single vector ``(d_in,)`` or a batch ``(B, d_in)``.
    """

    def __init__(self, layer_dims: list[int], theta: np.ndarray, output_activation: str = "none"):
        if len(layer_dims) < 2:
            raise ValueError("need at least input and output dims")
        if any(d <= 0 for d in layer_dims):
            raise ValueError(f"layer dims must be positive, got {layer_dims}")
        if output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {output_activation!r}")
        self.layer_dims = list(layer_dims)
        self.output_activation = output_activation
        self.theta = np.ascontiguousarray(theta, dtype=np.float64)
        self.weights, self.biases, used = _layout_views(self.theta, self.layer_dims)
        if used != self.theta.size:
            raise DimensionError(f"theta size {self.theta.size} != layout size {used}")

    @classmethod
    def create(
        cls,
        layer_dims: list[int],
        rng: np.random.Generator,
        output_activation: str = "none",
    ) -> "Mlp":
        net = cls(layer_dims, np.zeros(param_count(layer_dims)), output_activation)
        for w, b in zip(net.weights, net.biases):
            # uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], same bound for bias
            bound = 1.0 / np.sqrt(w.shape[0])
            w[...] = rng.uniform(-bound, bound, size=w.shape)
            b[...] = rng.uniform(-bound, bound, size=b.shape)
        return net

    @classmethod
    def from_params(cls, weights, biases, output_activation: str = "none") -> "Mlp":
        dims = [weights[0].shape[0]] + [w.shape[1] for w in weights]
        net = cls(dims, np.zeros(param_count(dims)), output_activation)
        for dst, src in zip(net.weights, weights):
            if dst.shape != np.shape(src):
                raise DimensionError(f"weight shape {np.shape(src)} != expected {dst.shape}")
            dst[...] = src
        for dst, src in zip(net.biases, biases):
            if dst.shape != np.shape(src):
                raise DimensionError(f"bias shape {np.shape(src)} != expected {dst.shape}")
            dst[...] = src
        return net

    @property
    def in_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def out_dim(self) -> int:
        return self.layer_dims[-1]

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.in_dim:
            raise DimensionError(
                f"input dim {x.shape[-1]} != expected {self.in_dim}"
            )
        return x

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = self._check_input(x)
        h = x
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if k < last:
                np.maximum(h, 0.0, out=h)
        if self.output_activation == "tanh":
            np.tanh(h, out=h)
        return h

    def forward_cached(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Forward pass keeping post-activation values for backward().

        Returns (output, cache) where cache[0] is the input and cache[k+1]
        the layer-k post-activation output (final entry is the net output).
        """
        x = self._check_input(x)
        cache = [x]
        h = x
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if k < last:
                np.maximum(h, 0.0, out=h)
            elif self.output_activation == "tanh":
                np.tanh(h, out=h)
            cache.append(h)
        return h, cache

    def backward_cached(
        self, cache: list[np.ndarray], upstream: np.ndarray
    ) -> tuple[Gradients, np.ndarray]:
        """Backprop an upstream output gradient using a forward cache.

        Parameter gradients are summed over the batch dimension; the input
        gradient keeps it. Returns (gradients, input_grad).
        """
        upstream = np.asarray(upstream, dtype=np.float64)
        if upstream.shape != cache[-1].shape:
            raise DimensionError(
                f"upstream shape {upstream.shape} != output shape {cache[-1].shape}"
            )
        flat = np.zeros_like(self.theta)
        w_views, b_views, _ = _layout_views(flat, self.layer_dims)
        grads = Gradients(flat, w_views, b_views)
        delta = upstream
        if self.output_activation == "tanh":
            delta = delta * (1.0 - cache[-1] ** 2)
        for k in range(len(self.weights) - 1, -1, -1):
            inp = cache[k]
            if delta.ndim == 1:
                np.outer(inp, delta, out=grads.weights[k])
                grads.biases[k][...] = delta
            else:
                np.matmul(inp.T, delta, out=grads.weights[k])
                delta.sum(axis=0, out=grads.biases[k])
            delta = delta @ self.weights[k].T
            if k > 0:
                # ReLU gate: cache[k] is the post-ReLU activation
                delta *= cache[k] > 0.0
        return grads, delta

    def backward(
        self, x: np.ndarray, upstream: np.ndarray
    ) -> tuple[Gradients, np.ndarray]:
        """Recompute the forward pass, then backprop ``upstream`` through it."""
        _, cache = self.forward_cached(x)
        return self.backward_cached(cache, upstream)

    def copy(self) -> "Mlp":
        return Mlp(self.layer_dims, self.theta.copy(), self.output_activation)

    def load_from(self, other: "Mlp") -> None:
        self.theta[...] = other.theta

    def to_dict(self) -> dict:
        return {
            "layer_dims": list(self.layer_dims),
            "output_activation": self.output_activation,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, blob: dict) -> "Mlp":
        dims = [int(d) for d in blob["layer_dims"]]
        weights = [np.asarray(w, dtype=np.float64) for w in blob["weights"]]
        biases = [np.asarray(b, dtype=np.float64) for b in blob["biases"]]
        for k, w in enumerate(weights):
            if w.shape != (dims[k], dims[k + 1]):
                raise DimensionError(f"layer {k} weight shape {w.shape} != dims {dims}")
        return cls.from_params(weights, biases, blob["output_activation"])

    def save_json(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load_json(cls, path: str) -> "Mlp":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class AdamState:
    """Adam moments for one flat parameter vector, with bias correction."""

    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon_stab: float = 1e-8
    step_count: int = 0
    first_moment: np.ndarray = field(default_factory=lambda: np.zeros(0))
    second_moment: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def for_params(cls, params: np.ndarray, learning_rate: float, **kw) -> "AdamState":
        state = cls(learning_rate=learning_rate, **kw)
        state.first_moment = np.zeros_like(params)
        state.second_moment = np.zeros_like(params)
        return state

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "epsilon_stab": self.epsilon_stab,
            "step_count": self.step_count,
            "first_moment": self.first_moment.tolist(),
            "second_moment": self.second_moment.tolist(),
        }

    @classmethod
    def from_dict(cls, blob: dict) -> "AdamState":
        state = cls(
            learning_rate=blob["learning_rate"],
            beta1=blob["beta1"],
            beta2=blob["beta2"],
            epsilon_stab=blob["epsilon_stab"],
            step_count=int(blob["step_count"]),
        )
        state.first_moment = np.asarray(blob["first_moment"], dtype=np.float64)
        state.second_moment = np.asarray(blob["second_moment"], dtype=np.float64)
        return state


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState) -> None:
    """One Adam update, in place on the flat ``params`` vector.

    Rejects non-finite gradients before touching any parameter so a bad
    batch cannot corrupt the net.
    """
    if params.shape != grads.shape or params.shape != state.first_moment.shape:
        raise DimensionError("params / grads / state shape mismatch")
    if not np.all(np.isfinite(grads)):
        raise FloatingPointError("non-finite gradient, update rejected")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    m, v = state.first_moment, state.second_moment
    m *= b1
    m += (1.0 - b1) * grads
    v *= b2
    v += (1.0 - b2) * np.square(grads)
    # fold both bias corrections into the step size
    scale = state.learning_rate / (1.0 - b1**t)
    denom = np.sqrt(v / (1.0 - b2**t))
    denom += state.epsilon_stab
    params -= scale * m / denom

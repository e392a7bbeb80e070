"""Minimal neural layers with explicit forward/backward passes.

Each layer caches what its backward pass needs, accumulates parameter
gradients in ``grads``, and returns the gradient with respect to its input.
No autograd: the wiring is spelled out so every step can be checked against
finite differences.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse


class Layer:
    """Base: parameterized layers expose ``params``/``grads`` dicts."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def zero_grad(self):
        for k in self.params:
            self.grads[k] = np.zeros_like(self.params[k])

    def param_items(self):
        return list(self.params.items())


class Affine(Layer):
    """Fully connected map: y = x @ W + b."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 dtype=np.float64):
        super().__init__()
        scale = np.sqrt(2.0 / in_dim)
        self.params["W"] = (rng.normal(0, scale, (in_dim, out_dim))).astype(dtype)
        self.params["b"] = np.zeros(out_dim, dtype=dtype)
        self.zero_grad()
        self._x = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        self.grads["W"] += self._x.T @ grad_out
        self.grads["b"] += grad_out.sum(axis=0)
        return grad_out @ self.params["W"].T


class LeakyRelu:
    def __init__(self, slope: float = 0.01):
        self.slope = slope
        self._mask = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return np.where(self._mask, x, self.slope * x)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return np.where(self._mask, grad_out, self.slope * grad_out)


class Sigmoid:
    def __init__(self):
        self._y = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._y = 1.0 / (1.0 + np.exp(-x))
        return self._y

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return grad_out * self._y * (1.0 - self._y)


class SpiralConv(Layer):
    """Shared affine map over fixed per-vertex spiral neighbor sequences.

    Input (B, V, C): features along each vertex's spiral (length L) are
    concatenated and mapped by one (L*C, out) weight matrix, optionally
    followed by a nonlinearity. Each spiral position contributes the
    per-vertex channels followed by the broadcast channels.

    ``constant_channels`` declares trailing channels that are identical for
    every vertex (broadcast conditioning). Gathering a vertex-constant
    channel just replicates it, so those weight blocks act through their
    sum over spiral positions; the layer computes exactly the same function
    as the naive gather but without materializing the replicas.
    """

    def __init__(
        self,
        spiral_indices: np.ndarray,
        in_channels: int,
        out_channels: int,
        rng: np.random.Generator,
        activation: str = "leaky_relu",
        constant_channels: int = 0,
        constant_init_std: float | np.ndarray | None = None,
        dtype=np.float64,
    ):
        super().__init__()
        self.spiral = np.asarray(spiral_indices, dtype=np.int64)
        if self.spiral.max() >= len(self.spiral):
            raise ValueError("spiral indices exceed vertex count")
        self.v_count, self.length = self.spiral.shape
        self.in_channels = in_channels
        self.constant_channels = constant_channels
        self.vertex_channels = in_channels - constant_channels
        self.out_channels = out_channels
        fan_in = self.length * in_channels
        if constant_channels:
            # Balance the input groups: with plain fan-in scaling the wide
            # broadcast block drowns the few geometry channels, and one-hot
            # conditioning channels need per-channel (not group) scaling to
            # carry any signal at all.
            if constant_init_std is None:
                constant_init_std = 0.3 * np.sqrt(
                    2.0 / (self.length * constant_channels)
                )
            const_std = np.broadcast_to(
                np.asarray(constant_init_std, dtype=np.float64),
                (constant_channels,),
            )
            w = np.empty((self.length, in_channels, out_channels))
            w[:, : self.vertex_channels, :] = rng.normal(
                0, np.sqrt(2.0 / (self.length * self.vertex_channels)),
                (self.length, self.vertex_channels, out_channels),
            )
            w[:, self.vertex_channels:, :] = rng.normal(
                0, 1.0, (self.length, constant_channels, out_channels)
            ) * const_std[None, :, None]
            self.params["W"] = w.reshape(fan_in, out_channels).astype(dtype)
        else:
            self.params["W"] = rng.normal(
                0, np.sqrt(2.0 / fan_in), (fan_in, out_channels)
            ).astype(dtype)
        self.params["b"] = np.zeros(out_channels, dtype=dtype)
        self.zero_grad()
        if activation == "leaky_relu":
            self.activation = LeakyRelu()
        elif activation == "sigmoid":
            self.activation = Sigmoid()
        elif activation is None or activation == "none":
            self.activation = None
        else:
            raise ValueError(f"unknown activation '{activation}'")
        # Scatter matrix mapping gathered slots back onto vertices.
        flat = self.spiral.reshape(-1)
        self._scatter = sparse.csr_matrix(
            (
                np.ones(len(flat), dtype=dtype),
                (flat, np.arange(len(flat))),
            ),
            shape=(self.v_count, len(flat)),
        )
        self._gathered = None
        self._x_const = None

    def _weight_views(self):
        w = self.params["W"].reshape(self.length, self.in_channels, -1)
        w_vertex = w[:, : self.vertex_channels, :].reshape(
            self.length * self.vertex_channels, self.out_channels
        )
        w_const = w[:, self.vertex_channels:, :]
        return w_vertex, w_const

    def forward(
        self, x: np.ndarray, x_const: np.ndarray | None = None
    ) -> np.ndarray:
        batch = x.shape[0]
        gathered = x[:, self.spiral.reshape(-1), :].reshape(
            batch, self.v_count, self.length * self.vertex_channels
        )
        self._gathered = gathered
        self._x_const = x_const
        w_vertex, w_const = self._weight_views()
        out = (
            gathered.reshape(-1, gathered.shape[-1]) @ w_vertex
        ).reshape(batch, self.v_count, self.out_channels) + self.params["b"]
        if x_const is not None:
            out += (x_const @ w_const.sum(axis=0))[:, None, :]
        return self.activation.forward(out) if self.activation else out

    def backward(self, grad_out: np.ndarray):
        if self.activation:
            grad_out = self.activation.backward(grad_out)
        batch = grad_out.shape[0]
        flat_g = grad_out.reshape(-1, self.out_channels)
        flat_in = self._gathered.reshape(-1, self._gathered.shape[-1])
        w_vertex, w_const = self._weight_views()

        grad_w = self.grads["W"].reshape(self.length, self.in_channels, -1)
        grad_w[:, : self.vertex_channels, :] += (flat_in.T @ flat_g).reshape(
            self.length, self.vertex_channels, self.out_channels
        )
        self.grads["b"] += flat_g.sum(axis=0)

        d_gathered = (flat_g @ w_vertex.T).reshape(
            batch, self.v_count * self.length, self.vertex_channels
        )
        stacked = d_gathered.transpose(1, 0, 2).reshape(
            self.v_count * self.length, batch * self.vertex_channels
        )
        dx = (self._scatter @ stacked).reshape(
            self.v_count, batch, self.vertex_channels
        ).transpose(1, 0, 2)
        dx = np.ascontiguousarray(dx)

        if self._x_const is None:
            return dx
        g_sum = grad_out.sum(axis=1)  # (B, out)
        # Every spiral position sees the same constant input, so each block
        # receives the same gradient and the input gradient sums the blocks.
        block = self._x_const.T @ g_sum
        grad_w[:, self.vertex_channels:, :] += block[None, :, :]
        dx_const = g_sum @ w_const.sum(axis=0).T
        return dx, dx_const


def collect_params(layers) -> list[tuple[str, Layer, str]]:
    """(qualified name, layer, key) triples for every parameter tensor."""
    out = []
    for name, layer in layers:
        if isinstance(layer, Layer):
            for key in layer.params:
                out.append((f"{name}.{key}", layer, key))
    return out

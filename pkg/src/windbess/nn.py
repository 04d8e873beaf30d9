"""Minimal dense-network toolkit: float64 MLPs with hand-written backprop,
Adam, a finite-difference gradient checker, and bit-exact checkpoints.

No autograd framework is used anywhere; every gradient in the package flows
through Mlp.backward. Keeping everything float64 makes training runs and
checkpoints reproducible to the byte for a fixed seed.
"""

from __future__ import annotations

import json
from typing import Callable, Sequence

import numpy as np

CHECKPOINT_VERSION = 1
_ACTIVATIONS = ("identity", "tanh")


class Mlp:
    """Fully connected rectifier network.

    sizes = (d_in, hidden..., d_out). Hidden layers use ReLU; the output head
    is identity (critics) or tanh (actors). Parameters initialize uniformly in
    +-1/sqrt(fan_in), matching common dense-layer defaults.
    """

    def __init__(
        self,
        sizes: Sequence[int],
        output_activation: str = "identity",
        rng: np.random.Generator | None = None,
    ):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if any(s < 1 for s in sizes):
            raise ValueError("layer sizes must be positive")
        if output_activation not in _ACTIVATIONS:
            raise ValueError(f"output_activation must be one of {_ACTIVATIONS}")
        if rng is None:
            rng = np.random.default_rng(0)
        self.sizes = tuple(int(s) for s in sizes)
        self.output_activation = output_activation
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(rng.uniform(-bound, bound, size=fan_out))

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def forward(self, x: np.ndarray) -> np.ndarray:
        y, _ = self.forward_cached(x)
        return y

    def forward_cached(self, x: np.ndarray) -> tuple[np.ndarray, dict]:
        """Forward pass keeping activations for a later backward call."""
        a = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if a.shape[1] != self.sizes[0]:
            raise ValueError(f"input width {a.shape[1]}, expected {self.sizes[0]}")
        activations = [a]
        for i in range(self.n_layers - 1):
            z = a @ self.weights[i] + self.biases[i]
            a = np.maximum(z, 0.0)
            activations.append(a)
        z_out = a @ self.weights[-1] + self.biases[-1]
        y = np.tanh(z_out) if self.output_activation == "tanh" else z_out
        cache = {"activations": activations, "y": y}
        return y, cache

    def backward(
        self, cache: dict, grad_y: np.ndarray
    ) -> tuple[list[np.ndarray], np.ndarray]:
        """Backpropagate an upstream gradient through the cached forward pass.

        Returns (parameter gradients in block order, gradient w.r.t. input).
        """
        activations = cache["activations"]
        y = cache["y"]
        grad_y = np.asarray(grad_y, dtype=np.float64)
        if self.output_activation == "tanh":
            dz = grad_y * (1.0 - y * y)
        else:
            dz = grad_y
        grads_w: list[np.ndarray] = [None] * self.n_layers  # type: ignore[list-item]
        grads_b: list[np.ndarray] = [None] * self.n_layers  # type: ignore[list-item]
        for i in range(self.n_layers - 1, -1, -1):
            a_prev = activations[i]
            grads_w[i] = a_prev.T @ dz
            grads_b[i] = dz.sum(axis=0)
            dx = dz @ self.weights[i].T
            if i > 0:
                dz = dx * (activations[i] > 0.0)
        grads: list[np.ndarray] = []
        for gw, gb in zip(grads_w, grads_b):
            grads.extend([gw, gb])
        return grads, dx

    def param_blocks(self) -> list[tuple[str, np.ndarray]]:
        """Named parameter arrays in the fixed block order W0,b0,W1,b1,..."""
        blocks = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            blocks.append((f"layer{i}.W", w))
            blocks.append((f"layer{i}.b", b))
        return blocks

    def n_params(self) -> int:
        return sum(arr.size for _, arr in self.param_blocks())

    def get_flat(self) -> np.ndarray:
        return np.concatenate([arr.ravel() for _, arr in self.param_blocks()])

    def set_flat(self, theta: np.ndarray) -> None:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.size != self.n_params():
            raise ValueError("flat parameter vector has wrong length")
        offset = 0
        for _, arr in self.param_blocks():
            arr[...] = theta[offset : offset + arr.size].reshape(arr.shape)
            offset += arr.size

    def copy(self) -> "Mlp":
        clone = Mlp.__new__(Mlp)
        clone.sizes = self.sizes
        clone.output_activation = self.output_activation
        clone.weights = [w.copy() for w in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        return clone


class Adam:
    """Adam over a network's parameter blocks, beta = (0.9, 0.999), eps 1e-8."""

    def __init__(
        self,
        net: Mlp,
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.net = net
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(arr) for _, arr in net.param_blocks()]
        self.v = [np.zeros_like(arr) for _, arr in net.param_blocks()]

    def step(self, grads: Sequence[np.ndarray]) -> None:
        blocks = self.net.param_blocks()
        if len(grads) != len(blocks):
            raise ValueError("gradient list does not match parameter blocks")
        for (name, _), g in zip(blocks, grads):
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient in block {name}")
        self.t += 1
        bias1 = 1.0 - self.beta1**self.t
        bias2 = 1.0 - self.beta2**self.t
        for i, ((_, param), g) in enumerate(zip(blocks, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[i] / bias1
            v_hat = self.v[i] / bias2
            param -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def grad_check(
    net: Mlp,
    loss_fn: Callable[[Mlp], float],
    analytic_grad: np.ndarray,
    h: float = 1e-5,
    zero_tol: float = 1e-7,
) -> float:
    """Compare an analytic gradient against central finite differences.

    loss_fn evaluates the scalar loss for the net's current parameters;
    analytic_grad is flat in block order. Components where both gradients are
    below zero_tol count as exact. Returns the maximum relative error.
    """
    analytic = np.asarray(analytic_grad, dtype=np.float64)
    theta = net.get_flat()
    if analytic.shape != theta.shape:
        raise ValueError("analytic gradient has wrong length")
    numeric = np.empty_like(theta)
    for i in range(theta.size):
        orig = theta[i]
        theta[i] = orig + h
        net.set_flat(theta)
        up = loss_fn(net)
        theta[i] = orig - h
        net.set_flat(theta)
        down = loss_fn(net)
        theta[i] = orig
        numeric[i] = (up - down) / (2.0 * h)
    net.set_flat(theta)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    err = np.abs(analytic - numeric)
    rel = np.where(scale < zero_tol, 0.0, err / np.maximum(scale, zero_tol))
    return float(rel.max()) if rel.size else 0.0


def save_nets(
    path: str,
    nets: dict[str, Mlp],
    meta: dict | None = None,
    arrays: dict[str, np.ndarray] | None = None,
) -> None:
    """Checkpoint named networks (plus optional metadata and raw arrays).

    Everything is stored as float64/int64 npz entries, so a load followed by a
    save reproduces parameters bit for bit.
    """
    payload: dict[str, np.ndarray] = {
        "__version__": np.array(CHECKPOINT_VERSION, dtype=np.int64),
        "__meta__": np.array(json.dumps(meta or {}, sort_keys=True)),
        "__names__": np.array(json.dumps(sorted(nets))),
    }
    for name, net in nets.items():
        payload[f"{name}::sizes"] = np.array(net.sizes, dtype=np.int64)
        payload[f"{name}::act"] = np.array(net.output_activation)
        for i, (w, b) in enumerate(zip(net.weights, net.biases)):
            payload[f"{name}::W{i}"] = w
            payload[f"{name}::b{i}"] = b
    for key, arr in (arrays or {}).items():
        payload[f"arr::{key}"] = np.asarray(arr)
    np.savez(path, **payload)


def load_nets(path: str) -> tuple[dict[str, Mlp], dict, dict[str, np.ndarray]]:
    """Inverse of save_nets; returns (nets, meta, arrays)."""
    with np.load(path, allow_pickle=False) as data:
        version = int(data["__version__"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        meta = json.loads(str(data["__meta__"][()]))
        names = json.loads(str(data["__names__"][()]))
        nets: dict[str, Mlp] = {}
        for name in names:
            sizes = tuple(int(s) for s in data[f"{name}::sizes"])
            act = str(data[f"{name}::act"][()])
            net = Mlp.__new__(Mlp)
            net.sizes = sizes
            net.output_activation = act
            net.weights = [data[f"{name}::W{i}"].copy() for i in range(len(sizes) - 1)]
            net.biases = [data[f"{name}::b{i}"].copy() for i in range(len(sizes) - 1)]
            nets[name] = net
        arrays = {
            key[len("arr::") :]: data[key].copy() for key in data.files if key.startswith("arr::")
        }
    return nets, meta, arrays

"""Dense ReLU networks with hand-written backpropagation, plus Adam and plain SGD steps."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class NumericalError(ArithmeticError):
    """A loss, gradient or parameter became non-finite."""


def relu(x):
    return np.maximum(x, 0.0)


class DenseNet:
    """Fully connected net: ReLU on hidden layers, linear output.

    Weights are stored ``(fan_in, fan_out)`` so a batch ``X`` of shape
    ``(n, fan_in)`` maps to ``X @ W + b``.
    """

    def __init__(self, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray]):
        if len(weights) != len(biases) or not weights:
            raise ValueError("need one bias per weight matrix")
        for i, (W, b) in enumerate(zip(weights, biases)):
            if W.ndim != 2 or b.shape != (W.shape[1],):
                raise ValueError(f"layer {i}: bad shapes {W.shape}, {b.shape}")
            if i and weights[i - 1].shape[1] != W.shape[0]:
                raise ValueError(f"layer {i}: input {W.shape[0]} != previous output "
                                 f"{weights[i - 1].shape[1]}")
        self.weights = [np.array(W, dtype=float) for W in weights]
        self.biases = [np.array(b, dtype=float) for b in biases]

    @classmethod
    def init(cls, sizes: Sequence[int], rng: np.random.Generator) -> "DenseNet":
        """Glorot-uniform weights, zero biases."""
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    @classmethod
    def zeros(cls, sizes: Sequence[int]) -> "DenseNet":
        return cls([np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])],
                   [np.zeros(b) for b in sizes[1:]])

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights]

    @property
    def n_in(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_out(self) -> int:
        return self.weights[-1].shape[1]

    def params(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def set_params(self, params: Sequence[np.ndarray]) -> None:
        self.weights = [np.array(p, dtype=float) for p in params[0::2]]
        self.biases = [np.array(p, dtype=float) for p in params[1::2]]

    def copy(self) -> "DenseNet":
        return DenseNet(self.weights, self.biases)

    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def _check(self, x: np.ndarray) -> None:
        if x.shape[-1] != self.n_in:
            raise ValueError(f"input length {x.shape[-1]} != {self.n_in}")

    def forward(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        self._check(x)
        a = x
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            a = a @ W + b
            if i < last:
                a = relu(a)
        return a

    def forward_cached(self, X: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Batch forward keeping every layer input for :meth:`backward`."""
        self._check(X)
        cache = [X]
        a = X
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            a = a @ W + b
            if i < last:
                a = relu(a)
                cache.append(a)
        return a, cache

    def backward(self, cache: list[np.ndarray], dout: np.ndarray):
        """Backpropagate ``dL/d(output)``; returns ``(dL/dX, param grads)``."""
        grads: list[np.ndarray] = [None] * (2 * len(self.weights))  # type: ignore[list-item]
        d = dout
        for i in range(len(self.weights) - 1, -1, -1):
            a_in = cache[i]
            grads[2 * i] = a_in.T @ d
            grads[2 * i + 1] = d.sum(axis=0)
            d = d @ self.weights[i].T
            if i > 0:
                d = d * (cache[i] > 0)
        return d, grads

    def grad(self, x, target) -> tuple[float, list[np.ndarray]]:
        """Mean squared error (over outputs and batch rows) and its parameter gradients."""
        X = np.atleast_2d(np.asarray(x, dtype=float))
        Y = np.atleast_2d(np.asarray(target, dtype=float))
        out, cache = self.forward_cached(X)
        if out.shape != Y.shape:
            raise ValueError(f"target shape {Y.shape} != output shape {out.shape}")
        diff = out - Y
        loss = float(np.mean(diff**2))
        if not np.isfinite(loss):
            raise NumericalError("non-finite loss in DenseNet.grad")
        _, grads = self.backward(cache, 2.0 * diff / diff.size)
        return loss, grads

    def to_dict(self) -> dict:
        return {
            "sizes": self.sizes,
            "weights": [W.tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DenseNet":
        net = cls([np.asarray(W, dtype=float).reshape(a, b)
                   for W, a, b in zip(d["weights"], d["sizes"][:-1], d["sizes"][1:])],
                  [np.asarray(b, dtype=float) for b in d["biases"]])
        if net.sizes != list(d["sizes"]):
            raise ValueError("layer sizes do not match stored parameters")
        return net


@dataclass
class Adam:
    """Bias-corrected adaptive-moment optimizer state."""

    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> list[np.ndarray]:
        """Update ``params`` in place and return them."""
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        if len(grads) != len(params) or any(g.shape != p.shape for g, p in zip(grads, params)):
            raise ValueError("gradient shapes do not match parameters")
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return list(params)


    def to_dict(self) -> dict:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps, "t": self.t,
                "m": [a.tolist() for a in self.m], "v": [a.tolist() for a in self.v]}

    @classmethod
    def from_dict(cls, d: dict) -> "Adam":
        return cls(d["lr"], d["beta1"], d["beta2"], d["eps"], d["t"],
                   [np.asarray(a, dtype=float) for a in d["m"]],
                   [np.asarray(a, dtype=float) for a in d["v"]])


def adam_step(state: Adam, params, grads):
    return state.step(params, grads)


def sgd_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], lr: float) -> list[np.ndarray]:
    return [p - lr * g for p, g in zip(params, grads)]

"""Small dense networks in numpy with explicit backpropagation.

Weights follow the ``W @ x + b`` convention: a layer mapping ``n_in`` to
``n_out`` units stores ``W`` with shape ``(n_out, n_in)``. Batches are row
matrices, so a batched forward pass computes ``X @ W.T + b``.
"""

from __future__ import annotations

from typing import List, Optional, Sequence

import numpy as np

from .exceptions import DimMismatch

ACTIVATIONS = ("relu", "identity")


def _act(name, x):
    if name == "relu":
        return np.maximum(x, 0.0)
    return x


def _act_grad(name, pre):
    if name == "relu":
        return (pre > 0.0).astype(pre.dtype)
    return np.ones_like(pre)


class MLP:
    """Fully connected network with per-layer activation tags."""

    def __init__(
        self,
        weights: Sequence[np.ndarray],
        biases: Sequence[np.ndarray],
        activations: Sequence[str],
    ):
        if not (len(weights) == len(biases) == len(activations)):
            raise DimMismatch("weights, biases and activations must have equal length")
        self.weights = [np.array(w, dtype=np.float64, ndmin=2) for w in weights]
        self.biases = [np.array(b, dtype=np.float64).reshape(-1) for b in biases]
        self.activations = list(activations)
        for i, (w, b, a) in enumerate(zip(self.weights, self.biases, self.activations)):
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
            if b.shape[0] != w.shape[0]:
                raise DimMismatch(f"layer {i}: bias length {b.shape[0]} != {w.shape[0]} rows")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise DimMismatch(
                    f"layer {i}: expects {w.shape[1]} inputs but layer {i - 1} "
                    f"produces {self.weights[i - 1].shape[0]}"
                )

    @classmethod
    def initialize(cls, dims: Sequence[int], activations: Sequence[str], rng, out_scale=1.0,
                   limit: Optional[float] = None):
        """Uniform weights on ``[-limit, limit]`` (Glorot range when ``limit`` is None),
        zero biases. ``out_scale`` shrinks the last layer."""
        weights, biases = [], []
        fixed = limit
        for i, (n_in, n_out) in enumerate(zip(dims[:-1], dims[1:])):
            limit = fixed if fixed is not None else np.sqrt(6.0 / (n_in + n_out))
            w = rng.uniform(-limit, limit, size=(n_out, n_in))
            if i == len(dims) - 2:
                w = w * out_scale
            weights.append(w)
            biases.append(np.zeros(n_out))
        return cls(weights, biases, activations)

    @property
    def dims(self) -> List[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_in(self) -> int:
        return self.weights[0].shape[1]

    @property
    def n_out(self) -> int:
        return self.weights[-1].shape[0]

    def params(self) -> List[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "MLP":
        return MLP([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.activations)

    def forward(self, X, return_cache=False):
        X = np.asarray(X, dtype=np.float64)
        squeeze = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.n_in:
            raise DimMismatch(f"input has {X.shape[1]} features, network expects {self.n_in}")
        inputs, pres = [], []
        h = X
        for w, b, a in zip(self.weights, self.biases, self.activations):
            inputs.append(h)
            pre = h @ w.T + b
            pres.append(pre)
            h = _act(a, pre)
        out = h[0] if squeeze else h
        if return_cache:
            return out, (inputs, pres)
        return out

    __call__ = forward

    def layer_outputs(self, x) -> List[np.ndarray]:
        """Post-activation output of every layer for a single input vector."""
        outs = []
        h = np.asarray(x, dtype=np.float64)
        for w, b, a in zip(self.weights, self.biases, self.activations):
            h = _act(a, w @ h + b)
            outs.append(h)
        return outs

    def backward(self, cache, grad_out) -> List[np.ndarray]:
        """Gradients in ``params()`` order given dLoss/dOutput for a batch."""
        inputs, pres = cache
        g = np.atleast_2d(grad_out)
        grads = [None] * (2 * len(self.weights))
        for i in reversed(range(len(self.weights))):
            g = g * _act_grad(self.activations[i], pres[i])
            grads[2 * i] = g.T @ inputs[i]
            grads[2 * i + 1] = g.sum(axis=0)
            if i:
                g = g @ self.weights[i]
        return grads

    def to_dict(self) -> dict:
        return {
            "dims": self.dims,
            "activations": list(self.activations),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MLP":
        net = cls(d["weights"], d["biases"], d["activations"])
        if "dims" in d and list(d["dims"]) != net.dims:
            raise DimMismatch(f"declared dims {d['dims']} do not match weights {net.dims}")
        return net


class SGD:
    def __init__(self, lr: float = 1e-2):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


class Adam:
    def __init__(self, lr: float = 3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self._m: Optional[list] = None
        self._v: Optional[list] = None

    def step(self, params, grads):
        if self._m is None:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self._m, self._v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

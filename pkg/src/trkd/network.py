"""Feed-forward embedding network with hand-written backprop, plus SGD.

Layers compute ``h @ W + b``; hidden layers use ReLU, the last layer is
linear. ``W`` has shape ``(fan_in, fan_out)``.
"""
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidParameterError, ShapeError, StateError

__all__ = ["MlpSpec", "Mlp", "forward", "backward", "sgd_step", "LrSchedule", "lr_at"]


@dataclass(frozen=True)
class MlpSpec:
    widths: tuple

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        if len(widths) < 3:
            raise InvalidParameterError("need input, at least one hidden layer and an output width")
        if min(widths) < 1:
            raise InvalidParameterError(f"all widths must be >= 1, got {widths}")
        object.__setattr__(self, "widths", widths)

    @property
    def input_dim(self):
        return self.widths[0]

    @property
    def output_dim(self):
        return self.widths[-1]


class Mlp:
    def __init__(self, weights, biases):
        if len(weights) != len(biases) or not weights:
            raise ShapeError("need one bias per weight matrix")
        self.weights = [np.array(W, dtype=np.float64) for W in weights]
        self.biases = [np.array(b, dtype=np.float64) for b in biases]
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.shape != (W.shape[1],):
                raise ShapeError(f"layer {i}: weight {W.shape} and bias {b.shape} do not fit")
            if i and W.shape[0] != self.weights[i - 1].shape[1]:
                raise ShapeError(f"layer {i} input width does not match previous output")
        self._cache = None

    @classmethod
    def init(cls, spec, rng):
        """He-uniform weights (bound ``sqrt(6 / fan_in)``), zero biases."""
        ws, bs = [], []
        for fan_in, fan_out in zip(spec.widths[:-1], spec.widths[1:]):
            bound = np.sqrt(6.0 / fan_in)
            ws.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            bs.append(np.zeros(fan_out))
        return cls(ws, bs)

    @property
    def widths(self):
        return (self.weights[0].shape[0],) + tuple(W.shape[1] for W in self.weights)

    @property
    def params(self):
        """Parameter arrays in ``[W0, b0, W1, b1, ...]`` order (live views)."""
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def copy(self):
        return Mlp(self.weights, self.biases)

    def forward(self, X, cache=True):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.weights[0].shape[0]:
            raise ShapeError(f"expected input of shape (N, {self.weights[0].shape[0]}), got {X.shape}")
        inputs, pre = [], []
        h = X
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            z = h @ W + b
            pre.append(z)
            h = z if i == last else np.maximum(z, 0.0)
        if cache:
            self._cache = (inputs, pre)
        return h

    def backward(self, d_out):
        """Parameter gradients for upstream ``d_out``; consumes the forward cache.

        Returns gradients in :attr:`params` order.
        """
        if self._cache is None:
            raise StateError("backward called without a matching forward pass")
        inputs, pre = self._cache
        self._cache = None
        d = np.asarray(d_out, dtype=np.float64)
        if d.shape != pre[-1].shape:
            raise ShapeError(f"upstream gradient {d.shape} does not match output {pre[-1].shape}")
        grads = []
        for i in range(len(self.weights) - 1, -1, -1):
            if i != len(self.weights) - 1:
                d = d * (pre[i] > 0)
            grads.append(d.sum(axis=0))
            grads.append(inputs[i].T @ d)
            if i:
                d = d @ self.weights[i].T
        return grads[::-1]


def forward(net, X):
    return net.forward(X)


def backward(net, d_out):
    return net.backward(d_out)


def sgd_step(params, grads, velocity, lr, momentum):
    """Classic momentum, in place: ``v = momentum * v + g; w -= lr * v``."""
    if not (len(params) == len(grads) == len(velocity)):
        raise ShapeError("params, grads and velocity must have equal length")
    for w, g, v in zip(params, grads, velocity):
        if w.shape != g.shape or w.shape != v.shape:
            raise ShapeError(f"shape mismatch: param {w.shape}, grad {g.shape}, velocity {v.shape}")
        v *= momentum
        v += g
        w -= lr * v
    return params, velocity


@dataclass(frozen=True)
class LrSchedule:
    """Linear warm-up from 0 to ``peak`` over ``warmup_steps``, then
    exponential decay reaching ``final`` at step ``total_steps - 1``."""

    peak: float
    final: float
    warmup_steps: int
    total_steps: int

    def __post_init__(self):
        if not self.peak > self.final > 0:
            raise InvalidParameterError(f"need lr_peak > lr_final > 0, got {self.peak}, {self.final}")
        if not 0 <= self.warmup_steps < self.total_steps - 1:
            raise InvalidParameterError("warm-up must end before the last step")

    def __call__(self, k):
        return lr_at(self, k)


def lr_at(sched, k):
    if sched.warmup_steps > 0 and k <= sched.warmup_steps:
        return sched.peak * k / sched.warmup_steps
    last = sched.total_steps - 1
    frac = min(max((k - sched.warmup_steps) / (last - sched.warmup_steps), 0.0), 1.0)
    return float(sched.peak * (sched.final / sched.peak) ** frac)

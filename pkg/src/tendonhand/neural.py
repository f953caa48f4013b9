"""Minimal reverse-mode kernel for the learned controllers.

Float64 throughout; tensors are C-order numpy arrays. Provides exactly
what the controllers need: an LSTM cell unrolled over a window, dense
layers with tanh, mean-squared-error loss, and an Adam-style optimizer
with bias-corrected moments and decoupled weight decay. Parameters live
in flat name->array dicts so one optimizer instance can drive any model
composition.

Gate layout is (input, forget, cell, output) along the last axis; the
forget gate bias initializes to 1 so fresh cells start by remembering.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import TrainingDivergenceError

Parameters = dict[str, np.ndarray]


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


# --- dense -------------------------------------------------------------------


def dense_init(rng: np.random.Generator, in_dim: int, out_dim: int, prefix: str) -> Parameters:
    return {
        f"{prefix}.w": uniform_init(rng, (in_dim, out_dim), in_dim),
        f"{prefix}.b": uniform_init(rng, (out_dim,), in_dim),
    }


def dense_forward(params: Parameters, prefix: str, x: np.ndarray):
    y = x @ params[f"{prefix}.w"] + params[f"{prefix}.b"]
    return y, (prefix, x)


def dense_backward(params: Parameters, cache, dy: np.ndarray):
    prefix, x = cache
    grads = {f"{prefix}.w": x.T @ dy, f"{prefix}.b": dy.sum(axis=0)}
    dx = dy @ params[f"{prefix}.w"].T
    return grads, dx


def tanh_forward(x: np.ndarray):
    y = np.tanh(x)
    return y, y


def tanh_backward(cache, dy: np.ndarray) -> np.ndarray:
    return dy * (1.0 - cache * cache)


# --- lstm --------------------------------------------------------------------


def lstm_init(rng: np.random.Generator, in_dim: int, hidden: int, prefix: str) -> Parameters:
    params = {
        f"{prefix}.wx": uniform_init(rng, (in_dim, 4 * hidden), in_dim),
        f"{prefix}.wh": uniform_init(rng, (hidden, 4 * hidden), hidden),
        f"{prefix}.b": uniform_init(rng, (4 * hidden,), hidden),
    }
    params[f"{prefix}.b"][hidden : 2 * hidden] = 1.0
    return params


def lstm_forward(params: Parameters, prefix: str, x: np.ndarray):
    """Run the cell over x of shape (batch, time, in); returns final hidden."""
    wx, wh, b = params[f"{prefix}.wx"], params[f"{prefix}.wh"], params[f"{prefix}.b"]
    batch, steps, _ = x.shape
    hidden = wh.shape[0]
    h = np.zeros((batch, hidden))
    c = np.zeros((batch, hidden))
    trace = []
    for t in range(steps):
        z = x[:, t] @ wx + h @ wh + b
        i = sigmoid(z[:, :hidden])
        f = sigmoid(z[:, hidden : 2 * hidden])
        g = np.tanh(z[:, 2 * hidden : 3 * hidden])
        o = sigmoid(z[:, 3 * hidden :])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        trace.append((h, c, i, f, g, o, tc))
        h = o * tc
        c = c_new
    return h, (prefix, x, trace)


def lstm_backward(params: Parameters, cache, dh: np.ndarray):
    prefix, x, trace = cache
    wx, wh = params[f"{prefix}.wx"], params[f"{prefix}.wh"]
    d_wx = np.zeros_like(wx)
    d_wh = np.zeros_like(wh)
    d_b = np.zeros_like(params[f"{prefix}.b"])
    dx = np.zeros_like(x)
    dh = dh.copy()
    dc = np.zeros_like(dh)
    for t in range(len(trace) - 1, -1, -1):
        h_prev, c_prev, i, f, g, o, tc = trace[t]
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dz = np.concatenate(
            [
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g * g),
                do * o * (1.0 - o),
            ],
            axis=1,
        )
        d_wx += x[:, t].T @ dz
        d_wh += h_prev.T @ dz
        d_b += dz.sum(axis=0)
        dx[:, t] = dz @ wx.T
        dh = dz @ wh.T
        dc = dc * f
    grads = {f"{prefix}.wx": d_wx, f"{prefix}.wh": d_wh, f"{prefix}.b": d_b}
    return grads, dx


# --- loss --------------------------------------------------------------------


def mse_loss(pred: np.ndarray, target: np.ndarray):
    """Mean over every element; returns (loss, dloss/dpred)."""
    diff = pred - target
    loss = float(np.mean(diff * diff))
    return loss, (2.0 / diff.size) * diff


# --- optimizer ---------------------------------------------------------------


@dataclass
class AdamW:
    """Adam moments with bias correction; weight decay multiplies parameters
    directly each step instead of entering the gradient."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4
    step: int = 0
    m: Parameters = field(default_factory=dict)
    v: Parameters = field(default_factory=dict)

    def update(self, params: Parameters, grads: Parameters) -> None:
        self.step += 1
        bc1 = 1.0 - self.beta1**self.step
        bc2 = 1.0 - self.beta2**self.step
        for name, p in params.items():
            g = grads[name]
            if not np.all(np.isfinite(g)):
                raise TrainingDivergenceError(f"non-finite gradient for {name}")
            m = self.m.setdefault(name, np.zeros_like(p))
            v = self.v.setdefault(name, np.zeros_like(p))
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            if self.weight_decay:
                p *= 1.0 - self.lr * self.weight_decay
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

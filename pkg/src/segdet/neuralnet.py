"""Minimal deterministic tensor/layer engine.

Batch-first numpy layers (NCHW): stride-1 convolution with valid/same
padding, ReLU, 2x2 max pooling, flatten, fully connected, softmax; plus
cross-entropy, SGD with momentum and weight decay. Forward and backward are
pure given the parameters; there is no autodiff graph, every backward rule
is written out so it stays hand-verifiable against finite differences.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatchError


def he_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Conv2D:
    """Stride-1 convolution; padding 'same' (zero) or 'valid'."""

    kind = "conv"

    def __init__(self, in_c: int, out_c: int, k: int, padding: str = "same", *, rng=None, dtype=np.float64):
        if padding not in ("same", "valid"):
            raise ValueError(f"padding must be 'same' or 'valid', got {padding!r}")
        self.in_c, self.out_c, self.k, self.padding = in_c, out_c, k, padding
        fan_in = in_c * k * k
        if rng is None:
            self.weight = np.zeros((out_c, in_c, k, k), dtype=dtype)
            self.bias = np.zeros(out_c, dtype=dtype)
        else:
            self.weight = he_uniform(rng, (out_c, in_c, k, k), fan_in, dtype)
            # small nonzero biases keep the zero-input (dropped-segment) path
            # off the ReLU kink, where gradients are not well defined
            self.bias = rng.uniform(-0.05, 0.05, size=out_c).astype(dtype)

    def params(self):
        return [self.weight, self.bias]

    def _pad(self, x):
        if self.padding == "valid" or self.k == 1:
            return x, (0, 0)
        top = (self.k - 1) // 2
        bot = self.k - 1 - top
        return np.pad(x, ((0, 0), (0, 0), (top, bot), (top, bot))), (top, bot)

    def _cols(self, xp):
        n, c, hp, wp = xp.shape
        oh, ow = hp - self.k + 1, wp - self.k + 1
        win = np.lib.stride_tricks.sliding_window_view(xp, (self.k, self.k), axis=(2, 3))
        # (n, c, oh, ow, k, k) -> (n*oh*ow, c*k*k)
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * self.k * self.k)
        return cols, oh, ow

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.in_c:
            raise ShapeMismatchError(
                f"conv expects (N,{self.in_c},H,W), got {x.shape}"
            )
        xp, _ = self._pad(x)
        cols, oh, ow = self._cols(xp)
        wm = self.weight.reshape(self.out_c, -1).T
        out = cols @ wm + self.bias
        return out.reshape(x.shape[0], oh, ow, self.out_c).transpose(0, 3, 1, 2)

    def backward(self, x, grad_out):
        n = x.shape[0]
        xp, (top, _) = self._pad(x)
        cols, oh, ow = self._cols(xp)
        g = grad_out.transpose(0, 2, 3, 1).reshape(n * oh * ow, self.out_c)
        gw = (cols.T @ g).T.reshape(self.weight.shape)
        gb = g.sum(axis=0)
        gcols = g @ self.weight.reshape(self.out_c, -1)
        gcols = gcols.reshape(n, oh, ow, self.in_c, self.k, self.k).transpose(0, 3, 1, 2, 4, 5)
        gxp = np.zeros_like(xp)
        for i in range(self.k):
            for j in range(self.k):
                gxp[:, :, i : i + oh, j : j + ow] += gcols[:, :, :, :, i, j]
        h, w = x.shape[2], x.shape[3]
        if self.padding == "same" and self.k > 1:
            gx = gxp[:, :, top : top + h, top : top + w]
        else:
            gx = gxp
        return gx, [gw, gb]


class ReLU:
    kind = "relu"

    def params(self):
        return []

    def forward(self, x):
        return np.maximum(x, 0.0)

    def backward(self, x, grad_out):
        return grad_out * (x > 0.0), []


class MaxPool2:
    """2x2 max pooling, stride 2; odd trailing rows/columns are dropped.

    A column pool followed by a row pool, all elementwise; on ties the
    gradient routes to the earlier element, deterministically.
    """

    kind = "maxpool2"

    def params(self):
        return []

    def forward(self, x):
        h2, w2 = x.shape[2] // 2, x.shape[3] // 2
        a = x[:, :, : h2 * 2 : 2, : w2 * 2]
        b = x[:, :, 1 : h2 * 2 : 2, : w2 * 2]
        rows = np.maximum(a, b)
        return np.maximum(rows[:, :, :, 0::2], rows[:, :, :, 1::2])

    def backward(self, x, grad_out):
        h2, w2 = x.shape[2] // 2, x.shape[3] // 2
        a = x[:, :, : h2 * 2 : 2, : w2 * 2]
        b = x[:, :, 1 : h2 * 2 : 2, : w2 * 2]
        row_first = a >= b
        rows = np.maximum(a, b)
        col_first = rows[:, :, :, 0::2] >= rows[:, :, :, 1::2]
        grows = np.zeros_like(rows)
        grows[:, :, :, 0::2] = np.where(col_first, grad_out, 0.0)
        grows[:, :, :, 1::2] = np.where(col_first, 0.0, grad_out)
        gx = np.zeros_like(x)
        gx[:, :, : h2 * 2 : 2, : w2 * 2] = np.where(row_first, grows, 0.0)
        gx[:, :, 1 : h2 * 2 : 2, : w2 * 2] = np.where(row_first, 0.0, grows)
        return gx, []


class Flatten:
    kind = "flatten"

    def params(self):
        return []

    def forward(self, x):
        return x.reshape(x.shape[0], -1)

    def backward(self, x, grad_out):
        return grad_out.reshape(x.shape), []


class FC:
    kind = "fc"

    def __init__(self, in_dim: int, out_dim: int, *, rng=None, dtype=np.float64):
        self.in_dim, self.out_dim = in_dim, out_dim
        if rng is None:
            self.weight = np.zeros((in_dim, out_dim), dtype=dtype)
            self.bias = np.zeros(out_dim, dtype=dtype)
        else:
            self.weight = he_uniform(rng, (in_dim, out_dim), in_dim, dtype)
            self.bias = rng.uniform(-0.05, 0.05, size=out_dim).astype(dtype)

    def params(self):
        return [self.weight, self.bias]

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeMismatchError(f"fc expects (N,{self.in_dim}), got {x.shape}")
        return x @ self.weight + self.bias

    def backward(self, x, grad_out):
        gw = x.T @ grad_out
        gb = grad_out.sum(axis=0)
        return grad_out @ self.weight.T, [gw, gb]


class Softmax:
    kind = "softmax"

    def params(self):
        return []

    def forward(self, x):
        z = x - x.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def backward(self, x, grad_out):
        p = self.forward(x)
        dot = (grad_out * p).sum(axis=1, keepdims=True)
        return p * (grad_out - dot), []


def forward(layers, x) -> list[np.ndarray]:
    """Run the stack; returns [input, out_1, ..., out_L]."""
    acts = [x]
    for i, layer in enumerate(layers):
        try:
            acts.append(layer.forward(acts[-1]))
        except ShapeMismatchError as exc:
            raise ShapeMismatchError(f"layer {i} ({layer.kind}): {exc}") from None
    return acts


def backward(layers, acts, grad_out):
    """Gradients of a scalar loss w.r.t. every parameter and the input.

    Returns (param_grads, grad_in) where param_grads[i] aligns with
    layers[i].params().
    """
    param_grads: list[list[np.ndarray]] = [[] for _ in layers]
    g = grad_out
    for i in range(len(layers) - 1, -1, -1):
        g, pg = layers[i].backward(acts[i], g)
        param_grads[i] = pg
    return param_grads, g


def xent_loss(probs: np.ndarray, label: int) -> float:
    """-ln(probs[label]) with the probability clamped at 1e-12."""
    return float(-np.log(max(float(probs[label]), 1e-12)))


def xent_grad(probs: np.ndarray, label: int) -> np.ndarray:
    g = np.zeros_like(probs)
    g[label] = -1.0 / max(float(probs[label]), 1e-12)
    return g


def sgd_step(params, grads, velocity, lr: float, momentum: float = 0.0, weight_decay: float = 0.0):
    """v <- momentum*v - lr*(g + weight_decay*w); w <- w + v. In place."""
    if len(params) != len(grads) or len(params) != len(velocity):
        raise ShapeMismatchError("params, grads and velocity must align")
    for w, g, v in zip(params, grads, velocity):
        if w.shape != g.shape or w.shape != v.shape:
            raise ShapeMismatchError(f"mismatched shapes {w.shape}, {g.shape}, {v.shape}")
        v *= momentum
        v -= lr * (g + weight_decay * w)
        w += v
    return params

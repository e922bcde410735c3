"""Batch norm, pooling, dropout, dense layers and losses, plus the layer
objects (convolutional ones included) that the model executor chains.

Functional ops return ``(output, cache)`` where a backward pass needs saved
state; the matching ``*_backward`` consumes the cache.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import conv as K
from .errors import DataError, ParameterError, ShapeError
from .params import ParamStore
from .tensor import Rng, elu, elu_grad, relu, relu_grad

BN_EPSILON = 1e-3
BN_MOMENTUM = 0.99

TRAIN = "train"
INFER = "infer"


# ---------------------------------------------------------------------------
# batch normalization


@dataclass
class BatchNormState:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = BN_EPSILON
    momentum: float = BN_MOMENTUM
    mode: str = TRAIN

    @classmethod
    def fresh(cls, channels: int, dtype=np.float32, **kw) -> "BatchNormState":
        return cls(np.ones(channels, dtype), np.zeros(channels, dtype),
                   np.zeros(channels, dtype), np.ones(channels, dtype), **kw)


def batch_norm_forward(x: np.ndarray, state: BatchNormState):
    """Per-channel normalization over (n, h, w).

    In train mode the running statistics in ``state`` are updated in place
    with ``running = momentum * running + (1 - momentum) * batch`` using the
    biased batch variance.
    """
    if x.shape[1] != state.gamma.shape[0]:
        raise ShapeError(f"input has {x.shape[1]} channels, batch norm has {state.gamma.shape[0]}")
    if state.mode == TRAIN:
        count = x.shape[0] * x.shape[2] * x.shape[3]
        if count == 1:
            raise DataError("batch norm in train mode needs more than one value per channel")
        mean = np.einsum("nchw->c", x) / count
        xc = x - mean[None, :, None, None]
        var = np.einsum("nchw,nchw->c", xc, xc) / count
        m = state.momentum
        state.running_mean[...] = m * state.running_mean + (1 - m) * mean
        state.running_var[...] = m * state.running_var + (1 - m) * var
    else:
        xc = x - state.running_mean[None, :, None, None]
        var = state.running_var
    inv_std = (1.0 / np.sqrt(var + state.epsilon)).astype(x.dtype)
    xhat = xc * inv_std[None, :, None, None]
    y = xhat * state.gamma[None, :, None, None] + state.beta[None, :, None, None]
    return y, (xhat, inv_std, state.gamma, state.mode)


def batch_norm_backward(dy: np.ndarray, cache):
    """Returns (grad_input, grad_gamma, grad_beta)."""
    xhat, inv_std, gamma, mode = cache
    dbeta = np.einsum("nchw->c", dy)
    dgamma = np.einsum("nchw,nchw->c", dy, xhat)
    scale = (gamma * inv_std)[None, :, None, None]
    if mode == TRAIN:
        count = dy.shape[0] * dy.shape[2] * dy.shape[3]
        dx = scale * (dy - (dbeta / count)[None, :, None, None]
                      - xhat * (dgamma / count)[None, :, None, None])
    else:
        dx = scale * dy
    return dx, dgamma, dbeta


# ---------------------------------------------------------------------------
# pooling


def max_pool(x: np.ndarray, geom: K.ConvGeometry):
    """Window maximum; Same padding fills with -inf so it never wins.

    Ties go to the first window position in row-major order.
    """
    n, c, h, w = x.shape
    oh, ow = geom.output_hw(h, w)
    xp = K.pad_input(x, geom, value=-np.inf)
    out = K._window(xp, 0, 0, geom, oh, ow).copy()
    arg = np.zeros(out.shape, dtype=np.int8)
    k = 0
    for ky in range(geom.kernel[0]):
        for kx in range(geom.kernel[1]):
            if k:
                win = K._window(xp, ky, kx, geom, oh, ow)
                better = win > out
                np.copyto(out, win, where=better)
                arg[better] = k
            k += 1
    return out, (x.shape, geom, arg)


def max_pool_backward(dy: np.ndarray, cache) -> np.ndarray:
    x_shape, geom, arg = cache
    n, c, h, w = x_shape
    oh, ow = dy.shape[2:]
    (pt, pb), (pl, pr) = geom.pads(h, w)
    dxp = np.zeros((n, c, h + pt + pb, w + pl + pr), dtype=dy.dtype)
    k = 0
    for ky in range(geom.kernel[0]):
        for kx in range(geom.kernel[1]):
            ys, xs = K._slices(ky, kx, geom, oh, ow)
            dxp[:, :, ys, xs] += np.where(arg == k, dy, 0)
            k += 1
    return np.ascontiguousarray(K._unpad(dxp, geom, h, w))


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    return x.mean(axis=(2, 3), keepdims=True)


def global_avg_pool_backward(dy: np.ndarray, x_shape) -> np.ndarray:
    h, w = x_shape[2:]
    return np.broadcast_to(dy / (h * w), x_shape).copy()


# ---------------------------------------------------------------------------
# dropout


def dropout(x: np.ndarray, rate: float, rng: Rng | None, mode: str = TRAIN):
    """Inverted dropout. Returns (output, mask); mask is None when inactive."""
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
    if mode != TRAIN or rate == 0.0:
        return x, None
    keep = rng.random(x.shape) >= rate
    mask = keep.astype(x.dtype) * x.dtype.type(1.0 / (1.0 - rate))
    return x * mask, mask


def dropout_backward(dy: np.ndarray, mask) -> np.ndarray:
    return dy if mask is None else dy * mask


# ---------------------------------------------------------------------------
# dense and losses


def dense(x: np.ndarray, weights: np.ndarray, bias: np.ndarray | None) -> np.ndarray:
    x2 = x.reshape(x.shape[0], -1)
    if x2.shape[1] != weights.shape[1]:
        raise ShapeError(f"dense expects {weights.shape[1]} inputs, got {x2.shape[1]}")
    y = x2 @ weights.T
    return y if bias is None else y + bias


def dense_backward(x, weights, dy):
    """Returns (grad_input shaped like x, grad_weights, grad_bias)."""
    x2 = x.reshape(x.shape[0], -1)
    return (dy @ weights).reshape(x.shape), dy.T @ x2, dy.sum(axis=0)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean-over-batch categorical cross-entropy. Returns (loss, grad_logits)."""
    n, k = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (n,) or labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        raise DataError(f"labels must be {n} indices in [0, {k})")
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(logsum - z[np.arange(n), labels], dtype=np.float64))
    grad = softmax(logits)
    grad[np.arange(n), labels] -= 1
    return loss, grad / n


def sigmoid_cross_entropy(logits: np.ndarray, targets: np.ndarray):
    """Multi-label loss: per-example sum of binary CEs, mean over batch."""
    if logits.shape != targets.shape:
        raise DataError(f"multi-hot targets {targets.shape} vs logits {logits.shape}")
    t = targets.astype(logits.dtype)
    per = np.maximum(logits, 0) - logits * t + np.log1p(np.exp(-np.abs(logits)))
    loss = float(per.sum(dtype=np.float64) / logits.shape[0])
    grad = (1.0 / (1.0 + np.exp(-logits)) - t) / logits.shape[0]
    return loss, grad.astype(logits.dtype, copy=False)


# ---------------------------------------------------------------------------
# layer objects
#
# Shapes passed around here exclude the batch axis: (c, h, w) for maps and
# (features,) after flattening.


class Layer:
    kind = "layer"

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass
class Conv(Layer):
    store: ParamStore
    name: str
    geom: K.ConvGeometry
    naive: bool = False
    kind = "conv"

    def forward(self, x, train):
        self._x = x
        fn = K.conv2d_naive if self.naive else K.conv2d_im2col
        return fn(x, self.store[self.name], self.geom)

    def backward(self, dy):
        fn = K.conv2d_naive_backward if self.naive else K.conv2d_im2col_backward
        dx, dk = fn(self._x, self.store[self.name], self.geom, dy)
        self.store.grads[self.name] = dk
        return dx


@dataclass
class Depthwise(Layer):
    store: ParamStore
    name: str
    geom: K.ConvGeometry
    multiplier: int = 1
    kind = "depthwise"

    def forward(self, x, train):
        self._x = x
        return K.depthwise_conv2d(x, self.store[self.name], self.geom, self.multiplier)

    def backward(self, dy):
        dx, dk = K.depthwise_conv2d_backward(self._x, self.store[self.name], self.geom, dy,
                                             self.multiplier)
        self.store.grads[self.name] = dk
        return dx


@dataclass
class SeparableConv(Layer):
    store: ParamStore
    dw_name: str
    pw_name: str
    geom: K.ConvGeometry
    multiplier: int = 1
    activation: str = "none"
    kind = "sepconv"

    def forward(self, x, train):
        self._x = x
        pre = K.depthwise_conv2d(x, self.store[self.dw_name], self.geom, self.multiplier)
        self._pre = pre
        if self.activation == "relu":
            mid = relu(pre)
        elif self.activation == "elu":
            mid = elu(pre)
        else:
            mid = pre
        self._mid = mid
        return K.pointwise_conv2d(mid, self.store[self.pw_name])

    def backward(self, dy):
        dmid, dpw = K.pointwise_conv2d_backward(self._mid, self.store[self.pw_name], dy)
        if self.activation == "relu":
            dmid = relu_grad(self._pre, dmid)
        elif self.activation == "elu":
            dmid = elu_grad(self._pre, dmid)
        dx, ddw = K.depthwise_conv2d_backward(self._x, self.store[self.dw_name], self.geom, dmid,
                                              self.multiplier)
        self.store.grads[self.dw_name] = ddw
        self.store.grads[self.pw_name] = dpw
        return dx


@dataclass
class GroupConv(Layer):
    store: ParamStore
    names: list
    geom: K.ConvGeometry
    naive: bool = False
    kind = "groupconv"

    def forward(self, x, train):
        self._x = x
        return K.grouped_conv2d(x, [self.store[n] for n in self.names], self.geom, naive=self.naive)

    def backward(self, dy):
        dx, dks = K.grouped_conv2d_backward(self._x, [self.store[n] for n in self.names], self.geom, dy)
        for n, g in zip(self.names, dks):
            self.store.grads[n] = g
        return dx


@dataclass
class BatchNorm(Layer):
    store: ParamStore
    prefix: str
    epsilon: float = BN_EPSILON
    momentum: float = BN_MOMENTUM
    kind = "bn"

    def state(self, train: bool) -> BatchNormState:
        s = self.store
        p = self.prefix
        return BatchNormState(s[p + ".gamma"], s[p + ".beta"], s[p + ".running_mean"],
                              s[p + ".running_var"], self.epsilon, self.momentum,
                              TRAIN if train else INFER)

    def forward(self, x, train):
        y, self._cache = batch_norm_forward(x, self.state(train))
        return y

    def backward(self, dy):
        dx, dg, db = batch_norm_backward(dy, self._cache)
        self.store.grads[self.prefix + ".gamma"] = dg
        self.store.grads[self.prefix + ".beta"] = db
        return dx


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, train):
        self._x = x
        return relu(x)

    def backward(self, dy):
        return relu_grad(self._x, dy)


class ELU(Layer):
    kind = "elu"

    def forward(self, x, train):
        self._x = x
        return elu(x)

    def backward(self, dy):
        return elu_grad(self._x, dy)


@dataclass
class MaxPool(Layer):
    geom: K.ConvGeometry
    kind = "maxpool"

    def forward(self, x, train):
        y, self._cache = max_pool(x, self.geom)
        return y

    def backward(self, dy):
        return max_pool_backward(dy, self._cache)


class GlobalAvgPool(Layer):
    kind = "gap"

    def forward(self, x, train):
        self._shape = x.shape
        return global_avg_pool(x)

    def backward(self, dy):
        return global_avg_pool_backward(dy, self._shape)


@dataclass
class Dropout(Layer):
    rate: float
    rng: Rng
    kind = "dropout"

    def forward(self, x, train):
        y, self._mask = dropout(x, self.rate, self.rng, TRAIN if train else INFER)
        return y

    def backward(self, dy):
        return dropout_backward(dy, self._mask)


@dataclass
class Dense(Layer):
    store: ParamStore
    w_name: str
    b_name: str | None
    kind = "dense"

    def forward(self, x, train):
        self._x = x
        b = self.store[self.b_name] if self.b_name else None
        return dense(x, self.store[self.w_name], b)

    def backward(self, dy):
        dx, dw, db = dense_backward(self._x, self.store[self.w_name], dy)
        self.store.grads[self.w_name] = dw
        if self.b_name:
            self.store.grads[self.b_name] = db
        return dx


@dataclass
class Sequential(Layer):
    layers: list = field(default_factory=list)
    kind = "sequential"

    def forward(self, x, train):
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy


@dataclass
class Residual(Layer):
    """body(x) + shortcut(x); an empty shortcut is the identity."""
    body: Sequential
    shortcut: Sequential
    kind = "residual"

    def forward(self, x, train):
        a = self.body.forward(x, train)
        b = self.shortcut.forward(x, train)
        if a.shape != b.shape:
            raise ShapeError(f"residual join mismatch {a.shape} vs {b.shape}")
        return a + b

    def backward(self, dy):
        return self.body.backward(dy) + self.shortcut.backward(dy)


@dataclass
class Parallel(Layer):
    """Branches applied to the same input, concatenated along channels."""
    branches: list
    kind = "parallel"

    def forward(self, x, train):
        outs = [b.forward(x, train) for b in self.branches]
        self._splits = np.cumsum([o.shape[1] for o in outs])[:-1]
        return np.concatenate(outs, axis=1)

    def backward(self, dy):
        parts = np.split(dy, self._splits, axis=1)
        return sum(b.backward(np.ascontiguousarray(p)) for b, p in zip(self.branches, parts))

"""Instantiate an ArchSpec into runnable layers backed by a ParamStore."""

from __future__ import annotations

import numpy as np

from . import layers as L
from .arch import ArchSpec, Block, _geom, infer_shapes, param_name, parse_tree
from .errors import DataError
from .params import ParamStore
from .tensor import Rng, glorot_uniform


def init_params(spec: ArchSpec, rng: Rng, dtype=np.float32) -> ParamStore:
    """Glorot-uniform kernels, zero biases/shifts, unit BN scale and variance.

    Fans: regular conv ``cin*k*k`` / ``cout*k*k``; depthwise ``k*k`` /
    ``k*k*multiplier`` (one input channel per filter); dense ``in``/``out``.
    """
    store = ParamStore()
    for i, node in enumerate(spec.nodes):
        kind = node.kind
        k = int(node.get("kernel", 1))
        if kind == "conv":
            cin, cout = node["in"], node["filters"]
            store.add(param_name(i, "kernel"),
                      glorot_uniform((cout, cin, k, k), cin * k * k, cout * k * k, rng, dtype))
        elif kind in ("sepconv", "depthwise"):
            cin, m = node["in"], node.get("multiplier", 1)
            store.add(param_name(i, "depthwise"),
                      glorot_uniform((1, cin * m, k, k), k * k, k * k * m, rng, dtype))
            if kind == "sepconv":
                cout = node["filters"]
                store.add(param_name(i, "pointwise"),
                          glorot_uniform((cout, cin * m, 1, 1), cin * m, cout, rng, dtype))
        elif kind == "groupconv":
            for g, s in enumerate(node["splits"]):
                store.add(param_name(i, f"kernel{g}"),
                          glorot_uniform((s, s, k, k), s * k * k, s * k * k, rng, dtype))
        elif kind == "bn":
            c = node["channels"]
            store.add(param_name(i, "gamma"), np.ones(c, dtype))
            store.add(param_name(i, "beta"), np.zeros(c, dtype))
            store.add(param_name(i, "running_mean"), np.zeros(c, dtype), trainable=False)
            store.add(param_name(i, "running_var"), np.ones(c, dtype), trainable=False)
        elif kind == "dense":
            store.add(param_name(i, "weight"),
                      glorot_uniform((node["units"], node["in"]), node["in"], node["units"], rng, dtype))
            if node.get("bias", 1):
                store.add(param_name(i, "bias"), np.zeros(node["units"], dtype))
    return store


class Model:
    """Forward/backward executor for one spec and one ParamStore.

    ``loss_fn`` is taken from the spec's trailing ``loss`` node.
    """

    def __init__(self, spec: ArchSpec, store: ParamStore, rng: Rng | None = None,
                 naive: bool = False):
        infer_shapes(spec)
        self.spec = spec
        self.store = store
        self.rng = rng if rng is not None else Rng(0)
        self.naive = naive
        self.loss_fn = None
        self.root = L.Sequential(self._build(parse_tree(spec)))

    def _build(self, items) -> list:
        out = []
        for item in items:
            if isinstance(item, Block):
                paths = [L.Sequential(self._build(p)) for p in item.paths]
                if item.kind == "residual":
                    short = paths[1] if len(paths) > 1 else L.Sequential([])
                    out.append(L.Residual(paths[0], short))
                else:
                    out.append(L.Parallel(paths))
                continue
            layer = self._leaf(item, self.spec.nodes[item])
            if layer is not None:
                out.append(layer)
        return out

    def _leaf(self, i: int, node):
        kind = node.kind
        s = self.store
        if kind == "input":
            return None
        if kind == "conv":
            return L.Conv(s, param_name(i, "kernel"), _geom(node), naive=self.naive)
        if kind == "sepconv":
            return L.SeparableConv(s, param_name(i, "depthwise"), param_name(i, "pointwise"),
                                   _geom(node), node.get("multiplier", 1), node.get("act", "none"))
        if kind == "depthwise":
            return L.Depthwise(s, param_name(i, "depthwise"), _geom(node), node.get("multiplier", 1))
        if kind == "groupconv":
            return L.GroupConv(s, [param_name(i, f"kernel{g}") for g in range(len(node["splits"]))],
                               _geom(node), naive=self.naive)
        if kind == "bn":
            return L.BatchNorm(s, f"n{i:03d}", node.get("eps", L.BN_EPSILON),
                               node.get("momentum", L.BN_MOMENTUM))
        if kind == "relu":
            return L.ReLU()
        if kind == "elu":
            return L.ELU()
        if kind == "maxpool":
            return L.MaxPool(_geom(node))
        if kind == "gap":
            return L.GlobalAvgPool()
        if kind == "dropout":
            return L.Dropout(float(node["rate"]), self.rng)
        if kind == "dense":
            return L.Dense(s, param_name(i, "weight"),
                           param_name(i, "bias") if node.get("bias", 1) else None)
        if kind == "loss":
            self.loss_fn = node["fn"]
            return None
        raise ValueError(f"cannot instantiate node kind {kind!r}")

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        expected = tuple(self.spec.input_shape)
        if tuple(x.shape[1:]) != expected:
            raise DataError(f"model expects inputs of shape (n, {expected}), got {x.shape}")
        return self.root.forward(x, train)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return self.root.backward(dy)

    def loss(self, logits: np.ndarray, targets: np.ndarray):
        if self.loss_fn == "sigmoid":
            return L.sigmoid_cross_entropy(logits, targets)
        return L.softmax_cross_entropy(logits, targets)

    def train_step_grads(self, x: np.ndarray, targets: np.ndarray):
        """Forward in train mode, loss, backward. Returns (loss, logits)."""
        self.store.grads.clear()
        logits = self.forward(x, train=True)
        loss, dlogits = self.loss(logits, targets)
        self.backward(dlogits.astype(logits.dtype, copy=False))
        return loss, logits


def build_model(spec: ArchSpec, seed: int = 0, dtype=np.float32, naive: bool = False) -> Model:
    rng = Rng(seed)
    store = init_params(spec, rng.spawn(), dtype)
    return Model(spec, store, rng.spawn(), naive=naive)


"""Randomised numerical equivalence checks between construction pairs.

Deviation is ``max|a - b| / max(max|a|, max|b|)`` over the output tensor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import conv as K
from .arch import build_simplified_inception, reformulate_inception
from .model import Model, build_model
from .tensor import Rng

CHECKS = ("inception-reformulation", "spectrum-endpoints")


def relative_deviation(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(a), initial=0.0)), float(np.max(np.abs(b), initial=0.0)))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(a - b)) / scale)


@dataclass(frozen=True)
class Instance:
    description: str
    deviation: float


@dataclass(frozen=True)
class EquivReport:
    check: str
    seed: int
    instances: tuple

    @property
    def max_deviation(self) -> float:
        return max(i.deviation for i in self.instances)

    @property
    def worst(self) -> Instance:
        return max(self.instances, key=lambda i: i.deviation)


def _pick(rng: Rng, options):
    return options[int(rng.integers(len(options), 1)[0])]


def inception_instance(rng: Rng) -> Instance:
    """Towers (1x1 -> kxk) concatenated vs one 1x1 then per-segment kxk convs."""
    g = 1 + int(rng.integers(4, 1)[0])
    widths = [1 + int(w) for w in rng.integers(8, g)]
    m_in = 1 + int(rng.integers(8, 1)[0])
    hw = 3 + int(rng.integers(10, 1)[0])
    kernel = _pick(rng, (1, 3, 5))
    activation = bool(rng.integers(2, 1)[0])
    spec = build_simplified_inception(m_in, widths, hw, kernel, activation)
    model = build_model(spec, seed=int(rng.next_u64(1)[0] % 2**32), dtype=np.float64)
    spec2, store2 = reformulate_inception(spec, model.store)
    model2 = Model(spec2, store2)
    x = rng.normal((2, m_in, hw, hw))
    dev = relative_deviation(model.forward(x), model2.forward(x))
    desc = f"m_in={m_in} widths={widths} hw={hw} k={kernel} relu={activation}"
    return Instance(desc, dev)


def spectrum_instance(rng: Rng) -> Instance:
    """g=1 against 1x1 then a full conv; g=M against 1x1 then depthwise."""
    m_in = 1 + int(rng.integers(8, 1)[0])
    m = 1 + int(rng.integers(8, 1)[0])
    hw = 3 + int(rng.integers(10, 1)[0])
    kernel = _pick(rng, (1, 3, 5))
    stride = _pick(rng, (1, 2))
    padding = K.SAME if kernel > hw else _pick(rng, (K.SAME, K.VALID))
    geom = K.ConvGeometry.square(kernel, stride, padding)
    x = rng.normal((2, m_in, hw, hw))
    pw = rng.normal((m, m_in, 1, 1))
    mid = K.pointwise_conv2d(x, pw)

    full = rng.normal((m, m, kernel, kernel))
    dev1 = relative_deviation(K.segment_spectrum_conv(x, pw, full, 1, geom),
                              K.conv2d_naive(mid, full, geom))
    per_channel = rng.normal((m, 1, kernel, kernel))
    dw = per_channel.reshape(1, m, kernel, kernel)
    devm = relative_deviation(K.segment_spectrum_conv(x, pw, per_channel, m, geom),
                              K.depthwise_conv2d_naive(mid, dw, geom))
    desc = f"m_in={m_in} M={m} hw={hw} k={kernel} s={stride} {padding} g=1:{dev1:.2e} g=M:{devm:.2e}"
    return Instance(desc, max(dev1, devm))


_INSTANCE = {"inception-reformulation": inception_instance, "spectrum-endpoints": spectrum_instance}


def run_equiv(check: str, seed: int, instances: int = 20) -> EquivReport:
    if check not in _INSTANCE:
        raise ValueError(f"unknown check {check!r}; choose from {CHECKS}")
    rng = Rng(seed)
    return EquivReport(check, seed, tuple(_INSTANCE[check](rng) for _ in range(instances)))

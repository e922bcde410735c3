"""SGD with momentum, RMSprop, step schedules, L2 weight decay, Polyak averaging.

Update rules (g' = g + wd * w is the coupled L2 term):

* SGD:     v <- momentum * v - lr * g';  w <- w + v
* RMSprop: s <- rho * s + (1 - rho) * g'^2
           v <- momentum * v - lr * g' / sqrt(s + eps);  w <- w + v

With lr = 0 neither rule moves the weights, the decay term included.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .params import ParamStore

SGD = "sgd"
RMSPROP = "rmsprop"
EPOCHS = "epochs"
SAMPLES = "samples"


@dataclass(frozen=True)
class Schedule:
    """Multiply the rate by ``factor`` every ``every`` epochs (or samples)."""
    factor: float = 0.94
    every: float = 2
    unit: str = EPOCHS

    def __post_init__(self):
        if not 0 < self.factor <= 1:
            raise ConfigError(f"decay factor must be in (0, 1], got {self.factor}")
        if self.every <= 0:
            raise ConfigError("decay period must be positive")
        if self.unit not in (EPOCHS, SAMPLES):
            raise ConfigError(f"decay unit must be 'epochs' or 'samples', got {self.unit!r}")


@dataclass(frozen=True)
class OptimConfig:
    kind: str = SGD
    momentum: float = 0.9
    lr0: float = 0.045
    schedule: Schedule = field(default_factory=Schedule)
    weight_decay: float = 1e-5
    polyak: bool = True
    polyak_decay: float = 0.999
    rho: float = 0.9
    epsilon: float = 1e-7

    def __post_init__(self):
        if self.kind not in (SGD, RMSPROP):
            raise ConfigError(f"optimizer must be 'sgd' or 'rmsprop', got {self.kind!r}")
        if not self.lr0 > 0:
            raise ConfigError(f"initial learning rate must be > 0, got {self.lr0}")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigError("weight decay must be >= 0")
        if self.polyak and not 0 < self.polyak_decay < 1:
            raise ConfigError("polyak decay must be in (0, 1)")
        if not 0 <= self.rho < 1 or self.epsilon <= 0:
            raise ConfigError("rmsprop rho must be in [0, 1) and epsilon > 0")


def imagenet_config(**overrides) -> OptimConfig:
    """SGD, momentum 0.9, lr 0.045 decayed by 0.94 every 2 epochs, wd 1e-5."""
    base = dict(kind=SGD, momentum=0.9, lr0=0.045, schedule=Schedule(0.94, 2, EPOCHS),
                weight_decay=1e-5)
    base.update(overrides)
    return OptimConfig(**base)


def jft_config(**overrides) -> OptimConfig:
    """RMSprop, momentum 0.9, lr 0.001 decayed by 0.9 every 3,000,000 samples."""
    base = dict(kind=RMSPROP, momentum=0.9, lr0=0.001,
                schedule=Schedule(0.9, 3_000_000, SAMPLES), weight_decay=1e-5)
    base.update(overrides)
    return OptimConfig(**base)


def lr_at(config: OptimConfig, epoch: float, samples_seen: int) -> float:
    sched = config.schedule
    progress = epoch if sched.unit == EPOCHS else samples_seen
    if progress < 0:
        raise ConfigError("epoch and samples_seen must be >= 0")
    return config.lr0 * sched.factor ** math.floor(progress / sched.every)


def sgd_momentum_step(w: np.ndarray, g: np.ndarray, v: np.ndarray, lr: float,
                      momentum: float, weight_decay: float) -> None:
    """In-place update of ``w`` and velocity ``v``."""
    if not (w.shape == g.shape == v.shape):
        raise ShapeError(f"shape mismatch: w{w.shape} g{g.shape} v{v.shape}")
    gd = g + weight_decay * w if weight_decay else g
    v *= momentum
    v -= lr * gd
    w += v


def rmsprop_step(w: np.ndarray, g: np.ndarray, s: np.ndarray, v: np.ndarray, lr: float,
                 momentum: float, weight_decay: float, rho: float = 0.9,
                 epsilon: float = 1e-7) -> None:
    """In-place update of ``w``, mean-square ``s`` and velocity ``v``."""
    if not (w.shape == g.shape == s.shape == v.shape):
        raise ShapeError(f"shape mismatch: w{w.shape} g{g.shape} s{s.shape} v{v.shape}")
    gd = g + weight_decay * w if weight_decay else g
    s *= rho
    s += (1 - rho) * gd * gd
    v *= momentum
    v -= lr * gd / np.sqrt(s + epsilon)
    w += v


def polyak_update(shadow: np.ndarray, param: np.ndarray, decay: float) -> None:
    shadow *= decay
    shadow += (1 - decay) * param


class Optimizer:
    """Owns the per-parameter buffers and the step/sample counters."""

    def __init__(self, config: OptimConfig, store: ParamStore):
        self.config = config
        self.store = store
        self.step_count = 0
        self.samples_seen = 0
        names = store.trainable_names()
        self.velocity = {n: np.zeros_like(store[n]) for n in names}
        self.mean_square = ({n: np.zeros_like(store[n]) for n in names}
                            if config.kind == RMSPROP else {})
        self.shadow = {n: store[n].copy() for n in names} if config.polyak else {}

    def lr(self, epoch: float) -> float:
        return lr_at(self.config, epoch, self.samples_seen)

    def step(self, lr: float, batch_size: int = 0) -> None:
        cfg = self.config
        for name, v in self.velocity.items():
            w = self.store[name]
            g = self.store.grads[name]
            if cfg.kind == SGD:
                sgd_momentum_step(w, g, v, lr, cfg.momentum, cfg.weight_decay)
            else:
                rmsprop_step(w, g, self.mean_square[name], v, lr, cfg.momentum,
                             cfg.weight_decay, cfg.rho, cfg.epsilon)
            if cfg.polyak:
                polyak_update(self.shadow[name], w, cfg.polyak_decay)
        self.step_count += 1
        self.samples_seen += batch_size

    @contextmanager
    def polyak_weights(self):
        """Temporarily point the store at the shadow weights (no-op if disabled)."""
        if not self.config.polyak:
            yield self.store
            return
        live = {n: self.store[n] for n in self.shadow}
        try:
            for n, s in self.shadow.items():
                self.store[n] = s
            yield self.store
        finally:
            for n, w in live.items():
                self.store[n] = w

    def state_tensors(self) -> dict:
        out = {}
        for n, v in self.velocity.items():
            out[f"optim.velocity.{n}"] = v
        for n, s in self.mean_square.items():
            out[f"optim.mean_square.{n}"] = s
        for n, s in self.shadow.items():
            out[f"polyak.{n}"] = s
        return out

    def load_state_tensors(self, tensors: dict) -> None:
        for key, value in tensors.items():
            group, _, name = key.partition(".")
            if group == "polyak":
                target = self.shadow
            else:
                sub, _, name = name.partition(".")
                target = self.velocity if sub == "velocity" else self.mean_square
            if target[name].shape != value.shape:
                raise ShapeError(f"{key}: checkpoint shape {value.shape} != {target[name].shape}")
            target[name][...] = value

from __future__ import annotations

import hashlib
from collections import OrderedDict
from typing import Iterator

import numpy as np

from .errors import ShapeError


class ParamStore:
    """Named, ordered learnable tensors plus non-learnable running state.

    Layers look their tensors up by name on every call, so swapping the
    array behind a name (e.g. for Polyak evaluation) is picked up at once.
    Gradients are written to ``grads`` by the backward pass.
    """

    def __init__(self):
        self._values: "OrderedDict[str, np.ndarray]" = OrderedDict()
        self._trainable: dict[str, bool] = {}
        self.grads: dict[str, np.ndarray] = {}

    def add(self, name: str, value: np.ndarray, trainable: bool = True) -> np.ndarray:
        if name in self._values:
            raise KeyError(f"duplicate parameter name {name!r}")
        self._values[name] = value
        self._trainable[name] = trainable
        return value

    def __getitem__(self, name: str) -> np.ndarray:
        return self._values[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        old = self._values[name]
        if old.shape != value.shape:
            raise ShapeError(f"{name}: cannot replace {old.shape} with {value.shape}")
        self._values[name] = value

    def __contains__(self, name: str) -> bool:
        return name in self._values

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def items(self):
        return self._values.items()

    def is_trainable(self, name: str) -> bool:
        return self._trainable[name]

    def trainable_names(self) -> list[str]:
        return [k for k in self._values if self._trainable[k]]

    def non_trainable_names(self) -> list[str]:
        return [k for k in self._values if not self._trainable[k]]

    def count(self, trainable: bool | None = None) -> int:
        return sum(v.size for k, v in self._values.items()
                   if trainable is None or self._trainable[k] == trainable)

    def astype(self, dtype) -> "ParamStore":
        out = ParamStore()
        for k, v in self._values.items():
            out.add(k, v.astype(dtype), self._trainable[k])
        return out

    def copy(self) -> "ParamStore":
        out = ParamStore()
        for k, v in self._values.items():
            out.add(k, v.copy(), self._trainable[k])
        return out

    def checksum(self, trainable: bool | None = None) -> str:
        h = hashlib.sha256()
        for k, v in self._values.items():
            if trainable is None or self._trainable[k] == trainable:
                h.update(k.encode())
                h.update(np.ascontiguousarray(v).tobytes())
        return h.hexdigest()

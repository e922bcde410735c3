"""Checkpoints: a text index followed by concatenated XTSR blocks.

Layout::

    xsep-checkpoint 1
    meta <key> <int>            (zero or more)
    tensor <name> <nbytes>      (one per block, in file order)
    end
    <XTSR block> <XTSR block> ...

Everything is written in a fixed order, so save -> load -> save
reproduces the file byte for byte.
"""

from __future__ import annotations

import io
import os
import tempfile
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .arch import ArchSpec, loads
from .errors import FormatError
from .tensor import encode_tensor, read_tensor_from

MAGIC_LINE = "xsep-checkpoint 1"
ARCH_KEY = "meta.archspec"


@dataclass
class Checkpoint:
    tensors: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)
    meta: "OrderedDict[str, int]" = field(default_factory=OrderedDict)

    @property
    def spec(self) -> ArchSpec:
        return loads(self.tensors[ARCH_KEY].tobytes().decode("utf-8"))

    def with_spec(self, spec: ArchSpec) -> "Checkpoint":
        self.tensors[ARCH_KEY] = np.frombuffer(spec.to_text().encode("utf-8"), dtype=np.uint8)
        self.tensors.move_to_end(ARCH_KEY, last=False)
        return self

    def encode(self) -> bytes:
        blocks = [(name, encode_tensor(arr)) for name, arr in self.tensors.items()]
        lines = [MAGIC_LINE]
        lines += [f"meta {k} {int(v)}" for k, v in self.meta.items()]
        for name, blob in blocks:
            if not name or any(ch.isspace() for ch in name):
                raise FormatError(f"tensor name {name!r} must be non-empty without whitespace")
            lines.append(f"tensor {name} {len(blob)}")
        lines.append("end")
        return ("\n".join(lines) + "\n").encode("utf-8") + b"".join(b for _, b in blocks)


def decode_checkpoint(data: bytes) -> Checkpoint:
    fh = io.BytesIO(data)
    if fh.readline().decode("utf-8", "replace").rstrip("\n") != MAGIC_LINE:
        raise FormatError("not an xsep checkpoint (bad header)")
    ckpt = Checkpoint()
    entries = []
    while True:
        raw = fh.readline()
        if not raw:
            raise FormatError("checkpoint index not terminated")
        parts = raw.decode("utf-8", "replace").split()
        if parts == ["end"]:
            break
        if len(parts) != 3 or parts[0] not in ("meta", "tensor"):
            raise FormatError(f"bad checkpoint index line {raw!r}")
        try:
            value = int(parts[2])
        except ValueError as exc:
            raise FormatError(f"bad integer in checkpoint index line {raw!r}") from exc
        if parts[0] == "meta":
            ckpt.meta[parts[1]] = value
        else:
            entries.append((parts[1], value))
    for name, nbytes in entries:
        start = fh.tell()
        ckpt.tensors[name] = read_tensor_from(fh)
        if fh.tell() - start != nbytes:
            raise FormatError(f"tensor {name}: block length does not match index")
    if fh.read(1):
        raise FormatError("trailing bytes after last checkpoint block")
    return ckpt


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    """Write atomically so an interrupted save never clobbers the previous file."""
    data = ckpt.encode()
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".ckpt-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        return decode_checkpoint(fh.read())

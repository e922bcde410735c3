"""Rank-4 tensors, the SplitMix64 generator and the XTSR file format.

Tensors are plain C-contiguous numpy arrays in (n, c, h, w) order, so the
element (i, j, y, x) lives at flat offset ``((i*c + j)*h + y)*w + x``.
float32 is the working dtype; float64 is used for gradient checks.

Reductions (``tsum``/``tmean``) accumulate in float64 with numpy's pairwise
summation over the flattened buffer, which is deterministic for a given
shape and does not depend on thread count.
"""

from __future__ import annotations

import io
import struct
from typing import BinaryIO, Sequence

import numpy as np

from .errors import FormatError, ParameterError, ShapeError, SizeError

DTYPES = (np.float32, np.float64)

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def splitmix64_scalar(state: int) -> tuple[int, int]:
    """Reference scalar SplitMix64 step. Returns (new_state, output)."""
    state = (state + _GAMMA) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return state, z ^ (z >> 31)


class Rng:
    """SplitMix64 pseudo-random generator.

    SplitMix64 (Steele, Lea & Flood 2014) is a counter-based mixer: draw
    ``i`` (0-based) is ``mix(seed + (i + 1) * 0x9E3779B97F4A7C15 mod 2**64)``.
    That makes the stream vectorizable in numpy uint64 arithmetic and
    identical on every platform.  Floats use the top 53 bits.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self.counter = 0

    def next_u64(self, count: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + 1 + count, dtype=np.uint64)
        self.counter += count
        z = np.uint64(self.seed) + idx * np.uint64(_GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))

    def random(self, size) -> np.ndarray:
        """Uniform float64 samples in [0, 1)."""
        shape = _as_shape(size)
        n = int(np.prod(shape, dtype=np.int64))
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
        return u.reshape(shape)

    def uniform(self, low: float, high: float, size) -> np.ndarray:
        return low + (high - low) * self.random(size)

    def normal(self, size) -> np.ndarray:
        """Standard normal samples (Box-Muller, cosine branch only)."""
        shape = _as_shape(size)
        n = int(np.prod(shape, dtype=np.int64))
        u1 = 1.0 - self.random(n)  # (0, 1]
        u2 = self.random(n)
        z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
        return z.reshape(shape)

    def permutation(self, n: int) -> np.ndarray:
        keys = self.next_u64(n)
        return np.argsort(keys, kind="stable")

    def integers(self, high: int, size) -> np.ndarray:
        """Integers in [0, high) (multiply-shift on 53-bit floats; bias < 2**-40 for small high)."""
        return np.floor(self.random(size) * high).astype(np.int64)

    def spawn(self) -> "Rng":
        """Derive an independent child generator from the next draw."""
        return Rng(int(self.next_u64(1)[0]))


def _as_shape(size) -> tuple[int, ...]:
    if isinstance(size, (int, np.integer)):
        return (int(size),)
    return tuple(int(s) for s in size)


def _check_dims(dims: Sequence[int], dtype=np.float32) -> tuple[int, int, int, int]:
    dims = tuple(int(d) for d in dims)
    if len(dims) != 4:
        raise ShapeError(f"expected 4 dims (n, c, h, w), got {dims}")
    if any(d < 1 for d in dims):
        raise ShapeError(f"all dims must be >= 1, got {dims}")
    total = 1
    for d in dims:
        total *= d
    if total * np.dtype(dtype).itemsize > np.iinfo(np.intp).max:
        raise SizeError(f"tensor of dims {dims} exceeds addressable size")
    return dims


def fill(dims: Sequence[int], value: float, dtype=np.float32) -> np.ndarray:
    dims = _check_dims(dims, dtype)
    return np.full(dims, value, dtype=dtype)


def zeros(dims: Sequence[int], dtype=np.float32) -> np.ndarray:
    return fill(dims, 0.0, dtype)


def ones(dims: Sequence[int], dtype=np.float32) -> np.ndarray:
    return fill(dims, 1.0, dtype)


def offset(dims: Sequence[int], index: Sequence[int]) -> int:
    n, c, h, w = dims
    i, j, y, x = index
    return ((i * c + j) * h + y) * w + x


def glorot_uniform(dims: Sequence[int], fan_in: int, fan_out: int, rng: Rng,
                   dtype=np.float32) -> np.ndarray:
    """Samples from U(-b, b) with b = sqrt(6 / (fan_in + fan_out))."""
    if fan_in < 1 or fan_out < 1:
        raise ParameterError("fan_in and fan_out must be >= 1")
    shape = tuple(int(d) for d in dims)
    if any(d < 1 for d in shape):
        raise ShapeError(f"all dims must be >= 1, got {shape}")
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, shape).astype(dtype)


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _same_shape(a, b)
    return a + b


def sub(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _same_shape(a, b)
    return a - b


def mul_scalar(a: np.ndarray, s: float) -> np.ndarray:
    return a * a.dtype.type(s)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0).astype(x.dtype, copy=False)


def relu_grad(x: np.ndarray, dy: np.ndarray) -> np.ndarray:
    return dy * (x > 0)


def elu(x: np.ndarray, alpha: float = 1.0) -> np.ndarray:
    neg = alpha * np.expm1(np.minimum(x, 0))
    return np.where(x >= 0, x, neg).astype(x.dtype, copy=False)


def elu_grad(x: np.ndarray, dy: np.ndarray, alpha: float = 1.0) -> np.ndarray:
    return dy * np.where(x >= 0, 1.0, alpha * np.exp(np.minimum(x, 0))).astype(dy.dtype)


def tsum(x: np.ndarray, axis=None):
    return np.sum(x, axis=axis, dtype=np.float64)


def tmean(x: np.ndarray, axis=None):
    return np.mean(x, axis=axis, dtype=np.float64)


def argmax_classes(logits: np.ndarray) -> np.ndarray:
    """Index of the largest logit per row; ties resolve to the lower class."""
    return np.argmax(logits.reshape(logits.shape[0], -1), axis=1)


# ---------------------------------------------------------------------------
# XTSR binary tensor format
#
#   b"XTSR" | u8 version=1 | u8 dtype | u8 rank | u8 pad | rank * u32 dims | data
#
# All integers little-endian; data is raw little-endian C-order.

XTSR_MAGIC = b"XTSR"
XTSR_VERSION = 1
_DTYPE_CODES = {np.dtype("<f4"): 0, np.dtype("<f8"): 1, np.dtype("u1"): 2}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


def encode_tensor(array: np.ndarray) -> bytes:
    arr = np.asarray(array)
    dt = arr.dtype.newbyteorder("<") if arr.dtype.itemsize > 1 else arr.dtype
    if dt not in _DTYPE_CODES:
        raise FormatError(f"XTSR cannot store dtype {arr.dtype}")
    if arr.ndim > 255:
        raise FormatError("rank too large")
    header = XTSR_MAGIC + struct.pack("<BBBx", XTSR_VERSION, _DTYPE_CODES[dt], arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + np.ascontiguousarray(arr, dtype=dt).tobytes()


def read_tensor_from(fh: BinaryIO) -> np.ndarray:
    head = fh.read(8)
    if len(head) < 8 or head[:4] != XTSR_MAGIC:
        raise FormatError("not an XTSR stream (bad magic)")
    version, code, rank = struct.unpack("<BBBx", head[4:])
    if version != XTSR_VERSION:
        raise FormatError(f"unsupported XTSR version {version}")
    if code not in _CODE_DTYPES:
        raise FormatError(f"unknown XTSR dtype code {code}")
    raw = fh.read(4 * rank)
    if len(raw) != 4 * rank:
        raise FormatError("truncated XTSR header")
    dims = struct.unpack(f"<{rank}I", raw)
    dt = _CODE_DTYPES[code]
    count = int(np.prod(dims, dtype=np.int64)) if rank else 1
    payload = fh.read(count * dt.itemsize)
    if len(payload) != count * dt.itemsize:
        raise FormatError("truncated XTSR payload")
    return np.frombuffer(payload, dtype=dt).reshape(dims).astype(dt.newbyteorder("="))


def decode_tensor(data: bytes) -> np.ndarray:
    return read_tensor_from(io.BytesIO(data))


def save_tensor(path, array: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_tensor(array))


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_tensor_from(fh)

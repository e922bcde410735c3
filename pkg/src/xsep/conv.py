"""Convolution kernels: regular, pointwise, depthwise, grouped and separable.

Every operator is a cross-correlation on (n, c, h, w) inputs with no bias.
Each comes as a forward function and a matching ``*_backward`` that returns
``(grad_input, grad_kernel)``.  ``conv2d_naive`` is the direct-loop oracle;
``conv2d_im2col`` is the fast path used for training.

Kernel layouts:

* regular ``(c_out, c_in, kh, kw)``
* depthwise ``(1, c_in * multiplier, kh, kw)``; filter plane ``j*m + k`` is
  the k-th filter applied to input channel j
* pointwise ``(c_out, c_in, 1, 1)``
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import GeometryError, ParameterError, ShapeError
from .tensor import elu, elu_grad, relu, relu_grad

SAME = "same"
VALID = "valid"


@dataclass(frozen=True)
class ConvGeometry:
    kernel: tuple[int, int] = (3, 3)
    stride: tuple[int, int] = (1, 1)
    padding: str = SAME

    def __post_init__(self):
        kh, kw = self.kernel
        sh, sw = self.stride
        if min(kh, kw, sh, sw) < 1:
            raise GeometryError(f"kernel and stride must be >= 1: {self}")
        if self.padding not in (SAME, VALID):
            raise GeometryError(f"padding must be 'same' or 'valid', got {self.padding!r}")

    @classmethod
    def square(cls, k: int, stride: int = 1, padding: str = SAME) -> "ConvGeometry":
        return cls((k, k), (stride, stride), padding)

    def output_hw(self, h: int, w: int) -> tuple[int, int]:
        return (_out_len(h, self.kernel[0], self.stride[0], self.padding),
                _out_len(w, self.kernel[1], self.stride[1], self.padding))

    def pads(self, h: int, w: int) -> tuple[tuple[int, int], tuple[int, int]]:
        """((top, bottom), (left, right)) zero padding for this input size."""
        return (_pad_amount(h, self.kernel[0], self.stride[0], self.padding),
                _pad_amount(w, self.kernel[1], self.stride[1], self.padding))


def _out_len(d: int, k: int, s: int, padding: str) -> int:
    if padding == SAME:
        out = -(-d // s)
    else:
        out = (d - k) // s + 1 if d >= k else 0
    if out < 1:
        raise GeometryError(f"output length < 1 for input {d}, kernel {k}, stride {s}, {padding}")
    return out


def _pad_amount(d: int, k: int, s: int, padding: str) -> tuple[int, int]:
    if padding == VALID:
        return (0, 0)
    out = -(-d // s)
    total = max((out - 1) * s + k - d, 0)
    return (total // 2, total - total // 2)


def pad_input(x: np.ndarray, geom: ConvGeometry, value: float = 0.0) -> np.ndarray:
    n, c, h, w = x.shape
    (pt, pb), (pl, pr) = geom.pads(h, w)
    if pt == pb == pl == pr == 0:
        return x
    xp = np.full((n, c, h + pt + pb, w + pl + pr), value, dtype=x.dtype)
    xp[:, :, pt:pt + h, pl:pl + w] = x
    return xp


def _unpad(dxp: np.ndarray, geom: ConvGeometry, h: int, w: int) -> np.ndarray:
    (pt, _), (pl, _) = geom.pads(h, w)
    return dxp[:, :, pt:pt + h, pl:pl + w]


def _window(xp: np.ndarray, ky: int, kx: int, geom: ConvGeometry, oh: int, ow: int) -> np.ndarray:
    sh, sw = geom.stride
    return xp[:, :, ky:ky + sh * (oh - 1) + 1:sh, kx:kx + sw * (ow - 1) + 1:sw]


def _check_conv(x: np.ndarray, kernel: np.ndarray, geom: ConvGeometry) -> None:
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError("input and kernel must be rank 4")
    if x.shape[1] != kernel.shape[1]:
        raise ShapeError(f"input has {x.shape[1]} channels, kernel expects {kernel.shape[1]}")
    if tuple(kernel.shape[2:]) != tuple(geom.kernel):
        raise ShapeError(f"kernel spatial dims {kernel.shape[2:]} disagree with geometry {geom.kernel}")


def _check_grad(dy: np.ndarray, expected: tuple) -> None:
    if dy.shape != tuple(expected):
        raise ShapeError(f"grad_output shape {dy.shape} != forward output shape {tuple(expected)}")


# ---------------------------------------------------------------------------
# regular convolution: direct oracle


def conv2d_naive(x: np.ndarray, kernel: np.ndarray, geom: ConvGeometry) -> np.ndarray:
    """Direct cross-correlation, one output pixel at a time."""
    _check_conv(x, kernel, geom)
    n, _, h, w = x.shape
    kh, kw = geom.kernel
    sh, sw = geom.stride
    oh, ow = geom.output_hw(h, w)
    xp = pad_input(x, geom)
    out = np.zeros((n, kernel.shape[0], oh, ow), dtype=np.result_type(x, kernel))
    for oy in range(oh):
        for ox in range(ow):
            patch = xp[:, :, oy * sh:oy * sh + kh, ox * sw:ox * sw + kw]
            out[:, :, oy, ox] = np.tensordot(patch, kernel, axes=([1, 2, 3], [1, 2, 3]))
    return out


def conv2d_naive_backward(x, kernel, geom: ConvGeometry, dy):
    _check_conv(x, kernel, geom)
    n, _, h, w = x.shape
    kh, kw = geom.kernel
    sh, sw = geom.stride
    oh, ow = geom.output_hw(h, w)
    _check_grad(dy, (n, kernel.shape[0], oh, ow))
    xp = pad_input(x, geom)
    dxp = np.zeros_like(xp)
    dk = np.zeros_like(kernel)
    for oy in range(oh):
        for ox in range(ow):
            ys, xs = oy * sh, ox * sw
            g = dy[:, :, oy, ox]
            dk += np.tensordot(g, xp[:, :, ys:ys + kh, xs:xs + kw], axes=(0, 0))
            dxp[:, :, ys:ys + kh, xs:xs + kw] += np.tensordot(g, kernel, axes=(1, 0))
    return _unpad(dxp, geom, h, w), dk


# ---------------------------------------------------------------------------
# regular convolution: im2col + GEMM


def im2col(x: np.ndarray, geom: ConvGeometry) -> tuple[np.ndarray, int, int]:
    """Patch matrix of shape (c*kh*kw, n*oh*ow), rows ordered (c, ky, kx)."""
    n, c, h, w = x.shape
    kh, kw = geom.kernel
    oh, ow = geom.output_hw(h, w)
    xp = pad_input(x, geom)
    cols = np.empty((c, kh, kw, n, oh, ow), dtype=x.dtype)
    for ky in range(kh):
        for kx in range(kw):
            cols[:, ky, kx] = _window(xp, ky, kx, geom, oh, ow).transpose(1, 0, 2, 3)
    return cols.reshape(c * kh * kw, n * oh * ow), oh, ow


def col2im(cols: np.ndarray, x_shape: tuple, geom: ConvGeometry) -> np.ndarray:
    n, c, h, w = x_shape
    kh, kw = geom.kernel
    sh, sw = geom.stride
    oh, ow = geom.output_hw(h, w)
    (pt, pb), (pl, pr) = geom.pads(h, w)
    dxp = np.zeros((n, c, h + pt + pb, w + pl + pr), dtype=cols.dtype)
    cols = cols.reshape(c, kh, kw, n, oh, ow)
    for ky in range(kh):
        for kx in range(kw):
            dxp[:, :, ky:ky + sh * (oh - 1) + 1:sh, kx:kx + sw * (ow - 1) + 1:sw] += \
                cols[:, ky, kx].transpose(1, 0, 2, 3)
    return _unpad(dxp, geom, h, w)


def conv2d_im2col(x: np.ndarray, kernel: np.ndarray, geom: ConvGeometry) -> np.ndarray:
    _check_conv(x, kernel, geom)
    if geom.kernel == (1, 1) and geom.stride == (1, 1):
        return pointwise_conv2d(x, kernel)
    cols, oh, ow = im2col(x, geom)
    out = kernel.reshape(kernel.shape[0], -1) @ cols
    return np.ascontiguousarray(out.reshape(kernel.shape[0], x.shape[0], oh, ow).transpose(1, 0, 2, 3))


def conv2d_im2col_backward(x, kernel, geom: ConvGeometry, dy):
    _check_conv(x, kernel, geom)
    n = x.shape[0]
    oh, ow = geom.output_hw(x.shape[2], x.shape[3])
    _check_grad(dy, (n, kernel.shape[0], oh, ow))
    if geom.kernel == (1, 1) and geom.stride == (1, 1):
        return pointwise_conv2d_backward(x, kernel, dy)
    cols, _, _ = im2col(x, geom)
    dy2 = dy.transpose(1, 0, 2, 3).reshape(kernel.shape[0], -1)
    dk = (dy2 @ cols.T).reshape(kernel.shape)
    dcols = kernel.reshape(kernel.shape[0], -1).T @ dy2
    return col2im(dcols, x.shape, geom), dk


conv2d = conv2d_im2col
conv2d_backward = conv2d_im2col_backward


# ---------------------------------------------------------------------------
# pointwise (1x1, stride 1)


def pointwise_conv2d(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    if kernel.shape[2:] != (1, 1) or kernel.shape[1] != x.shape[1]:
        raise ShapeError(f"pointwise kernel {kernel.shape} incompatible with input {x.shape}")
    n, c, h, w = x.shape
    out = np.matmul(kernel.reshape(kernel.shape[0], c), x.reshape(n, c, h * w))
    return out.reshape(n, kernel.shape[0], h, w)


def pointwise_conv2d_backward(x, kernel, dy):
    n, c, h, w = x.shape
    cout = kernel.shape[0]
    _check_grad(dy, (n, cout, h, w))
    w2 = kernel.reshape(cout, c)
    dy3 = dy.reshape(n, cout, h * w)
    dk = np.tensordot(dy3, x.reshape(n, c, h * w), axes=([0, 2], [0, 2]))
    dx = np.matmul(w2.T, dy3).reshape(x.shape)
    return dx, dk.reshape(kernel.shape).astype(kernel.dtype, copy=False)


# ---------------------------------------------------------------------------
# depthwise


def _check_depthwise(x, kernel, geom, multiplier):
    if multiplier < 1:
        raise ParameterError(f"depth multiplier must be >= 1, got {multiplier}")
    if kernel.ndim != 4 or kernel.shape[0] != 1:
        raise ShapeError(f"depthwise kernel must be (1, c*m, kh, kw), got {kernel.shape}")
    if kernel.shape[1] != x.shape[1] * multiplier:
        raise ShapeError(f"depthwise kernel has {kernel.shape[1]} planes, expected "
                         f"{x.shape[1]} x {multiplier}")
    if tuple(kernel.shape[2:]) != tuple(geom.kernel):
        raise ShapeError("depthwise kernel spatial dims disagree with geometry")


# Small feature maps run channels-last internally: the innermost axis is
# then the (long) channel axis instead of a 2-4 element row.
_CHANNELS_LAST_MAX_W = 9


def _slices(ky: int, kx: int, geom: ConvGeometry, oh: int, ow: int):
    sh, sw = geom.stride
    return slice(ky, ky + sh * (oh - 1) + 1, sh), slice(kx, kx + sw * (ow - 1) + 1, sw)


def depthwise_conv2d(x: np.ndarray, kernel: np.ndarray, geom: ConvGeometry,
                     multiplier: int = 1) -> np.ndarray:
    _check_depthwise(x, kernel, geom, multiplier)
    n, c, h, w = x.shape
    oh, ow = geom.output_hw(h, w)
    xp = pad_input(x, geom)
    if multiplier > 1:
        xp = np.repeat(xp, multiplier, axis=1)
    k = kernel[0]
    dtype = np.result_type(x, kernel)
    if ow <= _CHANNELS_LAST_MAX_W:
        xt = np.ascontiguousarray(xp.transpose(0, 2, 3, 1))
        out = np.zeros((n, oh, ow, c * multiplier), dtype=dtype)
        for ky in range(geom.kernel[0]):
            for kx in range(geom.kernel[1]):
                ys, xs = _slices(ky, kx, geom, oh, ow)
                out += xt[:, ys, xs, :] * k[:, ky, kx]
        return np.ascontiguousarray(out.transpose(0, 3, 1, 2))
    out = np.zeros((n, c * multiplier, oh, ow), dtype=dtype)
    for ky in range(geom.kernel[0]):
        for kx in range(geom.kernel[1]):
            out += _window(xp, ky, kx, geom, oh, ow) * k[:, ky, kx][None, :, None, None]
    return out


def depthwise_conv2d_backward(x, kernel, geom: ConvGeometry, dy, multiplier: int = 1):
    _check_depthwise(x, kernel, geom, multiplier)
    n, c, h, w = x.shape
    oh, ow = geom.output_hw(h, w)
    _check_grad(dy, (n, c * multiplier, oh, ow))
    xp = pad_input(x, geom)
    if multiplier > 1:
        xp = np.repeat(xp, multiplier, axis=1)
    k = kernel[0]
    dk = np.zeros_like(kernel)
    if ow <= _CHANNELS_LAST_MAX_W:
        xt = np.ascontiguousarray(xp.transpose(0, 2, 3, 1))
        dyt = np.ascontiguousarray(dy.transpose(0, 2, 3, 1))
        dxt = np.zeros(xt.shape, dtype=dy.dtype)
        for ky in range(geom.kernel[0]):
            for kx in range(geom.kernel[1]):
                ys, xs = _slices(ky, kx, geom, oh, ow)
                dk[0, :, ky, kx] = np.einsum("nhwc,nhwc->c", dyt, xt[:, ys, xs, :])
                dxt[:, ys, xs, :] += dyt * k[:, ky, kx]
        dxp = dxt.transpose(0, 3, 1, 2)
    else:
        dxp = np.zeros(xp.shape, dtype=dy.dtype)
        for ky in range(geom.kernel[0]):
            for kx in range(geom.kernel[1]):
                ys, xs = _slices(ky, kx, geom, oh, ow)
                dk[0, :, ky, kx] = np.einsum("nchw,nchw->c", dy, xp[:, :, ys, xs])
                dxp[:, :, ys, xs] += dy * k[:, ky, kx][None, :, None, None]
    if multiplier > 1:
        dxp = dxp.reshape(n, c, multiplier, *dxp.shape[2:]).sum(axis=2)
    return np.ascontiguousarray(_unpad(dxp, geom, h, w)), dk


def depthwise_conv2d_naive(x, kernel, geom: ConvGeometry, multiplier: int = 1):
    """Depthwise oracle: conv2d_naive on each single-channel slice."""
    _check_depthwise(x, kernel, geom, multiplier)
    outs = []
    for j in range(x.shape[1]):
        planes = kernel[0, j * multiplier:(j + 1) * multiplier][:, None]
        outs.append(conv2d_naive(x[:, j:j + 1], planes, geom))
    return np.concatenate(outs, axis=1)


# ---------------------------------------------------------------------------
# depthwise separable


ACTIVATIONS = ("none", "relu", "elu")


def _check_activation(name: str) -> None:
    if name not in ACTIVATIONS:
        raise ParameterError(f"intermediate activation must be one of {ACTIVATIONS}, got {name!r}")


def separable_conv2d(x, depthwise_kernel, pointwise_kernel, geom: ConvGeometry,
                     multiplier: int = 1, activation: str = "none"):
    """pointwise(activation(depthwise(x)))."""
    _check_activation(activation)
    mid = depthwise_conv2d(x, depthwise_kernel, geom, multiplier)
    if activation == "relu":
        mid = relu(mid)
    elif activation == "elu":
        mid = elu(mid)
    return pointwise_conv2d(mid, pointwise_kernel)


def separable_conv2d_backward(x, depthwise_kernel, pointwise_kernel, geom: ConvGeometry, dy,
                              multiplier: int = 1, activation: str = "none"):
    """Returns (grad_input, grad_depthwise, grad_pointwise)."""
    _check_activation(activation)
    pre = depthwise_conv2d(x, depthwise_kernel, geom, multiplier)
    if activation == "relu":
        mid = relu(pre)
    elif activation == "elu":
        mid = elu(pre)
    else:
        mid = pre
    dmid, dpw = pointwise_conv2d_backward(mid, pointwise_kernel, dy)
    if activation == "relu":
        dmid = relu_grad(pre, dmid)
    elif activation == "elu":
        dmid = elu_grad(pre, dmid)
    dx, ddw = depthwise_conv2d_backward(x, depthwise_kernel, geom, dmid, multiplier)
    return dx, ddw, dpw


def separable_param_count(c_in: int, c_out: int, kh: int, kw: int, multiplier: int = 1) -> int:
    return c_in * multiplier * kh * kw + c_in * multiplier * c_out


# ---------------------------------------------------------------------------
# grouped spatial convolution and the segment spectrum


def _split_points(kernels: Sequence[np.ndarray]) -> list[int]:
    points, acc = [], 0
    for k in kernels:
        acc += k.shape[1]
        points.append(acc)
    return points


def grouped_conv2d(x: np.ndarray, kernels: Sequence[np.ndarray], geom: ConvGeometry,
                   naive: bool = False) -> np.ndarray:
    """Independent convolutions over contiguous channel segments.

    Segment i spans as many input channels as ``kernels[i].shape[1]``;
    the outputs are concatenated in order.  Segments may differ in size.
    """
    points = _split_points(kernels)
    if points[-1] != x.shape[1]:
        raise ShapeError(f"segments cover {points[-1]} channels, input has {x.shape[1]}")
    fn = conv2d_naive if naive else conv2d_im2col
    starts = [0] + points[:-1]
    return np.concatenate([fn(x[:, a:b], k, geom) for a, b, k in zip(starts, points, kernels)], axis=1)


def grouped_conv2d_backward(x, kernels: Sequence[np.ndarray], geom: ConvGeometry, dy):
    """Returns (grad_input, [grad_kernel per segment])."""
    points = _split_points(kernels)
    starts = [0] + points[:-1]
    out_points = np.cumsum([k.shape[0] for k in kernels])
    out_starts = [0] + list(out_points[:-1])
    oh, ow = geom.output_hw(x.shape[2], x.shape[3])
    _check_grad(dy, (x.shape[0], int(out_points[-1]), oh, ow))
    dx = np.empty_like(x, dtype=dy.dtype)
    dks = []
    for a, b, oa, ob, k in zip(starts, points, out_starts, out_points, kernels):
        dxi, dki = conv2d_im2col_backward(x[:, a:b], k, geom, dy[:, oa:ob])
        dx[:, a:b] = dxi
        dks.append(dki)
    return dx, dks


def split_segments(spatial_kernels: np.ndarray, segments: int) -> list[np.ndarray]:
    """Split a stacked (M, M/g, kh, kw) spatial kernel into g blocks."""
    m = spatial_kernels.shape[0]
    if segments < 1 or m % segments:
        raise ParameterError(f"segments={segments} must divide {m} channels")
    if spatial_kernels.shape[1] != m // segments:
        raise ShapeError(f"stacked spatial kernel must be (M, M/g, kh, kw), got {spatial_kernels.shape}")
    return list(np.split(spatial_kernels, segments, axis=0))


def segment_spectrum_conv(x: np.ndarray, pointwise_kernel: np.ndarray, spatial_kernels: np.ndarray,
                          segments: int, geom: ConvGeometry, naive: bool = False) -> np.ndarray:
    """1x1 convolution to M channels, then g independent spatial convolutions.

    ``spatial_kernels`` is the stacked (M, M/g, kh, kw) tensor whose block
    ``i`` (rows i*M/g .. (i+1)*M/g) maps segment i onto itself.  g=1 is a
    regular convolution after the 1x1; g=M puts one spatial filter on every
    channel.
    """
    blocks = split_segments(spatial_kernels, segments)
    if pointwise_kernel.shape[0] != spatial_kernels.shape[0]:
        raise ShapeError("pointwise output channels must equal M")
    mid = pointwise_conv2d(x, pointwise_kernel)
    return grouped_conv2d(mid, blocks, geom, naive=naive)


def segment_spectrum_conv_backward(x, pointwise_kernel, spatial_kernels, segments: int,
                                   geom: ConvGeometry, dy):
    """Returns (grad_input, grad_pointwise, grad_spatial_stacked)."""
    blocks = split_segments(spatial_kernels, segments)
    mid = pointwise_conv2d(x, pointwise_kernel)
    dmid, dks = grouped_conv2d_backward(mid, blocks, geom, dy)
    dx, dpw = pointwise_conv2d_backward(x, pointwise_kernel, dmid)
    return dx, dpw, np.concatenate(dks, axis=0)


def spectrum_spatial_param_count(m: int, segments: int, kh: int = 3, kw: int = 3) -> int:
    if m % segments:
        raise ParameterError(f"segments={segments} must divide {m}")
    return segments * (m // segments) ** 2 * kh * kw


def conv_macs(c_in: int, c_out: int, kh: int, kw: int, oh: int, ow: int, groups: int = 1) -> int:
    return oh * ow * (c_in // groups) * kh * kw * c_out


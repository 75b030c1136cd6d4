# purpose: primitive differentiable operations
# Every operation computes its forward result with numpy and registers a
# backward rule through tensor.record.

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from medsamca.autodiff.tensor import Tensor
from medsamca.autodiff.tensor import as_tensor
from medsamca.autodiff.tensor import note_branch
from medsamca.autodiff.tensor import record
from medsamca.errors import ConfigurationError
from medsamca.errors import DimensionError


def _pair(a, b):
    "Promote python scalars / arrays to tensors of the partner's dtype"
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    else:
        a, b = as_tensor(a), as_tensor(b)
    return a, b


def _broadcastShape(a: Tensor, b: Tensor, opName: str):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(
            "{0}: shapes {1} and {2} do not broadcast".format(
                opName, a.shape, b.shape))


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    "Sum a gradient back down to the shape of a broadcast operand"
    if grad.shape == shape:
        return grad
    lead = grad.ndim - len(shape)
    if lead > 0:
        grad = grad.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, dim in enumerate(shape)
                 if dim == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _normAxes(axis, ndim: int) -> tuple:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcastShape(a, b, "add")

    def backwardFn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
    return record(a.data + b.data, (a, b), backwardFn, "add")


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcastShape(a, b, "sub")

    def backwardFn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)
    return record(a.data - b.data, (a, b), backwardFn, "sub")


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcastShape(a, b, "mul")

    def backwardFn(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb
    return record(a.data * b.data, (a, b), backwardFn, "mul")


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcastShape(a, b, "div")
    out = a.data / b.data

    def backwardFn(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = None
        if b.requires_grad:
            gb = _unbroadcast(-g * out / b.data, b.shape)
        return ga, gb
    return record(out, (a, b), backwardFn, "div")


def relu(x) -> Tensor:
    x = as_tensor(x)
    positive = x.data > 0
    note_branch(positive)

    def backwardFn(g):
        return (g * positive,)
    return record(np.where(positive, x.data, 0).astype(x.dtype), (x,),
                  backwardFn, "relu")


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    s = expit(x.data)

    def backwardFn(g):
        return (g * s * (1 - s),)
    return record(s, (x,), backwardFn, "sigmoid")


def bce_with_logits(logits, target) -> Tensor:
    """Elementwise max(z,0) - z*y + log(1 + exp(-|z|)); the target is a
    constant"""
    z = as_tensor(logits)
    y = np.asarray(target.data if isinstance(target, Tensor) else target,
                   dtype=z.dtype)
    if y.shape != z.shape:
        raise DimensionError(
            "bce: logits shape {0} does not match target shape {1}".format(
                z.shape, y.shape))
    out = np.maximum(z.data, 0) - z.data * y + np.log1p(np.exp(-np.abs(z.data)))

    def backwardFn(g):
        return (g * (expit(z.data) - y),)
    return record(out, (z,), backwardFn, "bce_with_logits")


# shape manipulation


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    shape = tuple(int(s) for s in shape)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise DimensionError(
            "cannot reshape {0} into {1}".format(x.shape, shape))

    def backwardFn(g):
        return (g.reshape(x.shape),)
    return record(out, (x,), backwardFn, "reshape")


def transpose(x, axes=()) -> Tensor:
    x = as_tensor(x)
    if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
        axes = tuple(axes[0])
    if not axes:
        axes = tuple(reversed(range(x.ndim)))
    if sorted(axes) != list(range(x.ndim)):
        raise DimensionError(
            "axes {0} are not a permutation for ndim {1}".format(axes, x.ndim))
    inverse = tuple(np.argsort(axes))

    def backwardFn(g):
        return (g.transpose(inverse),)
    return record(x.data.transpose(axes), (x,), backwardFn, "transpose")


def concat(tensors, axis: int) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    first = tensors[0]
    axis = axis % first.ndim
    for t in tensors[1:]:
        if t.ndim != first.ndim or any(
                t.shape[i] != first.shape[i]
                for i in range(first.ndim) if i != axis):
            raise DimensionError(
                "concat: shape {0} does not match {1} outside axis {2}".format(
                    t.shape, first.shape, axis))
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backwardFn(g):
        return tuple(np.split(g, splits, axis=axis))
    return record(np.concatenate([t.data for t in tensors], axis=axis),
                  tuple(tensors), backwardFn, "concat")


def concat_channels(tensors) -> Tensor:
    "Concatenate [N,C,H,W] tensors along the channel axis"
    return concat(tensors, axis=1)


def pad(x, padding) -> Tensor:
    "Zero pad the two spatial axes of a [N,C,H,W] tensor"
    x = as_tensor(x)
    if isinstance(padding, int):
        padding = (padding, padding, padding, padding)
    top, bottom, left, right = padding
    if min(padding) < 0:
        raise ConfigurationError("negative padding {0}".format(padding))
    out = np.pad(x.data, ((0, 0), (0, 0), (top, bottom), (left, right)))
    h, w = x.shape[2], x.shape[3]

    def backwardFn(g):
        return (g[:, :, top:top + h, left:left + w],)
    return record(out, (x,), backwardFn, "pad")


# reductions


def sum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _normAxes(axis, x.ndim)

    def backwardFn(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)
    return record(np.asarray(x.data.sum(axis=axes, keepdims=keepdims)),
                  (x,), backwardFn, "sum")


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _normAxes(axis, x.ndim)
    count = 1
    for a in axes:
        count *= x.shape[a]
    if count == 0:
        raise DimensionError("mean over an empty axis of {0}".format(x.shape))

    def backwardFn(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, x.shape).copy(),)
    return record(np.asarray(x.data.mean(axis=axes, keepdims=keepdims)),
                  (x,), backwardFn, "mean")


def max_reduce(x, axis: int, keepdims: bool = False) -> Tensor:
    "Maximum along one axis; gradient goes to the first maximal element"
    x = as_tensor(x)
    axis = axis % x.ndim
    if x.shape[axis] == 0:
        raise DimensionError("max over an empty axis of {0}".format(x.shape))
    idx = np.expand_dims(np.argmax(x.data, axis=axis), axis)
    note_branch(idx)
    out = np.take_along_axis(x.data, idx, axis)

    def backwardFn(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, idx, g, axis)
        return (gx,)
    if not keepdims:
        out = np.squeeze(out, axis)
    return record(out, (x,), backwardFn, "max")


def global_avg_pool(x) -> Tensor:
    "[N,C,H,W] -> [N,C,1,1] spatial mean"
    x = as_tensor(x)
    _require4d(x, "global_avg_pool")
    return mean(x, axis=(2, 3), keepdims=True)


def global_max_pool(x) -> Tensor:
    "[N,C,H,W] -> [N,C,1,1] spatial maximum"
    x = as_tensor(x)
    _require4d(x, "global_max_pool")
    n, c, h, w = x.shape
    flat = reshape(x, (n, c, h * w))
    return reshape(max_reduce(flat, axis=2, keepdims=True), (n, c, 1, 1))


# linear algebra and normalisation


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(
            "matmul: shapes {0} and {1} are not aligned".format(
                a.shape, b.shape))
    out = np.matmul(a.data, b.data)

    def backwardFn(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)),
                              a.shape)
        if b.requires_grad:
            if b.ndim == 2:
                k, m = b.shape
                gb = a.data.reshape(-1, k).T @ g.reshape(-1, m)
            else:
                gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g),
                                  b.shape)
        return ga, gb
    return record(out, (a, b), backwardFn, "matmul")


def softmax_lastdim(x) -> Tensor:
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise DimensionError("softmax over a zero-length axis")
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def backwardFn(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)
    return record(y, (x,), backwardFn, "softmax")


def layernorm_lastdim(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    "Normalise over the final axis, then scale by gamma and shift by beta"
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise DimensionError("layernorm over a zero-length axis")
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise DimensionError(
            "layernorm: scale/shift shapes {0}/{1} do not match {2}".format(
                gamma.shape, beta.shape, d))
    centred = x.data - x.data.mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt((centred ** 2).mean(axis=-1, keepdims=True) + eps)
    xhat = centred * inv

    def backwardFn(g):
        gx = ggamma = gbeta = None
        if gamma.requires_grad:
            ggamma = (g * xhat).reshape(-1, d).sum(axis=0)
        if beta.requires_grad:
            gbeta = g.reshape(-1, d).sum(axis=0)
        if x.requires_grad:
            gxhat = g * gamma.data
            gx = inv * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                        - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        return gx, ggamma, gbeta
    return record(xhat * gamma.data + beta.data, (x, gamma, beta),
                  backwardFn, "layernorm")


# spatial operations


def _require4d(x: Tensor, opName: str):
    if x.ndim != 4:
        raise DimensionError(
            "{0} needs a [N,C,H,W] tensor, got {1}".format(opName, x.shape))


def conv2d(x, weight, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    "2-D cross-correlation of [N,C,H,W] with [O,C,kh,kw] (no kernel flip)"
    x, weight = as_tensor(x), as_tensor(weight)
    _require4d(x, "conv2d")
    if weight.ndim != 4:
        raise DimensionError("conv2d weight must be [O,C,kh,kw]")
    n, c, h, w = x.shape
    o, cw, kh, kw = weight.shape
    if c != cw:
        raise DimensionError(
            "conv2d input has {0} channels, weight expects {1}".format(c, cw))
    if kh % 2 == 0 or kw % 2 == 0:
        raise DimensionError(
            "conv2d kernel {0}x{1} is not odd".format(kh, kw))
    if stride < 1 or padding < 0:
        raise ConfigurationError(
            "conv2d stride {0} / padding {1} invalid".format(stride, padding))
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise DimensionError(
            "conv2d output would be empty for input {0}".format(x.shape))
    xp = x.data
    if padding:
        xp = np.pad(xp, ((0, 0), (0, 0), (padding, padding),
                         (padding, padding)))
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride][:, :, :ho, :wo]
    out = np.tensordot(windows, weight.data, axes=([1, 4, 5], [1, 2, 3]))
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))
    inputs = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (o,):
            raise DimensionError(
                "conv2d bias shape {0} != ({1},)".format(bias.shape, o))
        out = out + bias.data.reshape(1, o, 1, 1)
        inputs = (x, weight, bias)

    def backwardFn(g):
        gx = gw = None
        if weight.requires_grad:
            gw = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3]))
        if x.requires_grad:
            cols = np.tensordot(g, weight.data, axes=([1], [0]))
            gxp = np.zeros(xp.shape, dtype=xp.dtype)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + stride * ho:stride,
                        j:j + stride * wo:stride] += \
                        cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            gx = gxp
            if padding:
                gx = gxp[:, :, padding:padding + h, padding:padding + w]
        if bias is None:
            return gx, gw
        gb = g.sum(axis=(0, 2, 3)) if bias.requires_grad else None
        return gx, gw, gb
    return record(out, inputs, backwardFn, "conv2d")


def max_pool2d(x, kernel: int = 2, stride: int = 2) -> Tensor:
    "Non-overlapping max pooling; ties go to the first element in row-major order"
    x = as_tensor(x)
    _require4d(x, "max_pool2d")
    if kernel != stride:
        raise ConfigurationError("max_pool2d supports kernel == stride only")
    n, c, h, w = x.shape
    if h % kernel or w % kernel:
        raise DimensionError(
            "max_pool2d: {0}x{1} not divisible by {2}".format(h, w, kernel))
    ho, wo = h // kernel, w // kernel
    win = x.data.reshape(n, c, ho, kernel, wo, kernel)
    win = win.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, kernel * kernel)
    idx = np.argmax(win, axis=-1)[..., None]
    note_branch(idx)
    out = np.take_along_axis(win, idx, -1)[..., 0]

    def backwardFn(g):
        gw = np.zeros(win.shape, dtype=x.dtype)
        np.put_along_axis(gw, idx, g[..., None], -1)
        gw = gw.reshape(n, c, ho, wo, kernel, kernel).transpose(0, 1, 2, 4, 3, 5)
        return (gw.reshape(n, c, h, w),)
    return record(out, (x,), backwardFn, "max_pool2d")


def upsample_nearest2x(x) -> Tensor:
    x = as_tensor(x)
    _require4d(x, "upsample_nearest2x")
    n, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def backwardFn(g):
        return (g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),)
    return record(out, (x,), backwardFn, "upsample_nearest2x")

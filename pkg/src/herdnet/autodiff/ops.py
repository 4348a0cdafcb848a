"""Differentiable operators for the activity-recognition network.

The set is deliberately small: exactly what the trunk, the per-species
branches, the batch-norm layers and the focal loss need. Convolution
dispatches to the selected kernel backend; everything else is plain numpy.

Temporal feature maps carry a dummy height axis, i.e. a single window is
(channels, 1, width) and a batch is (batch, channels, 1, width); the
convolution, pooling and batch-norm operators accept both forms.
"""

from __future__ import annotations

from typing import Optional, Tuple

import numpy as np

from . import kernels
from .tensor import Tensor


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return Tensor._from_op(out, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return Tensor._from_op(out, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def backward(g):
        return (_unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape))

    return Tensor._from_op(out, (a, b), backward, "mul")


def neg(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        return (-g,)

    return Tensor._from_op(-a.data, (a,), backward, "neg")


def power(a, exponent: float) -> Tensor:
    """Elementwise a**exponent for a constant exponent (base >= 0 expected)."""
    a = as_tensor(a)
    exponent = float(exponent)
    out = a.data ** exponent

    def backward(g):
        if exponent == 0.0:
            return (np.zeros_like(a.data),)
        return (g * exponent * a.data ** (exponent - 1.0),)

    return Tensor._from_op(out, (a,), backward, "power")


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)

    def backward(g):
        return (g * out,)

    return Tensor._from_op(out, (a,), backward, "exp")


def relu(a) -> Tensor:
    a = as_tensor(a)
    out = np.maximum(a.data, 0.0)

    def backward(g):
        return (g * (a.data > 0.0),)

    return Tensor._from_op(out, (a,), backward, "relu")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)

    def backward(g):
        return (g * (1.0 - out * out),)

    return Tensor._from_op(out, (a,), backward, "tanh")


def sum_all(a) -> Tensor:
    a = as_tensor(a)
    out = np.asarray(a.data.sum())

    def backward(g):
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return Tensor._from_op(out, (a,), backward, "sum_all")


def mean_all(a) -> Tensor:
    a = as_tensor(a)
    out = np.asarray(a.data.mean())
    n = a.data.size

    def backward(g):
        return (np.broadcast_to(g / n, a.data.shape).copy(),)

    return Tensor._from_op(out, (a,), backward, "mean_all")


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(f"matmul expects two matrices, got shapes {a.shape} and {b.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    out = a.data @ b.data

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return Tensor._from_op(out, (a, b), backward, "matmul")


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    shape = tuple(int(s) for s in shape)
    out = a.data.reshape(shape)

    def backward(g):
        return (g.reshape(a.data.shape),)

    return Tensor._from_op(out, (a,), backward, "reshape")


def gather_rows(a, index) -> Tensor:
    """Pick one entry per row: out[i] = a[i, index[i]]."""
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ValueError(f"gather_rows expects a matrix, got shape {a.shape}")
    idx = np.asarray(index, dtype=np.intp)
    rows, cols = a.data.shape
    if idx.shape != (rows,):
        raise ValueError(f"gather_rows index shape {idx.shape} does not match {rows} rows")
    if idx.size and (idx.min() < 0 or idx.max() >= cols):
        raise ValueError(f"gather_rows index out of range [0, {cols})")
    out = a.data[np.arange(rows), idx]

    def backward(g):
        ga = np.zeros_like(a.data)
        ga[np.arange(rows), idx] = g
        return (ga,)

    return Tensor._from_op(out, (a,), backward, "gather_rows")


def _as_batched_cw(data: np.ndarray, op: str) -> Tuple[np.ndarray, bool]:
    """Lift (c, 1, w) or (b, c, 1, w) to (b, c, w); returns (view, was_single)."""
    if data.ndim == 3:
        c, h, w = data.shape
        if h != 1:
            raise ValueError(f"{op}: expected height 1, got input shape {data.shape}")
        return data.reshape(1, c, w), True
    if data.ndim == 4:
        b, c, h, w = data.shape
        if h != 1:
            raise ValueError(f"{op}: expected height 1, got input shape {data.shape}")
        return data.reshape(b, c, w), False
    raise ValueError(f"{op}: expected (c, 1, w) or (b, c, 1, w), got shape {data.shape}")


def conv1x3(x, weight, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """Temporal cross-correlation with a 1x3 kernel.

    ``weight`` is (c_out, 3, 1, c_in); output width is
    floor((w + 2*padding - 3) / stride) + 1.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    stride, padding = int(stride), int(padding)
    if stride < 1 or padding < 0:
        raise ValueError(f"conv1x3: invalid stride={stride} or padding={padding}")
    if weight.data.ndim != 4 or weight.data.shape[1] != 3 or weight.data.shape[2] != 1:
        raise ValueError(f"conv1x3: kernel must be (c_out, 3, 1, c_in), got {weight.shape}")
    xs, single = _as_batched_cw(x.data, "conv1x3")
    b, c, w = xs.shape
    c_out, _, _, c_in = weight.data.shape
    if c_in != c:
        raise ValueError(
            f"conv1x3: input has {c} channels but kernel expects {c_in} "
            f"(input {x.shape}, kernel {weight.shape})")
    if w + 2 * padding < 3:
        raise ValueError(f"conv1x3: width {w} with padding {padding} is shorter than the kernel")
    if bias is not None:
        bias = as_tensor(bias)
        if bias.data.shape != (c_out,):
            raise ValueError(f"conv1x3: bias shape {bias.shape} != ({c_out},)")

    # kernel as (c_out, c_in, 3) for the backends
    wk = np.ascontiguousarray(weight.data.reshape(c_out, 3, c_in).transpose(0, 2, 1))
    xp = np.pad(xs, ((0, 0), (0, 0), (padding, padding))) if padding else np.ascontiguousarray(xs)
    y = kernels.conv1x3_fwd(xp, wk, stride)
    if bias is not None:
        y = y + bias.data.reshape(1, -1, 1)
    w_out = y.shape[2]
    out = y.reshape(c_out, 1, w_out) if single else y.reshape(b, c_out, 1, w_out)

    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        gy = np.ascontiguousarray(g.reshape(b, c_out, w_out))
        gxp = kernels.conv1x3_bwd_input(gy, wk, stride, xp.shape[2])
        gx = gxp[:, :, padding:padding + w] if padding else gxp
        gwk = kernels.conv1x3_bwd_weight(gy, xp, stride)
        gw = gwk.transpose(0, 2, 1).reshape(weight.data.shape)
        grads = [gx.reshape(x.data.shape), gw]
        if bias is not None:
            grads.append(gy.sum(axis=(0, 2)))
        return grads

    return Tensor._from_op(out, parents, backward, "conv1x3")


def maxpool1d(x, window: int, stride: int) -> Tensor:
    """Temporal max pooling; ties route to the lowest index."""
    x = as_tensor(x)
    window, stride = int(window), int(stride)
    if window < 1 or stride < 1:
        raise ValueError(f"maxpool1d: invalid window={window} or stride={stride}")
    xs, single = _as_batched_cw(x.data, "maxpool1d")
    b, c, w = xs.shape
    if window > w:
        raise ValueError(f"maxpool1d: window {window} exceeds input width {w}")
    w_out = (w - window) // stride + 1
    starts = np.arange(w_out) * stride
    idx = starts[:, None] + np.arange(window)[None, :]
    patches = xs[:, :, idx]                                  # (b, c, w_out, window)
    arg = patches.argmax(axis=-1)                            # first max wins ties
    y = np.take_along_axis(patches, arg[..., None], axis=-1)[..., 0]
    out = y.reshape(c, 1, w_out) if single else y.reshape(b, c, 1, w_out)
    pos = starts[None, None, :] + arg                        # (b, c, w_out)

    def backward(g):
        gy = g.reshape(b, c, w_out)
        gx = np.zeros_like(xs)
        bi = np.arange(b)[:, None, None]
        ci = np.arange(c)[None, :, None]
        np.add.at(gx, (bi, ci, pos), gy)
        return (gx.reshape(x.data.shape),)

    return Tensor._from_op(out, (x,), backward, "maxpool1d")


def global_avg_pool(x) -> Tensor:
    """Per-channel temporal mean: (c, 1, w) -> (c,) or (b, c, 1, w) -> (b, c)."""
    x = as_tensor(x)
    xs, single = _as_batched_cw(x.data, "global_avg_pool")
    b, c, w = xs.shape
    y = xs.mean(axis=2)

    def backward(g):
        gx = np.repeat(g.reshape(b, c, 1) / w, w, axis=2)
        return (gx.reshape(x.data.shape),)

    return Tensor._from_op(y.reshape(c) if single else y, (x,), backward, "global_avg_pool")


def linear(x, weight, bias=None) -> Tensor:
    """Affine map: (n,) -> (m,) or (b, n) -> (b, m) with weight (m, n)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if weight.data.ndim != 2:
        raise ValueError(f"linear: weight must be a matrix, got {weight.shape}")
    m, n = weight.data.shape
    single = x.data.ndim == 1
    if x.data.ndim not in (1, 2) or x.data.shape[-1] != n:
        raise ValueError(f"linear: input shape {x.shape} incompatible with weight {weight.shape}")
    if bias is not None:
        bias = as_tensor(bias)
        if bias.data.shape != (m,):
            raise ValueError(f"linear: bias shape {bias.shape} != ({m},)")
    x2 = x.data.reshape(1, n) if single else x.data
    y = x2 @ weight.data.T
    if bias is not None:
        y = y + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        g2 = g.reshape(1, m) if single else g
        grads = [(g2 @ weight.data).reshape(x.data.shape), g2.T @ x2]
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return grads

    return Tensor._from_op(y[0] if single else y, parents, backward, "linear")


def log_softmax(x) -> Tensor:
    """Row-wise numerically stable log-softmax over the last axis."""
    x = as_tensor(x)
    if x.data.ndim not in (1, 2):
        raise ValueError(f"log_softmax: expected vector or matrix, got shape {x.shape}")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))

    def backward(g):
        soft = np.exp(out)
        return (g - soft * g.sum(axis=-1, keepdims=True),)

    return Tensor._from_op(out, (x,), backward, "log_softmax")


def batch_norm_train(x, gamma, beta, eps: float) -> Tuple[Tensor, np.ndarray, np.ndarray]:
    """Batch normalization using the batch's own statistics.

    Normalizes per channel over the batch (and temporal) axes, then applies
    the trainable affine. Returns the output plus the biased batch mean and
    variance so the caller can maintain running statistics.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.data.ndim == 2:
        axes, n = (0,), x.data.shape[0]
        bshape = (1, x.data.shape[1])
    elif x.data.ndim == 4 and x.data.shape[2] == 1:
        axes, n = (0, 2, 3), x.data.shape[0] * x.data.shape[3]
        bshape = (1, x.data.shape[1], 1, 1)
    else:
        raise ValueError(f"batch_norm: expected (b, c) or (b, c, 1, w), got shape {x.shape}")
    c = x.data.shape[1]
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ValueError(f"batch_norm: affine shapes {gamma.shape}/{beta.shape} != ({c},)")

    mu = x.data.mean(axis=axes)
    xc = x.data - mu.reshape(bshape)
    var = (xc * xc).mean(axis=axes)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv.reshape(bshape)
    out = gamma.data.reshape(bshape) * xhat + beta.data.reshape(bshape)

    def backward(g):
        gbeta = g.sum(axis=axes)
        ggamma = (g * xhat).sum(axis=axes)
        gh = g * gamma.data.reshape(bshape)
        gh_sum = gh.sum(axis=axes).reshape(bshape)
        ghx_sum = (gh * xhat).sum(axis=axes).reshape(bshape)
        gx = inv.reshape(bshape) / n * (n * gh - gh_sum - xhat * ghx_sum)
        return gx, ggamma, gbeta

    out_t = Tensor._from_op(out, (x, gamma, beta), backward, "batch_norm")
    return out_t, mu, var


# arithmetic sugar
Tensor.__add__ = add
Tensor.__radd__ = add
Tensor.__sub__ = sub
Tensor.__rsub__ = lambda self, other: sub(other, self)
Tensor.__mul__ = mul
Tensor.__rmul__ = mul
Tensor.__neg__ = neg

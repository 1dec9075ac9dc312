"""Differentiable primitives.

Each primitive computes its forward value with numpy and, when a tape is
active and some input requires a gradient, records a closure mapping the
output gradient to one gradient per input (``None`` for non-differentiable
inputs).
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy import sparse

from .tensor import Tensor, active_tape, as_tensor


def _emit(name: str, inputs: Sequence[Tensor], data: np.ndarray, backward) -> Tensor:
    out = Tensor(data, dtype=data.dtype)
    out.requires_grad = any(t.requires_grad for t in inputs)
    tape = active_tape()
    if out.requires_grad and tape is not None:
        tape.record(name, inputs, out, backward)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _segment_starts(segment_of: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if segment_of.ndim != 1:
        raise ValueError("segment ids must be a vector")
    if segment_of.size and np.any(segment_of[1:] < segment_of[:-1]):
        raise ValueError("segment ids must be sorted so each segment is contiguous")
    change = np.empty(segment_of.size, dtype=bool)
    if segment_of.size:
        change[0] = True
        np.not_equal(segment_of[1:], segment_of[:-1], out=change[1:])
    starts = np.flatnonzero(change)
    lengths = np.diff(np.append(starts, segment_of.size))
    return starts, lengths


# -- linear algebra ---------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul expects 2-D operands")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch {a.shape} @ {b.shape}")

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return _emit("matmul", (a, b), a.data @ b.data, backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may broadcast against ``a`` (e.g. a bias row)."""
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _emit("add", (a, b), out, backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _emit("mul", (a, b), out, backward)


def scale(a: Tensor, c: float) -> Tensor:
    a = as_tensor(a)
    return _emit("scale", (a,), a.data * a.data.dtype.type(c), lambda g: (g * c,))


def sum_last(a: Tensor) -> Tensor:
    a = as_tensor(a)
    return _emit("sum_last", (a,), a.data.sum(axis=-1),
                 lambda g: (np.broadcast_to(g[..., None], a.shape).copy(),))


def concat(tensors: Sequence[Tensor]) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=-1)
    bounds = np.cumsum([0] + [t.shape[-1] for t in tensors])

    def backward(g):
        return [g[..., bounds[i]:bounds[i + 1]] for i in range(len(tensors))]

    return _emit("concat", tensors, out, backward)


# -- pointwise nonlinearities -----------------------------------------------

def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0
    out = np.where(pos, x.data, x.data * slope)
    return _emit("leaky_relu", (x,), out, lambda g: (np.where(pos, g, g * slope),))


def elu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0
    neg = np.expm1(np.minimum(x.data, 0))
    out = np.where(pos, x.data, neg)
    return _emit("elu", (x,), out, lambda g: (np.where(pos, g, g * (neg + 1)),))


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out = _stable_sigmoid(x.data)
    return _emit("sigmoid", (x,), out, lambda g: (g * out * (1 - out),))


def _stable_sigmoid(z: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1 / (1 + e), e / (1 + e))


def exp(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)
    return _emit("exp", (x,), out, lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    x = as_tensor(x)
    return _emit("log", (x,), np.log(x.data), lambda g: (g / x.data,))


# -- normalisation and regularisation ---------------------------------------

def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Row-wise ``(x - mean) / sqrt(var + eps) * gain + bias``."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    if eps <= 0:
        raise ValueError("eps must be positive")
    n = x.shape[-1]
    if n == 0:
        raise ValueError("layer_norm over zero-length rows")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out = xhat * gain.data + bias.data

    def backward(g):
        gx_hat = g * gain.data
        gx = inv_std / n * (n * gx_hat - gx_hat.sum(axis=-1, keepdims=True)
                            - xhat * (gx_hat * xhat).sum(axis=-1, keepdims=True))
        g_gain = (g * xhat).reshape(-1, n).sum(axis=0)
        g_bias = g.reshape(-1, n).sum(axis=0)
        return gx, g_gain, g_bias

    return _emit("layer_norm", (x, gain, bias), out, backward)


def dropout(x: Tensor, rate: float, seed: int, counter: int, training: bool = True) -> Tensor:
    """Inverted dropout with a Philox stream keyed by ``seed`` at position ``counter``.

    The same (seed, counter) pair always yields the same mask.
    """
    x = as_tensor(x)
    if not training or rate <= 0:
        return x
    if rate >= 1:
        raise ValueError("dropout rate must be < 1")
    gen = np.random.Generator(np.random.Philox(key=seed, counter=counter))
    keep = gen.random(x.shape) >= rate
    factor = x.data.dtype.type(1.0 / (1.0 - rate))
    mask = keep * factor
    return _emit("dropout", (x,), x.data * mask, lambda g: (g * mask,))


# -- indexing and segment structure -----------------------------------------

def gather_rows(x: Tensor, index: np.ndarray) -> Tensor:
    x = as_tensor(x)
    index = np.asarray(index, dtype=np.int64)
    out = x.data[index]

    def backward(g):
        # scatter-add through a sparse one-hot matrix; much faster than np.add.at
        hot = _segment_matrix(np.ones(index.size, dtype=g.dtype), index, x.shape[0])
        gx = hot @ g.reshape(index.size, -1)
        return (np.asarray(gx, dtype=x.data.dtype).reshape(x.shape),)

    return _emit("gather_rows", (x,), out, backward)


def _segment_matrix(weights: np.ndarray, index: np.ndarray, num_segments: int):
    cols = np.arange(index.size)
    return sparse.csr_matrix((weights, (index, cols)), shape=(num_segments, index.size))


def scatter_weighted_sum(values: Tensor, weights: Tensor | None, index: np.ndarray,
                         num_segments: int) -> Tensor:
    """``out[s] = sum_{e : index[e] == s} weights[e] * values[e]``.

    Segments with no members produce zero rows.  ``weights=None`` means 1.
    """
    values = as_tensor(values)
    index = np.asarray(index, dtype=np.int64)
    if index.shape[0] != values.shape[0]:
        raise ValueError("index length must match number of value rows")
    if weights is None:
        w = np.ones(index.size, dtype=values.data.dtype)
        inputs = (values,)
    else:
        weights = as_tensor(weights)
        if weights.shape != (index.size,):
            raise ValueError("weights must be a vector with one entry per row")
        w = weights.data
        inputs = (values, weights)
    if index.size and (index.min() < 0 or index.max() >= num_segments):
        raise IndexError("segment index out of range")
    seg = _segment_matrix(w, index, num_segments)
    out = np.asarray(seg @ values.data, dtype=values.data.dtype)

    def backward(g):
        g_values = np.asarray(seg.T @ g, dtype=values.data.dtype)
        if weights is None:
            return (g_values,)
        g_w = (values.data * g[index]).sum(axis=-1)
        return g_values, g_w

    return _emit("scatter_weighted_sum", inputs, out, backward)


def segment_softmax(logits: Tensor, segment_of: np.ndarray) -> Tensor:
    """Softmax of ``logits`` within each run of equal ``segment_of`` ids.

    ``logits`` may be a vector or a matrix whose columns (e.g. heads) are
    normalised independently.  Segment ids must be sorted.
    """
    logits = as_tensor(logits)
    segment_of = np.asarray(segment_of)
    if segment_of.shape[0] != logits.shape[0]:
        raise ValueError("segment ids and logits differ in length")
    if logits.shape[0] == 0:
        return logits
    starts, lengths = _segment_starts(segment_of)
    z = logits.data
    seg_max = np.repeat(np.maximum.reduceat(z, starts, axis=0), lengths, axis=0)
    e = np.exp(z - seg_max)
    denom = np.repeat(np.add.reduceat(e, starts, axis=0), lengths, axis=0)
    out = e / denom

    def backward(g):
        dot = np.repeat(np.add.reduceat(g * out, starts, axis=0), lengths, axis=0)
        return (out * (g - dot),)

    return _emit("segment_softmax", (logits,), out, backward)


def dense_softmax(x: Tensor) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _emit("dense_softmax", (x,), out, backward)


# -- losses -----------------------------------------------------------------

def cross_entropy_with_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy over rows; ``targets`` are class indices."""
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    n = logits.shape[0]
    if n == 0:
        raise ValueError("cross-entropy over zero rows")
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1))
    rows = np.arange(n)
    loss = (lse - z[rows, targets]).mean()

    def backward(g):
        p = np.exp(z - lse[:, None])
        p[rows, targets] -= 1
        return (p * (g / n),)

    return _emit("cross_entropy", (logits,), np.asarray(loss, dtype=logits.data.dtype), backward)


def binary_cross_entropy_with_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean per-entry sigmoid cross-entropy; ``targets`` is a 0/1 matrix."""
    logits = as_tensor(logits)
    t = np.asarray(targets, dtype=logits.data.dtype)
    if t.shape != logits.shape:
        raise ValueError("targets must match logits shape")
    if logits.data.size == 0:
        raise ValueError("binary cross-entropy over zero entries")
    z = logits.data
    loss = (np.maximum(z, 0) - z * t + np.log1p(np.exp(-np.abs(z)))).mean()

    def backward(g):
        return ((_stable_sigmoid(z) - t) * (g / z.size),)

    return _emit("binary_cross_entropy", (logits,), np.asarray(loss, dtype=z.dtype), backward)

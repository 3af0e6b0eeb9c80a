"""Differentiable array core.

Every operation computes its forward value eagerly with numpy. When a
:class:`GradTape` is recording and at least one input requires a gradient,
the operation is appended to the tape together with a closure that maps the
output adjoint to input adjoints. :meth:`GradTape.gradient` replays those
closures in reverse order.
"""
import math
import threading
from contextlib import contextmanager
from typing import Callable, Iterator, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from .errors import GradientCheckError, InvalidArgumentError

DTYPE = np.float64
NORM_EPS = 1e-12

Backward = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


class Tensor:
    __slots__ = ('data', 'requires_grad', 'name')

    def __init__(self, data, requires_grad: bool=False, name: Optional[str]=None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> 'Tensor':
        return transpose(self)

    def item(self) -> float:
        if self.data.size != 1:
            raise InvalidArgumentError(f'item() needs a single-element tensor, got shape {self.shape}')
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> 'Tensor':
        return Tensor(self.data)

    def __repr__(self) -> str:
        label = f' name={self.name!r}' if self.name else ''
        return f'Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})'

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


TensorLike = Union[Tensor, np.ndarray, float, int, Sequence[float]]


class _Record(NamedTuple):
    output: Tensor
    inputs: Tuple[Tensor, ...]
    backward: Backward


class GradTape:
    """Single-owner record of primitive ops, used as a context manager."""

    def __init__(self):
        self._records: List[_Record] = []

    def __enter__(self) -> 'GradTape':
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()

    def __len__(self) -> int:
        return len(self._records)

    def watch(self, *tensors: Tensor) -> None:
        for tensor in tensors:
            tensor.requires_grad = True

    def _record(self, output: Tensor, inputs: Tuple[Tensor, ...], backward: Backward) -> None:
        self._records.append(_Record(output, inputs, backward))

    def gradient(self, target: Tensor, sources: Sequence[Tensor]) -> List[np.ndarray]:
        if target.size != 1:
            raise InvalidArgumentError(f'gradient target must be a scalar, got shape {target.shape}')
        adjoints = {id(target): np.ones_like(target.data)}
        for record in reversed(self._records):
            upstream = adjoints.get(id(record.output))
            if upstream is None:
                continue
            for tensor, grad in zip(record.inputs, record.backward(upstream)):
                if grad is None or not tensor.requires_grad:
                    continue
                key = id(tensor)
                if key in adjoints:
                    adjoints[key] = adjoints[key] + grad
                else:
                    adjoints[key] = grad
        return [adjoints.get(id(source), np.zeros_like(source.data)) for source in sources]


_local = threading.local()


def _tape_stack() -> List[Optional[GradTape]]:
    stack = getattr(_local, 'stack', None)
    if stack is None:
        stack = []
        _local.stack = stack
    return stack


def _current_tape() -> Optional[GradTape]:
    stack = _tape_stack()
    return stack[-1] if stack else None


@contextmanager
def no_grad() -> Iterator[None]:
    stack = _tape_stack()
    stack.append(None)
    try:
        yield
    finally:
        stack.pop()


def as_tensor(value: TensorLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _emit(data: np.ndarray, inputs: Tuple[Tensor, ...], backward: Backward) -> Tensor:
    out = Tensor(data)
    tape = _current_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape._record(out, inputs, backward)
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


# elementwise

def add(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _emit(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _emit(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _emit(a.data * b.data, (a, b), lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    return _emit(out, (a, b), lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)))


def neg(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    return _emit(-a.data, (a,), lambda g: (-g,))


def power(a: TensorLike, exponent: float) -> Tensor:
    a = as_tensor(a)
    return _emit(a.data ** exponent, (a,), lambda g: (g * exponent * a.data ** (exponent - 1),))


def exp(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _emit(out, (a,), lambda g: (g * out,))


def log(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    return _emit(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)

    def backward(g):
        # subgradient 0 at the origin keeps std() of equal values differentiable
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, g / (2.0 * safe), 0.0),)
    return _emit(out, (a,), backward)


def absolute(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    return _emit(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def relu(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    return _emit(np.maximum(a.data, 0.0), (a,), lambda g: (g * (a.data > 0),))


def sigmoid(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    out = expit(a.data)
    return _emit(out, (a,), lambda g: (g * out * (1.0 - out),))


def softplus(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    return _emit(np.logaddexp(0.0, a.data), (a,), lambda g: (g * expit(a.data),))


def minimum(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    pick_a = a.data <= b.data
    return _emit(np.minimum(a.data, b.data), (a, b), lambda g: (_unbroadcast(g * pick_a, a.shape), _unbroadcast(g * ~pick_a, b.shape)))


def maximum(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    pick_a = a.data >= b.data
    return _emit(np.maximum(a.data, b.data), (a, b), lambda g: (_unbroadcast(g * pick_a, a.shape), _unbroadcast(g * ~pick_a, b.shape)))


# structural

def matmul(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise InvalidArgumentError(f'matmul expects (M,K)@(K,N), got {a.shape}@{b.shape}')
    return _emit(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def transpose(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    return _emit(a.data.T.copy(), (a,), lambda g: (g.T,))


def reshape(a: TensorLike, shape: Tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    return _emit(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def sum(a: TensorLike, axis: Optional[int]=None, keepdims: bool=False) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)
    return _emit(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), backward)


def mean(a: TensorLike, axis: Optional[int]=None, keepdims: bool=False) -> Tensor:
    a = as_tensor(a)
    count = a.size if axis is None else a.shape[axis]
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def take(a: TensorLike, indices: Sequence[int], axis: int=0) -> Tensor:
    a = as_tensor(a)
    index = np.asarray(indices, dtype=np.intp)

    def backward(g):
        grad = np.zeros_like(a.data)
        moved = np.moveaxis(grad, axis, 0)
        np.add.at(moved, index, np.moveaxis(g, axis, 0))
        return (grad,)
    return _emit(np.take(a.data, index, axis=axis), (a,), backward)


def concat(tensors: Sequence[TensorLike], axis: int=0) -> Tensor:
    parts = tuple(as_tensor(t) for t in tensors)
    if not parts:
        raise InvalidArgumentError('concat needs at least one tensor')
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]
    return _emit(np.concatenate([p.data for p in parts], axis=axis), parts, lambda g: tuple(np.split(g, bounds, axis=axis)))


# normalisation

def softmax(logits: TensorLike, axis: int=-1) -> Tensor:
    logits = as_tensor(logits)
    if logits.size == 0:
        raise InvalidArgumentError('softmax of an empty vector')
    shifted = logits.data - np.max(logits.data, axis=axis, keepdims=True)
    weights = np.exp(shifted)
    out = weights / np.sum(weights, axis=axis, keepdims=True)
    return _emit(out, (logits,), lambda g: (out * (g - np.sum(g * out, axis=axis, keepdims=True)),))


def layer_norm(a: TensorLike, eps: float=1e-5) -> Tensor:
    a = as_tensor(a)
    centered = a.data - a.data.mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centered ** 2).mean(axis=-1, keepdims=True) + eps)
    normed = centered * inv_std

    def backward(g):
        n = a.shape[-1]
        g_mean = g.mean(axis=-1, keepdims=True)
        proj = (g * normed).sum(axis=-1, keepdims=True) / n
        return (inv_std * (g - g_mean - normed * proj),)
    return _emit(normed, (a,), backward)


# convolution

def conv2d(x: TensorLike, weight: TensorLike, bias: Optional[TensorLike]=None, stride: int=1, padding: int=0) -> Tensor:
    """2-D convolution on an (H, W, Cin) map with a (k, k, Cin, Cout) kernel."""
    x, weight = as_tensor(x), as_tensor(weight)
    k, _, cin, cout = weight.shape
    if x.data.ndim != 3 or x.shape[2] != cin:
        raise InvalidArgumentError(f'conv2d input {x.shape} does not match kernel {weight.shape}')
    padded = np.pad(x.data, ((padding, padding), (padding, padding), (0, 0)))
    windows = sliding_window_view(padded, (k, k), axis=(0, 1))[::stride, ::stride]
    out_h, out_w = windows.shape[:2]
    cols = windows.transpose(0, 1, 3, 4, 2).reshape(out_h * out_w, k * k * cin)
    kernel = weight.data.reshape(k * k * cin, cout)
    out = cols @ kernel
    inputs: Tuple[Tensor, ...] = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data
        inputs = inputs + (bias,)

    def backward(g):
        g2 = g.reshape(out_h * out_w, cout)
        grad_weight = (cols.T @ g2).reshape(weight.shape)
        grad_cols = (g2 @ kernel.T).reshape(out_h, out_w, k, k, cin)
        grad_padded = np.zeros_like(padded)
        for di in range(k):
            for dj in range(k):
                grad_padded[di:di + stride * out_h:stride, dj:dj + stride * out_w:stride, :] += grad_cols[:, :, di, dj, :]
        h, w = x.shape[:2]
        grads = (grad_padded[padding:padding + h, padding:padding + w, :], grad_weight)
        if bias is not None:
            grads = grads + (g2.sum(axis=0),)
        return grads
    return _emit(out.reshape(out_h, out_w, cout), inputs, backward)


# composites

def linear(x: TensorLike, weight: TensorLike, bias: Optional[TensorLike]=None) -> Tensor:
    out = matmul(x, weight)
    return add(out, bias) if bias is not None else out


def std(values: TensorLike) -> Tensor:
    """Population standard deviation over all entries."""
    values = as_tensor(values)
    centered = sub(values, mean(values))
    return sqrt(mean(mul(centered, centered)))


def cosine_similarity(a: TensorLike, b: TensorLike) -> Tensor:
    """Cosine along the last axis; a zero-norm operand gives 0."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[-1] != b.shape[-1]:
        raise InvalidArgumentError(f'cosine_similarity length mismatch: {a.shape} vs {b.shape}')
    dot = sum(mul(a, b), axis=-1)
    norm_a = add(sqrt(sum(mul(a, a), axis=-1)), NORM_EPS)
    norm_b = add(sqrt(sum(mul(b, b), axis=-1)), NORM_EPS)
    return div(dot, mul(norm_a, norm_b))


def scaled_dot_attention(query: TensorLike, keys: TensorLike, values: TensorLike) -> Tensor:
    """softmax(query @ keys.T / sqrt(C)) @ values for (Q,C), (M,C), (M,C)."""
    query, keys, values = as_tensor(query), as_tensor(keys), as_tensor(values)
    if keys.shape[0] == 0:
        raise InvalidArgumentError('attention over an empty key sequence')
    if keys.shape[0] != values.shape[0] or query.shape[-1] != keys.shape[-1]:
        raise InvalidArgumentError(f'attention shapes disagree: q={query.shape} k={keys.shape} v={values.shape}')
    scores = mul(matmul(query, transpose(keys)), 1.0 / math.sqrt(query.shape[-1]))
    return matmul(softmax(scores, axis=-1), values)


def topk_indices(scores: TensorLike, k: int) -> List[int]:
    """Indices of the k largest scores, descending; ties go to the smaller index."""
    values = as_tensor(scores).data.reshape(-1)
    if not 1 <= k <= values.size:
        raise InvalidArgumentError(f'k={k} out of range for {values.size} scores')
    return [int(i) for i in np.argsort(-values, kind='stable')[:k]]


def finite_difference_check(f: Callable[[Tensor], Tensor], point: TensorLike, h: float=1e-5, coordinates: Optional[Sequence[Tuple[int, ...]]]=None) -> float:
    """Max over coordinates of |analytic - central difference| / max(1, |analytic|)."""
    base = np.array(as_tensor(point).data, dtype=DTYPE)
    at_point = Tensor(base.copy(), requires_grad=True)
    with GradTape() as tape:
        value = f(at_point)
    (analytic,) = tape.gradient(value, [at_point])
    if coordinates is None:
        coordinates = list(np.ndindex(base.shape))
    worst = 0.0
    with no_grad():
        for coord in coordinates:
            shifted = base.copy()
            shifted[coord] = base[coord] + h
            upper = f(Tensor(shifted)).item()
            shifted[coord] = base[coord] - h
            lower = f(Tensor(shifted)).item()
            if not (math.isfinite(upper) and math.isfinite(lower)):
                raise GradientCheckError(tuple(int(c) for c in coord), f'non-finite evaluation ({lower}, {upper})')
            numeric = (upper - lower) / (2.0 * h)
            exact = float(analytic[coord])
            worst = max(worst, abs(exact - numeric) / max(1.0, abs(exact)))
    return worst

"""Dense float64 tensor substrate.

Tensors are plain C-contiguous ``numpy.float64`` arrays, returned read-only by
every kernel here. No batch dimension: a feature map is ``C x H x W``.
"""

import contextlib
import contextvars
from dataclasses import dataclass

import numpy as np

from ._backend import kernels


class ShapeError(ValueError):
    """Operand shapes are inconsistent with the requested operation."""


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel_size: int
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        for name in ("in_channels", "out_channels", "stride", "padding", "kernel_size"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {v!r}")
        if self.kernel_size < 1:
            raise ValueError("kernel_size must be >= 1")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")

    def output_extent(self, size):
        span = size + 2 * self.padding - self.kernel_size
        if span < 0 or span % self.stride:
            raise ShapeError(
                f"extent {size} with kernel {self.kernel_size}, stride {self.stride}, "
                f"padding {self.padding} gives a non-integral output extent"
            )
        return span // self.stride + 1

    def macs(self, height, width):
        return (self.output_extent(height) * self.output_extent(width)
                * self.out_channels * self.in_channels * self.kernel_size ** 2)


class MacCounter:
    def __init__(self):
        self.macs = 0

    def add(self, n):
        self.macs += int(n)


_counter = contextvars.ContextVar("mac_counter", default=None)


@contextlib.contextmanager
def count_macs():
    """Tally multiply-accumulates of ``matmul``/``conv2d`` calls in the block.

    >>> with count_macs() as c:
    ...     _ = matmul(np.ones((2, 3)), np.ones((3, 1)))
    >>> c.macs
    6
    """
    counter = MacCounter()
    token = _counter.set(counter)
    try:
        yield counter
    finally:
        _counter.reset(token)


def _tally(n):
    c = _counter.get()
    if c is not None:
        c.add(n)


def freeze(a):
    a = np.asarray(a, dtype=np.float64)
    if not a.flags.c_contiguous or (a.flags.writeable and a.base is not None):
        a = a.copy(order="C")
    a.flags.writeable = False
    return a


def tensor(data, shape=None):
    """Build a read-only float64 tensor, validating shape and finiteness."""
    a = np.array(data, dtype=np.float64)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if any(s <= 0 for s in shape):
            raise ShapeError(f"extents must be positive, got {shape}")
        if int(np.prod(shape)) != a.size:
            raise ShapeError(f"shape {shape} needs {int(np.prod(shape))} values, got {a.size}")
        a = a.reshape(shape)
    if not np.all(np.isfinite(a)):
        raise ValueError("tensor values must be finite")
    a.flags.writeable = False
    return a


def matmul(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner extents differ: {a.shape} x {b.shape}")
    _tally(a.shape[0] * a.shape[1] * b.shape[1])
    out = kernels.matmul(np.ascontiguousarray(a), np.ascontiguousarray(b))
    return freeze(out)


def matvec(w, x):
    """``w @ x`` for a 1-D ``x``; counted like the equivalent matmul."""
    x = np.asarray(x, dtype=np.float64)
    return matmul(w, x.reshape(-1, 1)).reshape(-1)


def conv2d(x, w, spec):
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError(f"conv2d input must be C x H x W, got {x.shape}")
    expected = (spec.out_channels, spec.in_channels, spec.kernel_size, spec.kernel_size)
    if w.shape != expected:
        raise ShapeError(f"kernel shape {w.shape} does not match {expected}")
    if x.shape[0] != spec.in_channels:
        raise ShapeError(f"input has {x.shape[0]} channels, spec wants {spec.in_channels}")
    _tally(spec.macs(x.shape[1], x.shape[2]))
    out = kernels.conv2d(np.ascontiguousarray(x), np.ascontiguousarray(w),
                         spec.stride, spec.padding)
    return freeze(out)


def relu(x):
    return freeze(np.maximum(np.asarray(x, dtype=np.float64), 0.0))


def clip01(x):
    """ReLU followed by a clamp at 1: the bounded activation of the toy nets."""
    return freeze(np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0))


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return freeze(out)


def tanh(x):
    return freeze(np.tanh(np.asarray(x, dtype=np.float64)))


def _same_shape(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"elementwise operands differ in shape: {a.shape} vs {b.shape}")
    return a, b


def elementwise_add(a, b):
    a, b = _same_shape(a, b)
    return freeze(a + b)


def elementwise_mul(a, b):
    a, b = _same_shape(a, b)
    return freeze(a * b)

"""Fake quantizers: uniform k-bit activations, Laplace-fitted weights, min/max.

All quantizers snap real values onto a finite level set and keep float64
storage. Ties between two levels go to the level with the larger magnitude
(round half away from zero); an exact tie at 0 goes to the positive level.
"""

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from ._backend import kernels
from .tensorcore import freeze

FIXED = "fixed"
SYMMETRIC_LAPLACE = "symmetric_laplace"
DYNAMIC_MINMAX = "dynamic_minmax"

MAX_LAPLACE_BITS = 8

# At 53+ bits a min/max grid is finer than float64 spacing over the range.
LOSSLESS_BITS = 53

# Weights are stored as float32; from 24 bits a Laplace grid is finer than that.
LOSSLESS_WEIGHT_BITS = 24


def weights_lossless(k):
    """True when ``k``-bit weight quantization is a no-op (``None`` is full)."""
    return k is None or k >= LOSSLESS_WEIGHT_BITS


class QuantizationError(ValueError):
    pass


@dataclass(frozen=True)
class QuantSpec:
    """A quantization scheme.

    ``policy`` selects how the level set is built:

    * ``fixed``: ``2**bits`` evenly spaced levels on ``[lo, hi]``, endpoints included.
    * ``symmetric_laplace``: ``2**bits`` mid-rise levels ``±(j + 1/2) * spacing * mu``.
    * ``dynamic_minmax``: a ``fixed`` grid spanning each tensor's own min and max.
    """

    bits: int
    policy: str = FIXED
    lo: float = 0.0
    hi: float = 1.0
    mu: float = 1.0
    spacing: float = 0.0

    def __post_init__(self):
        if not isinstance(self.bits, (int, np.integer)) or self.bits < 1:
            raise QuantizationError(f"bits must be an integer >= 1, got {self.bits!r}")
        if self.policy == FIXED:
            if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or not self.lo < self.hi:
                raise QuantizationError(f"degenerate range [{self.lo}, {self.hi}]")
        elif self.policy == SYMMETRIC_LAPLACE:
            if not self.mu > 0 or not math.isfinite(self.mu):
                raise QuantizationError(f"mu must be positive, got {self.mu}")
            if not self.spacing > 0:
                raise QuantizationError(f"spacing must be positive, got {self.spacing}")
        elif self.policy != DYNAMIC_MINMAX:
            raise QuantizationError(f"unknown range policy {self.policy!r}")

    @classmethod
    def fixed(cls, bits, lo=0.0, hi=1.0):
        return cls(bits=bits, policy=FIXED, lo=float(lo), hi=float(hi))

    @property
    def step(self):
        if self.policy == FIXED:
            return (self.hi - self.lo) / (2 ** self.bits - 1)
        if self.policy == SYMMETRIC_LAPLACE:
            return self.spacing * self.mu
        raise QuantizationError("dynamic_minmax has no fixed step")

    def levels(self):
        """The full level set, ascending. Only sensible for small ``bits``."""
        if self.bits > 16:
            raise QuantizationError("level table too large to materialize")
        if self.policy == FIXED:
            idx = np.arange(2 ** self.bits, dtype=np.float64)
            return self.lo + idx * self.step
        if self.policy == SYMMETRIC_LAPLACE:
            pos = (np.arange(2 ** (self.bits - 1), dtype=np.float64) + 0.5) * self.step
            return np.concatenate([-pos[::-1], pos])
        raise QuantizationError("dynamic_minmax levels depend on the tensor")


def _check_finite(x):
    if not np.all(np.isfinite(x)):
        raise QuantizationError("cannot quantize non-finite values")


def quantize(x, spec):
    """Snap ``x`` onto the level set of ``spec``; out-of-range values clamp.

    >>> float(quantize(0.5, QuantSpec.fixed(2)))
    0.6666666666666666
    """
    x = np.asarray(x, dtype=np.float64)
    _check_finite(x)
    flat = np.ascontiguousarray(x.reshape(-1))
    if spec.policy == FIXED:
        out = kernels.quantize_uniform(flat, spec.lo, spec.hi, float(2 ** spec.bits - 1))
    elif spec.policy == SYMMETRIC_LAPLACE:
        out = kernels.quantize_midrise(flat, spec.step, float(2 ** (spec.bits - 1)))
    else:
        return quantize_dynamic(x, spec.bits)
    return freeze(np.asarray(out).reshape(x.shape))


def quantize_dynamic(x, k):
    """Per-tensor min/max linear quantization to ``2**k`` levels.

    Constant tensors, and any ``k`` at or above float64 resolution, come back
    unchanged.
    """
    if k < 1:
        raise QuantizationError(f"bits must be >= 1, got {k}")
    x = np.asarray(x, dtype=np.float64)
    _check_finite(x)
    if x.size == 0:
        return freeze(x.copy())
    lo, hi = float(x.min()), float(x.max())
    if lo == hi or k >= LOSSLESS_BITS:
        return freeze(x.copy())
    return quantize(x, QuantSpec.fixed(k, lo, hi))


# --- Laplace weight levels ---------------------------------------------------


@dataclass(frozen=True)
class LaplaceLevels:
    """Optimal evenly spaced mid-rise levels for the unit Laplace density.

    ``spacing`` is in units of the mean absolute value; ``l2_error`` is the
    expected squared error at that spacing.
    """

    k: int
    spacing: float
    l2_error: float

    def levels(self, mu=1.0):
        pos = (np.arange(2 ** (self.k - 1)) + 0.5) * self.spacing * mu
        return np.concatenate([-pos[::-1], pos])


def _exp_moment(a, b, c):
    """Closed form of ``integral_a^b exp(-x) (x - c)^2 dx`` (``b`` may be inf)."""

    def antideriv(x):
        u = x - c
        return -math.exp(-x) * (u * u + 2.0 * u + 2.0)

    upper = 0.0 if math.isinf(b) else antideriv(b)
    return upper - antideriv(a)


def laplace_l2_error(spacing, k):
    """Expected squared error of the ``2**k`` mid-rise quantizer on Laplace(0, 1).

    Density ``exp(-|x|)/2`` has ``E|X| = 1``; by symmetry the error equals the
    one-sided integral ``integral_0^inf exp(-x) (x - q(x))^2 dx``.
    """
    half = 2 ** (k - 1)
    total = 0.0
    for j in range(half):
        a = j * spacing
        b = math.inf if j == half - 1 else (j + 1) * spacing
        total += _exp_moment(a, b, (j + 0.5) * spacing)
    return total


@functools.lru_cache(maxsize=None)
def solve_laplace_levels(k):
    """Spacing minimizing expected squared error for ``2**k`` symmetric levels.

    A coarse scan brackets the minimum, then bounded Brent refines it to far
    below 1e-3.
    """
    if not isinstance(k, (int, np.integer)) or not 1 <= k <= MAX_LAPLACE_BITS:
        raise QuantizationError(f"k must be an integer in [1, {MAX_LAPLACE_BITS}], got {k!r}")
    k = int(k)
    grid = np.linspace(0.005, 4.0, 800)
    errs = [laplace_l2_error(d, k) for d in grid]
    i = int(np.argmin(errs))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = minimize_scalar(laplace_l2_error, bounds=(lo, hi), args=(k,),
                          method="bounded", options={"xatol": 1e-10})
    return LaplaceLevels(k=k, spacing=float(res.x), l2_error=float(res.fun))


def fit_weight_quantizer(w, k):
    """Scale the precomputed Laplace levels by the tensor's mean absolute value."""
    w = np.asarray(w, dtype=np.float64)
    if w.size == 0:
        raise QuantizationError("cannot fit a quantizer to an empty tensor")
    _check_finite(w)
    mu = float(np.mean(np.abs(w)))
    if mu == 0.0:
        raise QuantizationError("all-zero weights have no scale (mean |w| = 0)")
    return QuantSpec(bits=k, policy=SYMMETRIC_LAPLACE, mu=mu,
                     spacing=solve_laplace_levels(k).spacing)


def quantize_weights(w, k):
    """Fit and apply in one go; full or lossless ``k`` leaves the weights untouched."""
    if weights_lossless(k):
        return freeze(np.asarray(w, dtype=np.float64).copy())
    return quantize(w, fit_weight_quantizer(w, k))

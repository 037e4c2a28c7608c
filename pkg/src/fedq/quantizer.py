"""Stochastic fixed-point quantization on the symmetric unit interval.

An n-bit word spends one bit on the integer part and n-1 bits on the
fraction, so the grid step is 2**(1-n) and representable values are the
multiples of the step inside [-1, 1]. Rounding to the grid is randomized so
the quantizer is unbiased: a value rounds up with probability equal to its
fractional offset within the enclosing grid cell, which also caps the
squared error at step**2 / 4.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_MAX_BITS = 32


def _check_bits(n, n_max) -> None:
    if not isinstance(n, (int, np.integer)):
        raise ValueError(f"precision must be an integer bit count, got {n!r}")
    if not 1 <= n <= n_max:
        raise ValueError(f"precision {n} outside [1, {n_max}]")


def step_size(n: int, n_max: int = DEFAULT_MAX_BITS) -> float:
    """Grid step 2**(1-n) of the n-bit representation (an exact power of two)."""
    _check_bits(n, n_max)
    return 2.0 ** (1 - n)


@dataclass(frozen=True)
class PrecisionLevel:
    """Bit width of the fixed-point representation, within [1, n_max]."""

    n: int
    n_max: int = DEFAULT_MAX_BITS

    def __post_init__(self):
        _check_bits(self.n, self.n_max)

    @property
    def step(self) -> float:
        return 2.0 ** (1 - self.n)


@dataclass(frozen=True)
class QuantizedVector:
    """Vector whose entries are exact multiples of the quantization step.

    Entries lie in [-1, 1]. The nominal n-bit range tops out at 1 - step,
    but unbiased rounding of inputs inside (1 - step, 1) has to be allowed
    to land on 1.0; only an input of exactly 1.0 is pinned to 1 - step.
    """

    values: np.ndarray
    precision: PrecisionLevel

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if vals.size:
            if np.any(np.abs(vals) > 1.0):
                raise ValueError("quantized values fall outside [-1, 1]")
            kappa = self.precision.step
            if np.any(vals != np.round(vals / kappa) * kappa):
                raise ValueError("quantized values are not multiples of the step")

    def __len__(self) -> int:
        return self.values.size


def clip_unit(w):
    """Project a scalar or array onto [-1, 1]. Idempotent; rejects non-finite input."""
    arr = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("clip_unit requires finite input")
    clipped = np.clip(arr, -1.0, 1.0)
    if arr.ndim == 0:
        return float(clipped)
    return clipped


def _stochastic_round(arr: np.ndarray, kappa: float, rng: np.random.Generator) -> np.ndarray:
    # kappa is a power of two, so arr/kappa, floor, and the grid points below
    # are all exact in binary floating point.
    lower = np.floor(arr / kappa) * kappa
    frac = (arr - lower) / kappa
    out = lower + kappa * (rng.random(arr.shape) < frac)
    # +1.0 is an exact grid point but overflows the n-bit word; pin it one
    # step down. This is the only biased input and has measure zero.
    return np.where(arr == 1.0, 1.0 - kappa, out)


def quantize_scalar(w: float, n: int, rng: np.random.Generator,
                    n_max: int = DEFAULT_MAX_BITS) -> float:
    """Randomly round a value in [-1, 1] to the n-bit grid, unbiased in expectation."""
    _check_bits(n, n_max)
    w = float(w)
    if not np.isfinite(w) or abs(w) > 1.0:
        raise ValueError(f"quantizer input {w!r} outside [-1, 1]; clip first")
    return float(_stochastic_round(np.asarray(w), step_size(n, n_max), rng))


def quantize_vector(values, n: int, rng: np.random.Generator,
                    n_max: int = DEFAULT_MAX_BITS) -> QuantizedVector:
    """Elementwise stochastic rounding with one independent draw per entry."""
    return QuantizedVector(quantize_array(values, n, rng, n_max), PrecisionLevel(n, n_max))


def quantize_array(values, n: int, rng: np.random.Generator,
                   n_max: int = DEFAULT_MAX_BITS) -> np.ndarray:
    """Like quantize_vector but returns the bare ndarray (hot-path helper)."""
    _check_bits(n, n_max)
    arr = np.asarray(values, dtype=float)
    if arr.size:
        if not np.all(np.isfinite(arr)):
            raise ValueError("quantizer input must be finite")
        if np.any(np.abs(arr) > 1.0):
            raise ValueError("quantizer input outside [-1, 1]; clip first")
    return _stochastic_round(arr, step_size(n, n_max), rng)


def moment_bounds(n: int, dim: int, n_max: int = DEFAULT_MAX_BITS) -> tuple[float, float]:
    """Bias and worst-case total squared error of quantizing a dim-vector.

    The rounding is unbiased, and each coordinate contributes at most
    step**2 / 4 = 4**-n of squared error, so the pair is exactly
    (0, dim / 2**(2n)).
    """
    _check_bits(n, n_max)
    if not isinstance(dim, (int, np.integer)) or dim < 0:
        raise ValueError(f"dimension must be a non-negative integer, got {dim!r}")
    return 0.0, dim * 4.0 ** (-n)

"""Message algebra for discrete belief propagation.

A message is a numpy vector of nonnegative reals over a finite symbol
alphabet.  All functions here operate on the last axis, so a 2-D array is
treated as a batch of messages (one row per sample).  Proportionality is
the only thing that matters to inference, so messages are kept normalized
to unit sum throughout.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "AllZeroVector",
    "SupportMismatch",
    "normalize",
    "hadamard_posterior",
    "sharpen",
    "max_indicator",
    "kl_divergence",
    "uniform",
    "one_hot",
    "is_normalized",
]

# Rows whose sum is already this close to 1 are returned unchanged, which
# makes normalize exactly idempotent while keeping sums within 1e-12.
_SUM_SLACK = 1e-13


class AllZeroVector(ValueError):
    """A message with no support cannot be normalized."""


class SupportMismatch(ValueError):
    """The reference distribution has a zero where the subject has mass."""


def _last_axis_sum(values: np.ndarray) -> np.ndarray:
    return np.sum(values, axis=-1, keepdims=True)


def normalize(values: np.ndarray) -> np.ndarray:
    """Scale each row to unit sum.

    Raises AllZeroVector if any row sums to zero.  Rows already within
    1e-13 of unit sum are passed through untouched, so the function is
    exactly idempotent.
    """
    values = np.asarray(values, dtype=np.float64)
    if np.any(values < 0.0):
        raise ValueError("messages must be nonnegative")
    sums = _last_axis_sum(values)
    if np.any(sums == 0.0):
        raise AllZeroVector("cannot normalize a vector with zero total mass")
    needs = np.abs(sums - 1.0) > _SUM_SLACK
    if not np.any(needs):
        return values.copy()
    return np.where(needs, values / sums, values)


def hadamard_posterior(forward: np.ndarray, backward: np.ndarray) -> np.ndarray:
    """Combine opposite-direction messages into a posterior.

    The posterior on an edge is the normalized elementwise product of the
    forward and backward messages meeting there.  Raises AllZeroVector when
    the two have disjoint support.
    """
    forward = np.asarray(forward, dtype=np.float64)
    backward = np.asarray(backward, dtype=np.float64)
    if forward.shape[-1] != backward.shape[-1]:
        raise ValueError(
            f"alphabet mismatch: {forward.shape[-1]} vs {backward.shape[-1]}"
        )
    return normalize(forward * backward)


def sharpen(values: np.ndarray, exponent: float) -> np.ndarray:
    """Raise each entry to ``exponent`` and renormalize.

    Exponent 1 is the identity, large exponents approach the delta on the
    argmax, and 0 flattens to uniform.
    """
    if exponent < 0:
        raise ValueError("exponent must be nonnegative")
    values = np.asarray(values, dtype=np.float64)
    if exponent == 1.0:
        return normalize(values)
    if np.any(values.sum(axis=-1) <= 0.0) or np.any(values < 0):
        return normalize(values)  # delegate the error reporting
    # Powers are taken relative to each row's peak so that large exponents
    # cannot underflow the whole row to zero.
    with np.errstate(divide="ignore"):
        logs = np.log(values)
    peak = logs.max(axis=-1, keepdims=True)
    return normalize(np.exp(exponent * (logs - peak)))


def max_indicator(values: np.ndarray, delta: float = 0.0) -> np.ndarray:
    """One-hot indicator of each row's argmax, plus ``delta`` everywhere.

    Ties resolve to the lowest index.  The result is intentionally left
    unnormalized; callers that need a distribution normalize afterwards.
    """
    values = np.asarray(values, dtype=np.float64)
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    out = np.full(values.shape, delta, dtype=np.float64)
    best = np.argmax(values, axis=-1)
    np.put_along_axis(out, np.expand_dims(best, axis=-1), delta + 1.0, axis=-1)
    return out


def kl_divergence(p: np.ndarray, q: np.ndarray) -> np.ndarray | float:
    """Kullback-Leibler divergence D(p || q), in nats, over the last axis."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape[-1] != q.shape[-1]:
        raise ValueError(f"alphabet mismatch: {p.shape[-1]} vs {q.shape[-1]}")
    mass = p > 0.0
    if np.any(mass & (np.broadcast_to(q, np.broadcast_shapes(p.shape, q.shape)) == 0.0)):
        raise SupportMismatch("reference has a zero where the subject has mass")
    terms = np.zeros(np.broadcast_shapes(p.shape, q.shape), dtype=np.float64)
    np.divide(p, q, out=terms, where=mass)
    np.log(terms, out=terms, where=mass)
    terms *= p
    result = np.sum(terms, axis=-1)
    return float(result) if result.ndim == 0 else result


def uniform(size: int) -> np.ndarray:
    """The uniform distribution over ``size`` symbols."""
    if size < 1:
        raise ValueError("alphabet size must be positive")
    return np.full(size, 1.0 / size, dtype=np.float64)


def one_hot(index: int | np.ndarray, size: int) -> np.ndarray:
    """Delta distribution(s) concentrated at ``index``."""
    index = np.asarray(index)
    if np.any(index < 0) or np.any(index >= size):
        raise IndexError(f"symbol index out of range for alphabet of size {size}")
    out = np.zeros(index.shape + (size,), dtype=np.float64)
    np.put_along_axis(out, np.expand_dims(index, axis=-1), 1.0, axis=-1)
    return out


def is_normalized(values: np.ndarray, atol: float = 1e-12) -> bool:
    """True when every row is a distribution: nonnegative, unit sum."""
    values = np.asarray(values)
    if values.size == 0 or np.any(values < 0):
        return False
    return bool(np.all(np.abs(np.sum(values, axis=-1) - 1.0) <= atol))

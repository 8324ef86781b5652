"""Elementary special functions shared by the estimators."""

from __future__ import annotations

import math

import numpy as np

Probability = float


def check_probability(name: str, value: float) -> float:
    """Return ``value`` if it lies in [0, 1], raise ``ValueError`` otherwise."""
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
    return value


def binary_entropy(x):
    """Binary Shannon entropy in bits.

    Accepts scalars or arrays. The endpoints 0 and 1 return exactly 0.

    Args:
        x: Value(s) in [0, 1].

    Returns:
        ``-x log2 x - (1-x) log2(1-x)``, same shape as ``x``.

    Raises:
        ValueError: If any value lies outside [0, 1].
    """
    arr = np.asarray(x, dtype=float)
    if np.any((arr < 0.0) | (arr > 1.0)) or np.any(np.isnan(arr)):
        raise ValueError(f"binary_entropy argument outside [0, 1]: {x!r}")
    inner = (arr > 0.0) & (arr < 1.0)
    safe = np.where(inner, arr, 0.5)
    out = -safe * np.log2(safe) - (1.0 - safe) * np.log2(1.0 - safe)
    out = np.where(inner, out, 0.0)
    return float(out) if out.ndim == 0 else out


def poisson_pmf(n: int, mu):
    """Poisson probability ``exp(-mu) mu**n / n!`` evaluated in log space.

    Args:
        n: Photon number, a nonnegative integer.
        mu: Mean photon number(s), scalar or array, all >= 0.

    Raises:
        ValueError: If ``n`` is negative or ``mu`` is negative.
    """
    if n < 0 or int(n) != n:
        raise ValueError(f"photon number must be a nonnegative integer, got {n!r}")
    m = np.asarray(mu, dtype=float)
    if np.any(m < 0.0) or np.any(np.isnan(m)):
        raise ValueError(f"mean photon number must be >= 0, got {mu!r}")
    if n == 0:
        out = np.exp(-m)
    else:
        positive = m > 0.0
        safe = np.where(positive, m, 1.0)
        logp = -safe + n * np.log(safe) - math.lgamma(n + 1)
        out = np.where(positive, np.exp(logp), 0.0)
    return float(out) if out.ndim == 0 else out

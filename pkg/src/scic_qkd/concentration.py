"""Statistical fluctuation terms and a Monte Carlo check of the martingale tail.

Two deviation functions are used by the estimators:

* ``g_ma`` is the Modified Azuma term. It exploits the probability ``q`` that a
  martingale difference is nonzero and is much tighter than plain Azuma when
  ``q`` is small.
* ``g_azuma`` is the standard Azuma-Hoeffding term ``sqrt(2 x ln(1/y))``.

The empirical harness draws its randomness from ``numpy.random.default_rng``
(the PCG64 bit generator). A single stream seeded with the master seed is
consumed in one vectorized call, so results depend only on the seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class TailBoundQuery:
    """Parameters of a Modified Azuma deviation query.

    Attributes:
        epsilon: Target failure probability in (0, 1).
        q: Probability that a martingale difference is nonzero, in [0, 1].
        n: Number of martingale steps (>= 1). Real values are accepted because
            expected counts are real-valued.
    """

    epsilon: float
    q: float
    n: float

    def __post_init__(self) -> None:
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon!r}")
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"q must lie in [0, 1], got {self.q!r}")
        if not self.n >= 1:
            raise ValueError(f"n must be >= 1, got {self.n!r}")


def modified_azuma_term(epsilon, q, n):
    """Vectorized Modified Azuma deviation ``(sqrt(l (l - 18 n q)) - l) / 3``.

    Here ``l = ln(epsilon)``. Inputs broadcast against each other. ``n = 0`` is
    allowed and gives the q-independent floor ``-2 l / 3``.
    """
    eps = np.asarray(epsilon, dtype=float)
    if np.any((eps <= 0.0) | (eps >= 1.0)):
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon!r}")
    log_eps = np.log(eps)
    nq = np.asarray(n, dtype=float) * np.asarray(q, dtype=float)
    out = (np.sqrt(log_eps * (log_eps - 18.0 * nq)) - log_eps) / 3.0
    return float(out) if np.ndim(out) == 0 else out


def g_ma(query: TailBoundQuery) -> float:
    """Modified Azuma deviation for a validated query."""
    return modified_azuma_term(query.epsilon, query.q, query.n)


def g_azuma(x, eps):
    """Azuma-Hoeffding deviation ``sqrt(2 x ln(1/eps))``.

    Args:
        x: Number of bounded-difference steps, >= 0 (scalar or array).
        eps: Failure probability in (0, 1).
    """
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0.0):
        raise ValueError(f"x must be >= 0, got {x!r}")
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps!r}")
    out = np.sqrt(2.0 * xa * np.log(1.0 / eps))
    return float(out) if out.ndim == 0 else out


def empirical_tail_check(
    q: float,
    n: int,
    eps: float,
    trials: int,
    seed: int,
    bound: Callable[[TailBoundQuery], float] = g_ma,
) -> float:
    """Fraction of simulated martingales whose endpoint reaches the bound.

    Each trial is the centered Bernoulli walk ``Y_j = Y_{j-1} + (B_j - q)`` with
    ``B_j ~ Bernoulli(q)``. Only ``Y_n`` enters the statistic and it equals
    ``Binomial(n, q) - n q``, so it is drawn directly.

    Args:
        q: Bernoulli success probability, which is also the probability of a
            nonzero difference.
        n: Number of steps.
        eps: Failure probability passed to the bound.
        trials: Number of independent walks.
        seed: Seed for ``numpy.random.default_rng``.
        bound: Deviation function under test. Replaceable so that callers can
            check that a deliberately weakened bound is detected.

    Returns:
        Observed frequency of ``Y_n >= bound``.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials!r}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n!r}")
    threshold = bound(TailBoundQuery(eps, q, n))
    rng = np.random.default_rng(seed)
    endpoints = rng.binomial(int(n), q, size=int(trials)) - n * q
    return float(np.count_nonzero(endpoints >= threshold)) / trials

"""Failure-probability budget, error-correction cost and secret key length."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import BITS, INTENSITIES, SETTINGS
from .decoy_estimator import DecoyEpsilons
from .numerics import binary_entropy
from .phase_error import phase_error_rate

PHASE_TERMS = 26
EC_INEFFICIENCY = 1.05


@dataclass(frozen=True)
class EpsilonBudget:
    """All failure probabilities and their composition.

    Attributes:
        eps_s: Secrecy parameter implied by the components.
        eps_c: Correctness parameter.
        eps_PA: Privacy-amplification (smoothing) term.
        eps_PH: Total failure probability of the phase-error estimate.
        eps_Z: Total failure probability of the single-photon Z estimate,
            ``p_fail`` included.
        decoy: Modified Azuma terms of the decoy bounds.
        eps_A: Azuma terms of the phase-error bound keyed by ``(c, alpha)``,
            plus ``"ph"`` for the final term.
        p_fail: Probability that the tag bound fails.
    """

    eps_s: float
    eps_c: float
    eps_PA: float
    eps_PH: float
    eps_Z: float
    decoy: DecoyEpsilons
    eps_A: dict = field(default_factory=dict)
    p_fail: float = 0.0

    def z_total(self) -> float:
        """Sum of the Z-side terms and ``p_fail``."""
        d = self.decoy
        return sum(d.eps_MA_Zk.values()) + d.eps_MA_Z1 + self.p_fail

    def phase_total(self, selects_upper: dict, active: dict | None = None) -> float:
        """Phase-side failure probability consumed by a given bound selection.

        Args:
            selects_upper: ``(alpha, c) -> bool``, True where the upper count
                bound (two intensities) is used and False where the lower
                bound (three intensities) is used.
            active: ``(alpha, c) -> bool``; inactive coefficients (exactly
                zero) contribute no terms. Defaults to all active.
        """
        d = self.decoy
        total = self.eps_A["ph"]
        for (alpha, c), upper in selects_upper.items():
            if active is not None and not active[alpha, c]:
                continue
            y = 1 - alpha
            ks = ("k2", "k3") if upper else INTENSITIES
            total += self.eps_A[c, alpha]
            total += sum(d.eps_MA_ckyX[c, k, y] for k in ks) + d.eps_MA_c1yX[c, y]
        return total


def compose_secrecy(eps_PA: float, eps_PH: float, eps_Z: float) -> float:
    """``sqrt(2) sqrt(eps_PA + eps_PH) + eps_Z``."""
    return math.sqrt(2.0) * math.sqrt(eps_PA + eps_PH) + eps_Z


def default_budget(eps_s_target: float = 1e-10, eps_c: float = 1e-10,
                   p_fail: float = 0.0) -> EpsilonBudget:
    """Standard allocation for a secrecy target.

    Half of the target goes to the Z estimate and the other half to the
    square-root term shared equally by ``eps_PA`` and ``eps_PH``. The Z part,
    less ``p_fail``, is split over four Modified Azuma terms. Every phase-side
    term gets ``eps_PH / 26``. The composed secrecy is recomputed and checked
    against the target.

    Raises:
        ValueError: If a target lies outside (0, 1) or ``p_fail`` consumes the
            whole Z share.
    """
    for name, value in (("eps_s_target", eps_s_target), ("eps_c", eps_c)):
        if not 0.0 < value < 1.0:
            raise ValueError(f"{name} must lie in (0, 1), got {value!r}")
    eps_Z = eps_s_target / 2.0
    if not 0.0 <= p_fail < eps_Z:
        raise ValueError(f"p_fail={p_fail!r} leaves no room in eps_Z={eps_Z!r}")
    eps_PA = eps_PH = eps_s_target ** 2 / 16.0
    z_term = (eps_Z - p_fail) / 4.0
    ph_term = eps_PH / PHASE_TERMS
    decoy = DecoyEpsilons(
        eps_MA_Zk={k: z_term for k in INTENSITIES},
        eps_MA_Z1=z_term,
        eps_MA_ckyX={(c, k, y): ph_term for c in SETTINGS for k in INTENSITIES for y in BITS},
        eps_MA_c1yX={(c, y): ph_term for c in SETTINGS for y in BITS},
    )
    eps_A = {(c, alpha): ph_term for c in SETTINGS for alpha in (0, 1)}
    eps_A["ph"] = ph_term
    eps_s = compose_secrecy(eps_PA, eps_PH, eps_Z)
    if eps_s > eps_s_target * (1.0 + 1e-12):
        raise ValueError(f"composed secrecy {eps_s!r} exceeds target {eps_s_target!r}")
    return EpsilonBudget(eps_s=eps_s, eps_c=eps_c, eps_PA=eps_PA, eps_PH=eps_PH, eps_Z=eps_Z,
                         decoy=decoy, eps_A=eps_A, p_fail=p_fail)


def ec_cost(sift_len, e_bit, eps_c: float, *, include_constant: bool = True):
    """Error-correction leakage ``1.05 |sift| h(e_bit) + log2(1/eps_c)``.

    ``include_constant=False`` drops the block-size-independent verification
    term, as appropriate for asymptotic rates.
    """
    e = np.asarray(e_bit, dtype=float)
    if np.any(e < 0.0) or np.any(e > 0.5):
        raise ValueError(f"e_bit must lie in [0, 1/2], got {e_bit!r}")
    out = EC_INEFFICIENCY * np.asarray(sift_len, dtype=float) * binary_entropy(e)
    if include_constant:
        out = out + math.log2(1.0 / eps_c)
    return float(out) if np.ndim(out) == 0 else out


def key_length(s1L, nphU, budget: EpsilonBudget, lambda_EC, *, include_constant: bool = True):
    """Extractable secret key length.

    ``ell = max(0, s1L (1 - h(e)) - log2(2/eps_PA) - lambda_EC)`` with
    ``e = clamp(nphU / s1L, 0, 1/2)``. The protocol aborts when ``s1L`` is zero
    or the key length is not positive.

    Returns:
        ``(ell, aborted)``; arrays when inputs are arrays.
    """
    raw = raw_key_length(s1L, nphU, budget, lambda_EC, include_constant=include_constant)
    s1 = np.asarray(s1L, dtype=float)
    aborted = (s1 <= 0.0) | (raw <= 0.0)
    ell = np.where(aborted, 0.0, raw)
    if ell.ndim == 0:
        return float(ell), bool(aborted)
    return ell, aborted


def raw_key_length(s1L, nphU, budget: EpsilonBudget, lambda_EC, *, include_constant: bool = True):
    """Key-length expression before flooring at zero."""
    s1 = np.asarray(s1L, dtype=float)
    e = phase_error_rate(nphU, s1)
    out = s1 * (1.0 - binary_entropy(e)) - np.asarray(lambda_EC, dtype=float)
    if include_constant:
        out = out - math.log2(2.0 / budget.eps_PA)
    return np.asarray(out)


@dataclass
class KeyRateResult:
    """Outcome of one pipeline evaluation."""

    s1L: float
    nphU: float
    e_phU: float
    lambda_EC: float
    ell: float
    rate: float
    mu_k1: float
    mu_k2: float
    aborted: bool
    e_bit: float = 0.0
    N_det: float = 0.0
    N_sent: float = 0.0
    length_km: float = 0.0
    case: str = "I"
    mode: str = "finite"
    raw_ell: float = 0.0
    violations: list = field(default_factory=list)

"""Phase-error estimation for the loss-tolerant three-state protocol.

The number of phase errors among untagged single-photon sifted rounds is
bounded by a linear combination of single-photon X-basis detection counts.
Coefficients ``Gamma[alpha, c]`` relate the virtual Z-basis states to the three
actually prepared states. Upper bounds on them are available in two forms:

* ``gamma_upper_restricted``: closed forms for symmetric intervals of
  half-width ``theta``.
* ``gamma_upper_general``: the maximizing corners of an arbitrary phase box.

On symmetric boxes the corner values are slightly smaller than the closed
forms (about 0.029135 against 0.029146 at ``theta = 0.03``). The closed forms
are therefore valid but marginally loose. Both are exposed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from . import BITS, SETTINGS
from .channel_sim import ObservedCounts
from .concentration import g_azuma
from .source_model import PhaseIntervals, SourceSpec

SINGULARITY_GUARD = 1e-12

GAMMA_KEYS = tuple((alpha, c) for alpha in (0, 1) for c in SETTINGS)


def _ratio(num: float, den: float) -> float:
    if abs(den) < SINGULARITY_GUARD:
        raise ZeroDivisionError(f"Gamma denominator {den!r} below singularity guard")
    return num / den


def gamma_general(alpha: int, c: str, th0Z: float, th1Z: float, th0X: float) -> float:
    """Coefficient ``Gamma[alpha, c]`` at exact phases of the three states."""
    a = (th0Z + th1Z - 2.0 * th0X) / 4.0
    u = (-3.0 * th0Z + th1Z + 2.0 * th0X) / 4.0
    v = (-th0Z + 3.0 * th1Z - 2.0 * th0X) / 4.0
    d = (th0Z - th1Z) / 2.0
    if (alpha, c) == (0, "0Z"):
        return _ratio(math.sin(a), math.sin(a) - math.sin(u))
    if (alpha, c) == (0, "1Z"):
        return _ratio(math.sin(a), math.sin(a) + math.sin(v))
    if (alpha, c) == (0, "0X"):
        return _ratio(1.0 - math.cos(d), math.cos(2.0 * a) - math.cos(d))
    if (alpha, c) == (1, "0Z"):
        return _ratio(math.cos(a), math.cos(a) - math.cos(u))
    if (alpha, c) == (1, "1Z"):
        return _ratio(math.cos(a), math.cos(a) - math.cos(v))
    if (alpha, c) == (1, "0X"):
        return _ratio(-1.0 - math.cos(d), math.cos(2.0 * a) - math.cos(d))
    raise KeyError((alpha, c))


def gamma_upper_restricted(alpha: int, c: str, theta: float) -> float:
    """Closed-form upper bound on ``Gamma[alpha, c]`` for symmetric half-width ``theta``."""
    if not 0.0 <= theta < math.pi / 6:
        raise ValueError(f"theta must lie in [0, pi/6), got {theta!r}")
    s = math.sin(theta)
    if alpha == 0 and c in ("0Z", "1Z"):
        return s / (s + math.cos(1.5 * theta))
    if (alpha, c) == (0, "0X"):
        return (1.0 - s) / (math.cos(2.0 * theta) - s)
    if alpha == 1 and c in ("0Z", "1Z"):
        return math.cos(theta) / (math.cos(theta) - math.sin(1.5 * theta))
    if (alpha, c) == (1, "0X"):
        return -(1.0 - s) / (1.0 + s)
    raise KeyError((alpha, c))


def gamma_upper_general(alpha: int, c: str, phases: PhaseIntervals) -> float:
    """Upper bound on ``Gamma[alpha, c]`` over an arbitrary phase box.

    Most coefficients peak at a fixed corner. ``Gamma[0, 0X]`` takes the worst
    of all eight corners. ``Gamma[1, 0X]`` peaks where the ``0X`` phase is
    closest to the midpoint of the lower ``0Z`` and upper ``1Z`` bounds.
    """
    p = phases
    L0, U0 = p.theta_L_0Z, p.theta_U_0Z
    L1, U1 = p.theta_L_1Z, p.theta_U_1Z
    LX, UX = p.theta_L_0X, p.theta_U_0X
    if (alpha, c) == (0, "0Z"):
        return gamma_general(0, "0Z", L0, L1, UX)
    if (alpha, c) == (0, "1Z"):
        return gamma_general(0, "1Z", U0, U1, LX)
    if (alpha, c) == (0, "0X"):
        return max(gamma_general(0, "0X", x, y, z) for x, y, z in product((L0, U0), (L1, U1), (LX, UX)))
    if (alpha, c) == (1, "0Z"):
        return gamma_general(1, "0Z", U0, L1, LX)
    if (alpha, c) == (1, "1Z"):
        return gamma_general(1, "1Z", U0, L1, UX)
    if (alpha, c) == (1, "0X"):
        mid = (L0 + U1) / 2.0
        return gamma_general(1, "0X", L0, U1, min(max(mid, LX), UX))
    raise KeyError((alpha, c))


def p_upper(alpha: int, phases_or_theta, p_A_Z: float, p_B_Z: float) -> float:
    """Upper bound on the probability of virtual outcome ``alpha`` in sifted rounds.

    A float is read as a symmetric half-width. A ``PhaseIntervals`` box uses the
    corner that maximizes the virtual-state probability for ``alpha``.
    """
    if isinstance(phases_or_theta, PhaseIntervals):
        p = phases_or_theta
        if alpha == 0:
            vir = (1.0 + math.cos((p.theta_U_0Z - p.theta_L_1Z) / 2.0)) / 2.0
        elif alpha == 1:
            vir = (1.0 - math.cos((p.theta_L_0Z - p.theta_U_1Z) / 2.0)) / 2.0
        else:
            raise KeyError(alpha)
    else:
        if alpha not in (0, 1):
            raise KeyError(alpha)
        vir = (1.0 + math.sin(phases_or_theta)) / 2.0
    return p_A_Z * p_B_Z * vir


@dataclass(frozen=True)
class GammaSet:
    """Coefficient upper bounds ``gamma_U[alpha, c]`` and probability caps ``p_U[alpha]``."""

    gamma_U: dict
    p_U: dict
    mode: str = "restricted"

    def selects_upper(self, alpha: int, c: str) -> bool:
        """Positive coefficients take the upper count bound, others the lower."""
        return self.gamma_U[alpha, c] > 0.0


def build_gamma_set(phases: PhaseIntervals, p_A_Z: float, p_B_Z: float,
                    mode: str = "auto") -> GammaSet:
    """Assemble the coefficient set for a phase box.

    Args:
        phases: Phase intervals.
        p_A_Z, p_B_Z: Z-basis probabilities of Alice and Bob.
        mode: ``"restricted"`` needs a symmetric box, ``"general"`` uses the
            corner rules, ``"auto"`` picks restricted when the box is symmetric.
    """
    theta = phases.symmetric_half_width()
    if mode == "auto":
        mode = "restricted" if theta is not None else "general"
    if mode == "restricted":
        if theta is None:
            raise ValueError("restricted Gamma mode requires symmetric phase intervals")
        gammas = {key: gamma_upper_restricted(*key, theta) for key in GAMMA_KEYS}
        caps = {a: p_upper(a, theta, p_A_Z, p_B_Z) for a in (0, 1)}
    elif mode == "general":
        gammas = {key: gamma_upper_general(*key, phases) for key in GAMMA_KEYS}
        caps = {a: p_upper(a, phases, p_A_Z, p_B_Z) for a in (0, 1)}
    else:
        raise ValueError(f"unknown gamma mode {mode!r}")
    return GammaSet(gamma_U=gammas, p_U=caps, mode=mode)


def select_s_prime(gammas: GammaSet, upper: dict, lower: dict) -> dict:
    """Pick, for each X outcome ``y`` of setting ``c``, the bound that maximizes the phase errors.

    Coefficient ``Gamma[alpha, c]`` multiplies the count with outcome
    ``alpha XOR 1``.
    """
    out = {}
    for alpha, c in GAMMA_KEYS:
        y = 1 - alpha
        out[c, y] = upper[c, y] if gammas.selects_upper(alpha, c) else lower[c, y]
    return out


def n_ph_upper(s_prime: dict, gammas: GammaSet, counts: ObservedCounts, source: SourceSpec,
               p_B_X: float, eps_A: dict, *, asymptotic: bool = False):
    """Upper bound on phase errors among untagged single-photon sifted rounds.

    Args:
        s_prime: Selected single-photon X counts keyed by ``(c, y)``.
        gammas: Coefficient set.
        counts: Observed counts; only ``N_det`` is read.
        source: Supplies the setting probabilities.
        p_B_X: Probability Bob measures in X.
        eps_A: Azuma failure probabilities keyed by ``(c, alpha)`` for each
            coefficient plus ``"ph"`` for the final term.
        asymptotic: Drop all Azuma terms.

    Returns:
        The bound, clamped below at 0.
    """
    def dev(eps):
        return 0.0 if asymptotic else g_azuma(counts.N_det, eps)

    total = 0.0
    for alpha, c in GAMMA_KEYS:
        gamma = gammas.gamma_U[alpha, c]
        if gamma == 0.0:
            continue
        p_c = source.p_setting(c)
        if p_c * p_B_X == 0.0:
            raise ValueError(f"setting {c} or the X basis has zero probability")
        term = s_prime[c, 1 - alpha] + math.copysign(1.0, gamma) * dev(eps_A[c, alpha])
        total = total + gammas.p_U[alpha] * gamma * term / (p_c * p_B_X)
    total = total + dev(eps_A["ph"])
    out = np.maximum(total, 0.0)
    return float(out) if np.ndim(out) == 0 else out


def phase_error_rate(nph_upper, s1_lower):
    """``nph / s1`` clamped to ``[0, 1/2]``; 1/2 when ``s1`` is zero."""
    s1 = np.asarray(s1_lower, dtype=float)
    safe = np.where(s1 > 0.0, s1, 1.0)
    with np.errstate(over="ignore"):
        ratio = np.asarray(nph_upper) / safe
    out = np.where(s1 > 0.0, np.clip(ratio, 0.0, 0.5), 0.5)
    return float(out) if out.ndim == 0 else out

"""Source characterization: phase and intensity intervals, setting choices.

Phases of the three prepared states (``0Z``, ``1Z``, ``0X``) and the mean
photon numbers of the three intensity settings (``k1`` signal, ``k2`` and
``k3`` decoys) are only known to lie inside intervals. Pulses whose phase or
intensity escapes its interval are "tagged"; at most ``N_tag`` of them occur
except with probability ``p_fail``.

Intensity bounds may be numpy arrays so that a whole grid of candidate
intensities is processed in one call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import INTENSITIES, SETTINGS
from .numerics import poisson_pmf


class Side(str, Enum):
    """Which side of an interval bound is requested."""

    UPPER = "upper"
    LOWER = "lower"


@dataclass(frozen=True)
class PhaseIntervals:
    """Phase intervals (radians) of the three prepared states."""

    theta_L_0Z: float
    theta_U_0Z: float
    theta_L_1Z: float
    theta_U_1Z: float
    theta_L_0X: float
    theta_U_0X: float

    @classmethod
    def symmetric(cls, theta: float) -> "PhaseIntervals":
        """Intervals of half-width ``theta`` around 0, pi and pi/2."""
        return cls(
            -theta, theta, math.pi - theta, math.pi + theta,
            math.pi / 2 - theta, math.pi / 2 + theta,
        )

    def interval(self, c: str) -> tuple[float, float]:
        return getattr(self, f"theta_L_{c}"), getattr(self, f"theta_U_{c}")

    def symmetric_half_width(self, tol: float = 1e-12) -> float | None:
        """Common half-width if the box is symmetric around the ideal phases."""
        centres = {"0Z": 0.0, "1Z": math.pi, "0X": math.pi / 2}
        widths = []
        for c, centre in centres.items():
            lo, hi = self.interval(c)
            widths += [centre - lo, hi - centre]
        if max(widths) - min(widths) <= tol:
            return max(widths)
        return None


@dataclass(frozen=True)
class IntensityIntervals:
    """Lower (``minus``) and upper (``plus``) mean photon numbers per setting."""

    mu_minus_k1: float
    mu_plus_k1: float
    mu_minus_k2: float
    mu_plus_k2: float
    mu_minus_k3: float
    mu_plus_k3: float

    @classmethod
    def from_fluctuation(
        cls, mu_k1, mu_k2, r_k1: float, r_k2: float, mu_k3_upper: float = 1e-3
    ) -> "IntensityIntervals":
        """Relative fluctuation ``r`` around the nominal values; ``k3`` is [0, upper]."""
        return cls(
            mu_k1 * (1 - r_k1), mu_k1 * (1 + r_k1),
            mu_k2 * (1 - r_k2), mu_k2 * (1 + r_k2),
            0.0, mu_k3_upper,
        )

    def minus(self, k: str):
        return getattr(self, f"mu_minus_{k}")

    def plus(self, k: str):
        return getattr(self, f"mu_plus_{k}")


@dataclass(frozen=True)
class SourceSpec:
    """Full source characterization.

    Attributes:
        phases: Phase intervals.
        intensities: Intensity intervals.
        p_A_Z: Probability Alice picks the Z basis. ``0Z`` and ``1Z`` each get
            half of it and ``0X`` gets the rest.
        p_k1, p_k2, p_k3: Intensity-setting probabilities.
        N_tag: Upper bound on the number of tagged pulses.
        p_fail: Probability that the tag bound is violated.
    """

    phases: PhaseIntervals
    intensities: IntensityIntervals
    p_A_Z: float = 0.8
    p_k1: float = 0.8
    p_k2: float = 0.1
    p_k3: float = 0.1
    N_tag: int = 0
    p_fail: float = 0.0

    def p_setting(self, c: str) -> float:
        if c == "0X":
            return 1.0 - self.p_A_Z
        if c in ("0Z", "1Z"):
            return self.p_A_Z / 2.0
        raise KeyError(c)

    def p_intensity(self, k: str) -> float:
        return getattr(self, f"p_{k}")


@dataclass(frozen=True)
class Violation:
    """A violated source invariant."""

    code: str
    message: str


def decoy_conditions(intensities: IntensityIntervals):
    """Elementwise mask of the decoy feasibility conditions.

    Checks ``0 <= mu- <= mu+`` per setting, ``mu+_k3 < mu-_k2``,
    ``mu+_k2 + mu+_k3 < mu-_k1`` and ``mu+_k1 <= 1``.
    """
    iv = intensities
    ok = np.asarray(iv.mu_plus_k1 <= 1.0)
    ok = ok & (iv.mu_plus_k3 < iv.mu_minus_k2)
    ok = ok & (iv.mu_plus_k2 + iv.mu_plus_k3 < iv.mu_minus_k1)
    for k in INTENSITIES:
        ok = ok & (0.0 <= iv.minus(k)) & (iv.minus(k) <= iv.plus(k))
    return ok


def validate(spec: SourceSpec) -> list[Violation]:
    """List every violated invariant of ``spec`` (empty when valid).

    Intensity bounds are expected to be scalars here.
    """
    out: list[Violation] = []
    ph = spec.phases
    sixth = math.pi / 6
    ranges = {
        "0Z": (-sixth, 0.0, sixth),
        "1Z": (5 * sixth, math.pi, 7 * sixth),
        "0X": (2 * sixth, math.pi / 2, 4 * sixth),
    }
    for c, (lo_open, centre, hi_open) in ranges.items():
        lo, hi = ph.interval(c)
        if not lo_open < lo <= centre:
            out.append(Violation(
                f"phase_lower_{c}",
                f"theta_L_{c}={lo!r} must satisfy {lo_open:.6f} < theta_L <= {centre:.6f}",
            ))
        if not centre <= hi < hi_open:
            out.append(Violation(
                f"phase_upper_{c}",
                f"theta_U_{c}={hi!r} must satisfy {centre:.6f} <= theta_U < {hi_open:.6f}",
            ))
    pairs = (("0Z", "0X"), ("0X", "1Z"))
    for a, b in pairs:
        if ph.interval(a)[1] >= ph.interval(b)[0]:
            out.append(Violation(
                f"phase_overlap_{a}_{b}", f"phase intervals of {a} and {b} overlap",
            ))
    # 0Z wraps around to 2*pi on the circle; it must not reach 1Z from above.
    if ph.theta_L_0Z + 2 * math.pi <= ph.theta_U_1Z:
        out.append(Violation("phase_overlap_1Z_0Z", "phase intervals of 1Z and 0Z overlap"))

    iv = spec.intensities
    for k in INTENSITIES:
        lo, hi = iv.minus(k), iv.plus(k)
        if lo < 0.0:
            out.append(Violation(f"intensity_negative_{k}", f"mu_minus_{k}={lo!r} < 0"))
        if lo > hi:
            out.append(Violation(
                f"intensity_order_{k}", f"mu_minus_{k}={lo!r} exceeds mu_plus_{k}={hi!r}",
            ))
    if iv.mu_plus_k1 > 1.0:
        out.append(Violation(
            "intensity_signal_cap", f"mu_plus_k1={iv.mu_plus_k1!r} exceeds 1",
        ))
    if not iv.mu_plus_k3 < iv.mu_minus_k2:
        out.append(Violation(
            "decoy_k3_below_k2",
            f"mu_plus_k3={iv.mu_plus_k3!r} must be below mu_minus_k2={iv.mu_minus_k2!r}",
        ))
    if not iv.mu_plus_k2 + iv.mu_plus_k3 < iv.mu_minus_k1:
        out.append(Violation(
            "decoy_k2_k3_below_k1",
            "mu_plus_k2 + mu_plus_k3 must be below mu_minus_k1",
        ))

    probs = {"p_A_Z": spec.p_A_Z, "p_fail": spec.p_fail}
    probs.update({f"p_{k}": spec.p_intensity(k) for k in INTENSITIES})
    for name, value in probs.items():
        if not 0.0 <= value <= 1.0:
            out.append(Violation(f"probability_range_{name}", f"{name}={value!r} outside [0, 1]"))
    total = sum(spec.p_intensity(k) for k in INTENSITIES)
    if abs(total - 1.0) > 1e-12:
        out.append(Violation("intensity_probabilities_sum", f"p_k1+p_k2+p_k3={total!r} != 1"))
    if spec.N_tag < 0:
        out.append(Violation("tag_negative", f"N_tag={spec.N_tag!r} < 0"))
    return out


def pois_bound(n: int, k: str, side: Side, spec: SourceSpec):
    """Bound on the Poisson probability of ``n`` photons over the ``k`` interval.

    For ``n = 0`` the upper bound uses the smallest intensity and the lower bound
    the largest. For ``n >= 1`` it is the reverse, which is valid because
    ``mu**n exp(-mu)`` increases on [0, 1] and the signal cap keeps
    ``mu+ <= 1``.
    """
    if n < 0:
        raise ValueError(f"photon number must be >= 0, got {n!r}")
    side = Side(side)
    lo, hi = spec.intensities.minus(k), spec.intensities.plus(k)
    if n == 0:
        return poisson_pmf(0, lo if side is Side.UPPER else hi)
    return poisson_pmf(n, hi if side is Side.UPPER else lo)


def pois1_mixture(side: Side, spec: SourceSpec):
    """Intensity-averaged single-photon probability bound ``sum_k p_k Pois(1|k)``."""
    return sum(spec.p_intensity(k) * pois_bound(1, k, side, spec) for k in INTENSITIES)


__all__ = [
    "SETTINGS", "Side", "PhaseIntervals", "IntensityIntervals", "SourceSpec",
    "Violation", "decoy_conditions", "validate", "pois_bound", "pois1_mixture",
]

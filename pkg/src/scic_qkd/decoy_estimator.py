"""Decoy-state bounds on single-photon detection counts.

Three bounds are provided:

* ``s1_lower_ZZ``: lower bound on untagged single-photon detections in the
  sifted key (both parties in Z).
* ``sx_upper``: upper bound on single-photon detections of setting ``c`` with
  X-basis outcome ``y``, built from the two weakest intensities.
* ``sx_lower``: the matching lower bound, using all three intensities.

Each observed count is shifted by a Modified Azuma deviation and the bound
carries a trailing deviation term. That trailing term is added with a positive
sign by default. Passing ``conservative_trailing_terms=True`` subtracts it on
the lower bounds instead. Tagged pulses are removed by subtracting ``N_tag``
from one of the counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import BITS, INTENSITIES, SETTINGS
from .channel_sim import ObservedCounts
from .concentration import modified_azuma_term
from .numerics import poisson_pmf
from .source_model import Side, SourceSpec, pois1_mixture

ORACLE_MAX_PHOTONS = 20


@dataclass(frozen=True)
class DecoyEpsilons:
    """Failure probabilities of the Modified Azuma corrections.

    Attributes:
        eps_MA_Zk: Per-intensity terms of the Z-basis bound, keyed by ``k``.
        eps_MA_Z1: Trailing term of the Z-basis bound.
        eps_MA_ckyX: Per-intensity terms of the X-basis bounds, keyed by
            ``(c, k, y)``.
        eps_MA_c1yX: Trailing terms of the X-basis bounds, keyed by ``(c, y)``.
    """

    eps_MA_Zk: dict
    eps_MA_Z1: float
    eps_MA_ckyX: dict
    eps_MA_c1yX: dict

    def __post_init__(self) -> None:
        values = [*self.eps_MA_Zk.values(), self.eps_MA_Z1,
                  *self.eps_MA_ckyX.values(), *self.eps_MA_c1yX.values()]
        for v in values:
            if not 0.0 < v < 1.0:
                raise ValueError(f"decoy epsilon must lie in (0, 1), got {v!r}")

    @classmethod
    def uniform(cls, eps_z: float, eps_x: float) -> "DecoyEpsilons":
        """Same value for every Z-side term and for every X-side term."""
        return cls(
            eps_MA_Zk={k: eps_z for k in INTENSITIES},
            eps_MA_Z1=eps_z,
            eps_MA_ckyX={(c, k, y): eps_x for c in SETTINGS for k in INTENSITIES for y in BITS},
            eps_MA_c1yX={(c, y): eps_x for c in SETTINGS for y in BITS},
        )


@dataclass
class SinglePhotonBounds:
    """Clamped single-photon bounds with their raw values.

    ``clamped`` holds the names of bounds that were pulled back into
    ``[0, ceiling]``. With array inputs a name is listed if any element moved.
    """

    s1L_ZZ: object
    sU_c1yX: dict
    sL_c1yX: dict
    raw: dict = field(default_factory=dict)
    clamped: list = field(default_factory=list)


def _deviation(eps, q, n, asymptotic):
    if asymptotic:
        return 0.0
    return modified_azuma_term(eps, q, n)


def _check_positive(value, what):
    if np.any(np.asarray(value) <= 0.0):
        raise ValueError(f"decoy conditions violated: {what} is not positive")


def _lower_combination(S, spec, g, g_trailing, trailing_sign):
    """Three-intensity lower bound shared by the Z and X estimates.

    ``S`` maps intensity to observed count (tag correction already applied to
    ``k2``), ``g`` maps intensity to its deviation term.
    """
    iv = spec.intensities
    p = spec.p_intensity
    denominator = (iv.mu_plus_k2 - iv.mu_minus_k3) * (
        iv.mu_minus_k1 - iv.mu_plus_k2 - iv.mu_minus_k3
    )
    _check_positive(denominator, "lower-bound denominator")
    prefactor = iv.mu_minus_k1 * pois1_mixture(Side.LOWER, spec) / denominator
    braces = (
        np.exp(iv.mu_minus_k2) * (S["k2"] - g["k2"]) / p("k2")
        - np.exp(iv.mu_plus_k3) * (S["k3"] + g["k3"]) / p("k3")
        - (iv.mu_plus_k2 ** 2 - iv.mu_minus_k3 ** 2) / iv.mu_minus_k1 ** 2
        * np.exp(iv.mu_plus_k1) * (S["k1"] + g["k1"]) / p("k1")
    )
    return prefactor * braces + trailing_sign * g_trailing


def _upper_combination(S, spec, g, g_trailing):
    """Two-intensity upper bound; ``S['k3']`` already carries the tag correction."""
    iv = spec.intensities
    p = spec.p_intensity
    denominator = (
        np.exp(-iv.mu_minus_k2 - iv.mu_minus_k3) * iv.mu_minus_k2
        - np.exp(-iv.mu_plus_k2 - iv.mu_plus_k3) * iv.mu_plus_k3
    )
    _check_positive(denominator, "upper-bound denominator")
    numerator = (
        (S["k2"] + g["k2"]) * np.exp(-iv.mu_minus_k3) / p("k2")
        - (S["k3"] - g["k3"]) * np.exp(-iv.mu_plus_k2) / p("k3")
    )
    return numerator / denominator * pois1_mixture(Side.UPPER, spec) + g_trailing


def _clamp(raw, ceiling):
    value = np.clip(raw, 0.0, ceiling)
    moved = bool(np.any(value != raw))
    return (float(value) if np.ndim(value) == 0 else value), moved


def s1_lower_ZZ_raw(counts, spec, eps, p_B_Z, *, asymptotic=False,
                    conservative_trailing_terms=False):
    """Unclamped lower bound on sifted single-photon detections."""
    g = {k: _deviation(eps.eps_MA_Zk[k], p_B_Z, counts.N_det, asymptotic) for k in INTENSITIES}
    g_tr = _deviation(eps.eps_MA_Z1, p_B_Z, counts.N_det, asymptotic)
    S = dict(counts.S_ZZ)
    S["k2"] = S["k2"] - spec.N_tag
    return _lower_combination(S, spec, g, g_tr, -1.0 if conservative_trailing_terms else 1.0)


def s1_lower_ZZ(counts: ObservedCounts, spec: SourceSpec, eps: DecoyEpsilons, p_B_Z: float,
                *, asymptotic: bool = False, conservative_trailing_terms: bool = False):
    """Lower bound on untagged single-photon detections with both bases Z.

    Deviations use ``q = p_B_Z`` and ``n = N_det``. The result is clamped to
    ``[0, sift_len]``.
    """
    raw = s1_lower_ZZ_raw(counts, spec, eps, p_B_Z, asymptotic=asymptotic,
                          conservative_trailing_terms=conservative_trailing_terms)
    return _clamp(raw, counts.sift_len)[0]


def _x_counts(counts, c, y):
    return {k: counts.S[c, k, y, "X"] for k in INTENSITIES}


def _x_ceiling(counts, c, y):
    return sum(counts.S[c, k, y, "X"] for k in INTENSITIES)


def sx_upper_raw(c, y, counts, spec, eps, p_B_X, *, asymptotic=False):
    """Unclamped upper bound on single-photon ``(c, y, X)`` detections."""
    g = {k: _deviation(eps.eps_MA_ckyX[c, k, y], p_B_X, counts.N_det, asymptotic)
         for k in INTENSITIES}
    g_tr = _deviation(eps.eps_MA_c1yX[c, y], p_B_X, counts.N_det, asymptotic)
    S = _x_counts(counts, c, y)
    S["k3"] = S["k3"] - spec.N_tag
    return _upper_combination(S, spec, g, g_tr)


def sx_upper(c: str, y: int, counts: ObservedCounts, spec: SourceSpec, eps: DecoyEpsilons,
             p_B_X: float, *, asymptotic: bool = False):
    """Upper bound on untagged single-photon detections of ``c`` with X outcome ``y``.

    Clamped to ``[0, sum_k S_{c,k,y,X}]``.
    """
    raw = sx_upper_raw(c, y, counts, spec, eps, p_B_X, asymptotic=asymptotic)
    return _clamp(raw, _x_ceiling(counts, c, y))[0]


def sx_lower_raw(c, y, counts, spec, eps, p_B_X, *, asymptotic=False,
                 conservative_trailing_terms=False):
    """Unclamped lower bound on single-photon ``(c, y, X)`` detections."""
    g = {k: _deviation(eps.eps_MA_ckyX[c, k, y], p_B_X, counts.N_det, asymptotic)
         for k in INTENSITIES}
    g_tr = _deviation(eps.eps_MA_c1yX[c, y], p_B_X, counts.N_det, asymptotic)
    S = _x_counts(counts, c, y)
    S["k2"] = S["k2"] - spec.N_tag
    return _lower_combination(S, spec, g, g_tr, -1.0 if conservative_trailing_terms else 1.0)


def sx_lower(c: str, y: int, counts: ObservedCounts, spec: SourceSpec, eps: DecoyEpsilons,
             p_B_X: float, *, asymptotic: bool = False, conservative_trailing_terms: bool = False):
    """Lower bound on untagged single-photon detections of ``c`` with X outcome ``y``."""
    raw = sx_lower_raw(c, y, counts, spec, eps, p_B_X, asymptotic=asymptotic,
                       conservative_trailing_terms=conservative_trailing_terms)
    return _clamp(raw, _x_ceiling(counts, c, y))[0]


def estimate_single_photon_bounds(counts, spec, eps, p_B_Z, p_B_X, *, asymptotic=False,
                                  conservative_trailing_terms=False) -> SinglePhotonBounds:
    """All three bounds for every ``(c, y)``, with clamping recorded."""
    flags = dict(asymptotic=asymptotic)
    raw = {"s1L_ZZ": s1_lower_ZZ_raw(counts, spec, eps, p_B_Z,
                                     conservative_trailing_terms=conservative_trailing_terms,
                                     **flags)}
    clamped = []
    s1, moved = _clamp(raw["s1L_ZZ"], counts.sift_len)
    if moved:
        clamped.append("s1L_ZZ")
    upper, lower = {}, {}
    for c in SETTINGS:
        for y in BITS:
            ceiling = _x_ceiling(counts, c, y)
            raw["sU", c, y] = sx_upper_raw(c, y, counts, spec, eps, p_B_X, **flags)
            raw["sL", c, y] = sx_lower_raw(
                c, y, counts, spec, eps, p_B_X,
                conservative_trailing_terms=conservative_trailing_terms, **flags)
            upper[c, y], moved_u = _clamp(raw["sU", c, y], ceiling)
            lower[c, y], moved_l = _clamp(raw["sL", c, y], ceiling)
            if moved_u:
                clamped.append(f"sU_{c}_{y}")
            if moved_l:
                clamped.append(f"sL_{c}_{y}")
    return SinglePhotonBounds(s1L_ZZ=s1, sU_c1yX=upper, sL_c1yX=lower, raw=raw, clamped=clamped)


def oracle_single_photon_counts(yields: dict, spec: SourceSpec, N_sent: float, mu: dict,
                                p_B: float, basis: str = "X"):
    """Expected counts from an explicit photon-number yield table.

    Brute-force reference for the decoy bounds. The detection probability of a
    pulse with ``n`` photons from setting ``c`` with outcome ``y`` is
    ``yields[c, n, y]``, the same for every intensity. Photon numbers above
    ``ORACLE_MAX_PHOTONS`` are dropped; at ``mu <= 1`` the neglected tail is
    below 1e-19.

    Args:
        yields: Map ``(c, n, y) -> probability`` for ``n = 0..20``. Settings
            missing from the table contribute nothing.
        spec: Source whose intervals must contain ``mu``.
        N_sent: Number of pulses.
        mu: Actual intensity per setting ``k``.
        p_B: Probability of Bob's basis ``basis``.
        basis: ``"X"`` or ``"Z"``.

    Returns:
        ``(counts, true_S1)``. ``counts`` is an ``ObservedCounts`` whose ``S``
        holds the cells of ``basis`` and whose ``S_ZZ`` is filled for Z.
        ``true_S1`` maps ``(c, y)`` to the single-photon part of those counts.
    """
    iv = spec.intensities
    for k in INTENSITIES:
        if not iv.minus(k) - 1e-15 <= mu[k] <= iv.plus(k) + 1e-15:
            raise ValueError(f"intensity {k}={mu[k]!r} outside its interval")
    settings = sorted({key[0] for key in yields}, key=SETTINGS.index)
    pmf = {(n, k): poisson_pmf(n, mu[k]) for n in range(ORACLE_MAX_PHOTONS + 1) for k in INTENSITIES}
    S, true_S1 = {}, {}
    for c in settings:
        for y in BITS:
            total_single = 0.0
            for k in INTENSITIES:
                weight = N_sent * spec.p_setting(c) * p_B * spec.p_intensity(k)
                S[c, k, y, basis] = weight * sum(
                    pmf[n, k] * yields.get((c, n, y), 0.0) for n in range(ORACLE_MAX_PHOTONS + 1)
                )
                total_single += weight * pmf[1, k] * yields.get((c, 1, y), 0.0)
            true_S1[c, y] = total_single
    S_ZZ = {k: 0.0 for k in INTENSITIES}
    if basis == "Z":
        S_ZZ = {k: sum(S.get((c, k, y, "Z"), 0.0) for c in ("0Z", "1Z") for y in BITS)
                for k in INTENSITIES}
    N_det = sum(S.values())
    counts = ObservedCounts(S_ZZ=S_ZZ, S=S, N_det=N_det, sift_len=sum(S_ZZ.values()),
                            e_bit=0.0, N_sent=N_sent)
    return counts, true_S1

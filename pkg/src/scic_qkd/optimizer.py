"""Intensity optimization and distance / block-size scans.

The whole estimation chain (counts, decoy bounds, phase errors, key length) is
written with numpy broadcasting, so a grid of candidate intensities is
evaluated in a single pass. The search is a deterministic coarse grid followed
by two local refinements at half the step each.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import BITS, SETTINGS
from .channel_sim import ChannelSpec, simulate_counts
from .decoy_estimator import estimate_single_photon_bounds
from .key_length import (EpsilonBudget, KeyRateResult, default_budget, ec_cost,
                         raw_key_length)
from .phase_error import GAMMA_KEYS, build_gamma_set, n_ph_upper, phase_error_rate, select_s_prime
from .source_model import (IntensityIntervals, PhaseIntervals, SourceSpec, decoy_conditions,
                           validate)

COARSE_STEP_K1 = 0.05
COARSE_STEP_K2 = 0.005
REFINEMENT_PASSES = 2
_ROUND = 12


@dataclass(frozen=True)
class SourceTemplate:
    """Source parameters that stay fixed while intensities are optimized.

    ``r_k1`` and ``r_k2`` are relative intensity fluctuations. The weakest
    decoy is sent as vacuum with the interval ``[0, mu_k3_upper]``.
    """

    phases: PhaseIntervals = field(default_factory=lambda: PhaseIntervals.symmetric(0.03))
    r_k1: float = 0.03
    r_k2: float = 0.03
    mu_k3_upper: float = 1e-3
    p_A_Z: float = 0.8
    p_k1: float = 0.8
    p_k2: float = 0.1
    p_k3: float = 0.1

    def build(self, mu_k1, mu_k2, N_tag: int = 0, p_fail: float = 0.0) -> SourceSpec:
        intensities = IntensityIntervals.from_fluctuation(
            mu_k1, mu_k2, self.r_k1, self.r_k2, self.mu_k3_upper)
        return SourceSpec(phases=self.phases, intensities=intensities, p_A_Z=self.p_A_Z,
                          p_k1=self.p_k1, p_k2=self.p_k2, p_k3=self.p_k3,
                          N_tag=N_tag, p_fail=p_fail)


@dataclass(frozen=True)
class TaggingCase:
    """Tagged-pulse budget ``N_tag = ceil(rate * N_sent)``."""

    name: str
    rate: float = 0.0

    def n_tag(self, N_sent: float) -> int:
        if self.rate < 0:
            raise ValueError("tagging rate must be nonnegative")
        return int(math.ceil(self.rate * N_sent)) if self.rate > 0 else 0


CASE_I = TaggingCase("I", 0.0)
CASE_II = TaggingCase("II", 1e-7)


@dataclass(frozen=True)
class Scenario:
    """Everything needed to evaluate a key rate apart from the two intensities."""

    source: SourceTemplate = field(default_factory=SourceTemplate)
    channel: ChannelSpec = field(default_factory=ChannelSpec)
    budget: EpsilonBudget = field(default_factory=default_budget)
    N_sent: float = 1e12
    tagging: TaggingCase = CASE_I
    asymptotic: bool = False
    gamma_mode: str = "auto"
    conservative_trailing_terms: bool = False

    @property
    def mode(self) -> str:
        return "asymptotic" if self.asymptotic else "finite"


def evaluate_grid(scenario: Scenario, mu_k1, mu_k2) -> dict:
    """Evaluate the full chain on arrays of intensities.

    Infeasible points (decoy conditions violated) get ``feasible=False`` and a
    raw key length of ``-inf``.

    Returns:
        Dict of arrays keyed by ``s1L, nphU, e_phU, e_bit, N_det, lambda_EC,
        raw_ell, ell, feasible``.
    """
    m1 = np.atleast_1d(np.asarray(mu_k1, dtype=float))
    m2 = np.atleast_1d(np.asarray(mu_k2, dtype=float))
    m1, m2 = np.broadcast_arrays(m1, m2)
    src = scenario.source
    N = scenario.N_sent
    n_tag = scenario.tagging.n_tag(N)
    p_fail = scenario.budget.p_fail
    feasible = decoy_conditions(src.build(m1, m2).intensities) & (m1 > 0) & (m2 > 0)
    keys = ("s1L", "nphU", "e_phU", "e_bit", "N_det", "lambda_EC", "raw_ell", "ell")
    out = {key: np.full(m1.shape, np.nan) for key in keys}
    out["raw_ell"][:] = -np.inf
    out["feasible"] = feasible
    if not feasible.any():
        return out
    a, b = m1[feasible], m2[feasible]
    spec = src.build(a, b, N_tag=n_tag, p_fail=p_fail)
    channel = scenario.channel
    counts = simulate_counts(N, spec, channel, {"k1": a, "k2": b, "k3": 0.0})
    budget = scenario.budget
    bounds = estimate_single_photon_bounds(
        counts, spec, budget.decoy, channel.p_B_Z, channel.p_B_X,
        asymptotic=scenario.asymptotic,
        conservative_trailing_terms=scenario.conservative_trailing_terms)
    gammas = build_gamma_set(src.phases, src.p_A_Z, channel.p_B_Z, scenario.gamma_mode)
    selection = {key: gammas.selects_upper(*key) for key in GAMMA_KEYS}
    active = {key: gammas.gamma_U[key] != 0.0 for key in GAMMA_KEYS}
    consumed = budget.phase_total(selection, active)
    if consumed > budget.eps_PH * (1.0 + 1e-12):
        raise ValueError(f"phase-side failure terms {consumed!r} exceed eps_PH={budget.eps_PH!r}")
    s_prime = select_s_prime(gammas, bounds.sU_c1yX, bounds.sL_c1yX)
    nph = n_ph_upper(s_prime, gammas, counts, spec, channel.p_B_X, budget.eps_A,
                     asymptotic=scenario.asymptotic)
    nph = np.broadcast_to(nph, a.shape)
    s1 = np.broadcast_to(bounds.s1L_ZZ, a.shape)
    finite = not scenario.asymptotic
    e_bit = np.broadcast_to(counts.e_bit, a.shape)
    lam = ec_cost(counts.sift_len, np.minimum(e_bit, 0.5), budget.eps_c, include_constant=finite)
    raw = raw_key_length(s1, nph, budget, lam, include_constant=finite)
    aborted = (s1 <= 0.0) | (raw <= 0.0)
    values = {
        "s1L": s1, "nphU": nph, "e_phU": phase_error_rate(nph, s1), "e_bit": e_bit,
        "N_det": counts.N_det, "lambda_EC": lam, "raw_ell": raw,
        "ell": np.where(aborted, 0.0, raw),
    }
    for key, value in values.items():
        out[key][feasible] = np.broadcast_to(value, a.shape)
    return out


def _result_from_grid(scenario: Scenario, grid: dict, i: int, mu_k1: float, mu_k2: float,
                      violations=()) -> KeyRateResult:
    feasible = bool(grid["feasible"][i])
    ell = float(grid["ell"][i]) if feasible else 0.0
    return KeyRateResult(
        s1L=float(grid["s1L"][i]) if feasible else 0.0,
        nphU=float(grid["nphU"][i]) if feasible else 0.0,
        e_phU=float(grid["e_phU"][i]) if feasible else 0.5,
        lambda_EC=float(grid["lambda_EC"][i]) if feasible else 0.0,
        ell=ell,
        rate=ell / scenario.N_sent,
        mu_k1=float(mu_k1), mu_k2=float(mu_k2),
        aborted=(not feasible) or ell <= 0.0,
        e_bit=float(grid["e_bit"][i]) if feasible else 0.0,
        N_det=float(grid["N_det"][i]) if feasible else 0.0,
        N_sent=float(scenario.N_sent),
        length_km=float(scenario.channel.fiber_length_km),
        case=scenario.tagging.name,
        mode=scenario.mode,
        raw_ell=float(grid["raw_ell"][i]),
        violations=list(violations),
    )


def evaluate(scenario: Scenario, mu_k1: float, mu_k2: float) -> KeyRateResult:
    """Key rate at fixed nominal intensities.

    Infeasible intensities give an aborted result carrying the violation list.
    """
    spec = scenario.source.build(mu_k1, mu_k2, scenario.tagging.n_tag(scenario.N_sent),
                                 scenario.budget.p_fail)
    violations = validate(spec)
    grid = evaluate_grid(scenario, mu_k1, mu_k2)
    return _result_from_grid(scenario, grid, 0, mu_k1, mu_k2, violations)


def _coarse_grid(r_k1: float):
    top = 1.0 / (1.0 + r_k1)
    m1_values = np.round(COARSE_STEP_K1 * np.arange(1, int(top / COARSE_STEP_K1 + 1e-9) + 1), _ROUND)
    pairs = []
    for m1 in m1_values:
        count = int(m1 / 2 / COARSE_STEP_K2 + 1e-9)
        m2_values = np.round(COARSE_STEP_K2 * np.arange(1, count + 1), _ROUND)
        pairs.extend((m1, m2) for m2 in m2_values)
    arr = np.array(pairs, dtype=float)
    return arr[:, 0], arr[:, 1]


def _local_grid(best1: float, best2: float, h1: float, h2: float, r_k1: float):
    offsets = np.arange(-2, 3)
    g1, g2 = np.meshgrid(best1 + offsets * h1, best2 + offsets * h2, indexing="ij")
    g1, g2 = np.round(g1.ravel(), _ROUND), np.round(g2.ravel(), _ROUND)
    keep = (g1 > 0) & (g2 > 0) & (g1 <= 1.0 / (1.0 + r_k1)) & (g2 <= g1 / 2 + 1e-12)
    return g1[keep], g2[keep]


def _best_index(m1, m2, values) -> int:
    """Largest value; ties go to smaller ``mu_k1`` then smaller ``mu_k2``."""
    order = np.lexsort((m2, m1))
    return int(order[np.argmax(values[order])])


def optimize(scenario: Scenario) -> KeyRateResult:
    """Maximize the key length over the two free intensities.

    The objective is the key length before flooring at zero, so that rows with
    no positive key still report the least-bad intensities. Every probed point
    is kept and the overall best is returned, hence the result is never worse
    than any probe.
    """
    r1 = scenario.source.r_k1
    m1, m2 = _coarse_grid(r1)
    grid = evaluate_grid(scenario, m1, m2)
    probes1, probes2, values = [m1], [m2], [grid["raw_ell"]]
    i = _best_index(m1, m2, grid["raw_ell"])
    best1, best2 = m1[i], m2[i]
    h1, h2 = COARSE_STEP_K1, COARSE_STEP_K2
    for _ in range(REFINEMENT_PASSES):
        h1, h2 = h1 / 2, h2 / 2
        l1, l2 = _local_grid(best1, best2, h1, h2, r1)
        local = evaluate_grid(scenario, l1, l2)
        probes1.append(l1)
        probes2.append(l2)
        values.append(local["raw_ell"])
        a1, a2, av = np.concatenate(probes1), np.concatenate(probes2), np.concatenate(values)
        j = _best_index(a1, a2, av)
        best1, best2 = a1[j], a2[j]
    return evaluate(scenario, float(best1), float(best2))


def scan(template: Scenario, lengths, N_sents, cases=(CASE_I, CASE_II), *,
         include_finite: bool = True, include_asymptotic: bool = True) -> list[KeyRateResult]:
    """Optimized rows over distances, block sizes and tagging cases.

    Finite rows come first, ordered by case, then ``N_sent``, then length.
    Asymptotic rows follow, one curve per case, evaluated at the largest
    ``N_sent`` (their rate does not depend on it).
    """
    lengths, N_sents = list(lengths), list(N_sents)
    if not lengths or not N_sents:
        raise ValueError("lengths and N_sents must be nonempty")
    rows = []
    if include_finite:
        for case in cases:
            for N in N_sents:
                for L in lengths:
                    sc = replace(template, channel=replace(template.channel, fiber_length_km=L),
                                 N_sent=N, tagging=case, asymptotic=False)
                    rows.append(optimize(sc))
    if include_asymptotic:
        for case in cases:
            for L in lengths:
                sc = replace(template, channel=replace(template.channel, fiber_length_km=L),
                             N_sent=max(N_sents), tagging=case, asymptotic=True)
                rows.append(optimize(sc))
    return rows


__all__ = [
    "SourceTemplate", "TaggingCase", "CASE_I", "CASE_II", "Scenario", "evaluate_grid",
    "evaluate", "optimize", "scan", "SETTINGS", "BITS",
]

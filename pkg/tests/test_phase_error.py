import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scic_qkd.channel_sim import ChannelSpec, detection_prob, simulate_counts, transmittance
from scic_qkd.numerics import poisson_pmf
from scic_qkd.phase_error import (GAMMA_KEYS, GammaSet, build_gamma_set, gamma_general,
                                  gamma_upper_general, gamma_upper_restricted, n_ph_upper,
                                  p_upper, phase_error_rate, select_s_prime)
from scic_qkd.key_length import default_budget
from scic_qkd.optimizer import SourceTemplate
from scic_qkd.source_model import PhaseIntervals

IDEAL = {(0, "0Z"): 0.0, (0, "1Z"): 0.0, (0, "0X"): 1.0,
         (1, "0Z"): 1.0, (1, "1Z"): 1.0, (1, "0X"): -1.0}
# mpmath references at theta = 0.03.
G00Z_RESTRICTED = 0.029150622718034982014
G00Z_GENERAL = 0.029134699936359671341
G10X_RESTRICTED = -0.94175605583403308502
P_UPPER_003 = 0.32959856006479861145

RANGES = {
    (0, "0Z"): (0.0, math.sqrt(2) - 1), (0, "1Z"): (0.0, math.sqrt(2) - 1),
    (0, "0X"): (1.0, math.inf), (1, "0Z"): (1.0, 3 + math.sqrt(6)),
    (1, "1Z"): (1.0, 3 + math.sqrt(6)), (1, "0X"): (-1.0, -1.0 / 3.0),
}


def in_range(key, value):
    lo, hi = RANGES[key]
    return lo - 1e-12 <= value < hi


def test_ideal_angles_agree_everywhere():
    box = PhaseIntervals.symmetric(0.0)
    for key, expected in IDEAL.items():
        assert gamma_general(*key, 0.0, math.pi, math.pi / 2) == pytest.approx(expected, abs=1e-12)
        assert gamma_upper_restricted(*key, 0.0) == pytest.approx(expected, abs=1e-12)
        assert gamma_upper_general(*key, box) == pytest.approx(expected, abs=1e-12)


def test_reference_values():
    assert gamma_upper_restricted(0, "0Z", 0.03) == pytest.approx(G00Z_RESTRICTED, rel=1e-13)
    assert gamma_upper_restricted(1, "0X", 0.03) == pytest.approx(G10X_RESTRICTED, rel=1e-13)
    assert gamma_general(0, "0Z", -0.03, math.pi - 0.03, math.pi / 2 + 0.03) == pytest.approx(
        G00Z_GENERAL, rel=1e-12)
    assert gamma_upper_general(0, "0Z", PhaseIntervals.symmetric(0.03)) == pytest.approx(
        G00Z_GENERAL, rel=1e-12)


def test_restricted_domain():
    with pytest.raises(ValueError):
        gamma_upper_restricted(0, "0Z", math.pi / 6)
    with pytest.raises(ValueError):
        gamma_upper_restricted(0, "0Z", -0.01)


def test_singularity_guard():
    with pytest.raises(ZeroDivisionError):
        gamma_general(0, "0X", 0.0, 0.0, 0.0)


def test_restricted_ranges_on_grid():
    for theta in np.arange(0.0, math.pi / 6, 1e-3):
        for key in GAMMA_KEYS:
            assert in_range(key, gamma_upper_restricted(*key, theta)), (key, theta)


@pytest.mark.parametrize("theta", np.round(np.arange(0.01, 0.521, 0.01), 2))
def test_general_below_restricted_on_symmetric_boxes(theta):
    box = PhaseIntervals.symmetric(theta)
    for key in GAMMA_KEYS:
        general = gamma_upper_general(*key, box)
        assert general <= gamma_upper_restricted(*key, theta) + 1e-12
        assert in_range(key, general)


def test_asymmetric_box_values_are_finite_and_in_range():
    box = replace(PhaseIntervals.symmetric(0.03), theta_U_0Z=0.05)
    for key in GAMMA_KEYS:
        value = gamma_upper_general(*key, box)
        assert math.isfinite(value) and in_range(key, value)


def test_zero_x_midpoint_cases():
    mid_inside = PhaseIntervals.symmetric(0.1)
    shifted_low = PhaseIntervals(-0.1, 0.1, math.pi - 0.1, math.pi + 0.1, 1.2, 1.3)
    shifted_high = PhaseIntervals(-0.1, 0.1, math.pi - 0.1, math.pi + 0.1, 1.58, 1.9)
    for box in (mid_inside, shifted_low, shifted_high):
        u = gamma_upper_general(1, "0X", box)
        for x in np.linspace(box.theta_L_0X, box.theta_U_0X, 41):
            assert gamma_general(1, "0X", box.theta_L_0Z, box.theta_U_1Z, x) <= u + 1e-12


def random_box(rng):
    e = math.pi / 6 * 0.999
    return PhaseIntervals(-rng.uniform(0, e), rng.uniform(0, e),
                          math.pi - rng.uniform(0, e), math.pi + rng.uniform(0, e),
                          math.pi / 2 - rng.uniform(0, e), math.pi / 2 + rng.uniform(0, e))


def test_corner_bounds_dominate_random_interiors():
    rng = np.random.default_rng(2024)
    for _ in range(300):
        box = random_box(rng)
        bounds = {key: gamma_upper_general(*key, box) for key in GAMMA_KEYS}
        for _ in range(3):
            t0 = rng.uniform(box.theta_L_0Z, box.theta_U_0Z)
            t1 = rng.uniform(box.theta_L_1Z, box.theta_U_1Z)
            tx = rng.uniform(box.theta_L_0X, box.theta_U_0X)
            for key in GAMMA_KEYS:
                assert gamma_general(*key, t0, t1, tx) <= bounds[key] + 1e-12


def test_restricted_forms_dominate_symmetric_interiors():
    rng = np.random.default_rng(7)
    for _ in range(300):
        theta = rng.uniform(0, math.pi / 6 * 0.999)
        t0, t1, tx = rng.uniform(-theta, theta, 3) + np.array([0, math.pi, math.pi / 2])
        for key in GAMMA_KEYS:
            assert gamma_general(*key, t0, t1, tx) <= gamma_upper_restricted(*key, theta) + 1e-12


def test_p_upper_values():
    for alpha in (0, 1):
        assert p_upper(alpha, 0.0, 0.8, 0.8) == pytest.approx(0.32)
        assert p_upper(alpha, 0.03, 0.8, 0.8) == pytest.approx(P_UPPER_003, rel=1e-13)
        assert p_upper(alpha, PhaseIntervals.symmetric(0.03), 0.8, 0.8) == pytest.approx(
            P_UPPER_003, rel=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_p_upper_matches_brute_force_maximum(seed):
    rng = np.random.default_rng(seed)
    box = random_box(rng)
    t0 = np.linspace(box.theta_L_0Z, box.theta_U_0Z, 101)
    t1 = np.linspace(box.theta_L_1Z, box.theta_U_1Z, 101)
    half = (t0[:, None] - t1[None, :]) / 2
    best = {0: ((1 + np.cos(half)) / 2).max(), 1: ((1 - np.cos(half)) / 2).max()}
    for alpha in (0, 1):
        assert p_upper(alpha, box, 1.0, 1.0) == pytest.approx(best[alpha], rel=1e-12)


def test_build_gamma_set_modes():
    sym = PhaseIntervals.symmetric(0.03)
    assert build_gamma_set(sym, 0.8, 0.8).mode == "restricted"
    asym = replace(sym, theta_U_0Z=0.05)
    assert build_gamma_set(asym, 0.8, 0.8).mode == "general"
    assert build_gamma_set(sym, 0.8, 0.8, "general").mode == "general"
    with pytest.raises(ValueError):
        build_gamma_set(asym, 0.8, 0.8, "restricted")


def _pipeline_pieces(theta=0.03):
    spec = SourceTemplate(phases=PhaseIntervals.symmetric(theta)).build(0.5, 0.1)
    counts = simulate_counts(1e12, spec, ChannelSpec(25.0), {"k1": 0.5, "k2": 0.1, "k3": 0.0})
    gammas = build_gamma_set(spec.phases, 0.8, 0.8)
    return spec, counts, gammas


def test_zero_counts_asymptotic_gives_zero():
    spec, counts, gammas = _pipeline_pieces()
    s_prime = {(c, y): 0.0 for c in ("0Z", "1Z", "0X") for y in (0, 1)}
    assert n_ph_upper(s_prime, gammas, counts, spec, 0.2, default_budget().eps_A,
                      asymptotic=True) == 0.0


def test_exact_single_photon_counts_give_no_phase_errors():
    """Ideal states, noiseless channel, exact single-photon X counts."""
    spec, _, gammas = _pipeline_pieces(0.0)
    channel = ChannelSpec(10.0, p_dark=0.0, e_mis=0.0)
    mu = {"k1": 0.5, "k2": 0.1, "k3": 0.0}
    counts = simulate_counts(1e12, spec, channel, mu)
    eta = transmittance(channel)
    mu_single = -2.0 * np.log(1.0 - eta / 2.0) / eta
    p1 = sum(spec.p_intensity(k) * poisson_pmf(1, mu[k]) for k in mu)
    exact = {(c, y): 1e12 * spec.p_setting(c) * 0.2 * p1
             * detection_prob(c, "k1", "X", y, mu_single, channel)
             for c in ("0Z", "1Z", "0X") for y in (0, 1)}
    nph = n_ph_upper(exact, gammas, counts, spec, 0.2, default_budget().eps_A, asymptotic=True)
    assert nph == pytest.approx(0.0, abs=1e-6 * exact["0X", 0])


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(GAMMA_KEYS), st.floats(0.0, 1e6))
def test_n_ph_monotone_in_selected_counts(key, bump):
    spec, counts, gammas = _pipeline_pieces()
    eps_A = default_budget().eps_A
    base = {(c, y): 1e6 for c in ("0Z", "1Z", "0X") for y in (0, 1)}
    alpha, c = key
    moved = dict(base)
    if gammas.selects_upper(alpha, c):
        moved[c, 1 - alpha] += bump
    else:
        moved[c, 1 - alpha] = max(0.0, moved[c, 1 - alpha] - bump)
    assert n_ph_upper(moved, gammas, counts, spec, 0.2, eps_A) >= n_ph_upper(
        base, gammas, counts, spec, 0.2, eps_A) - 1e-6


def test_select_s_prime_uses_sign_rule():
    _, _, gammas = _pipeline_pieces()
    upper = {(c, y): 2.0 for c in ("0Z", "1Z", "0X") for y in (0, 1)}
    lower = {(c, y): 1.0 for c in ("0Z", "1Z", "0X") for y in (0, 1)}
    chosen = select_s_prime(gammas, upper, lower)
    assert chosen["0X", 0] == 1.0  # Gamma[1, 0X] is negative
    assert chosen["0X", 1] == 2.0 and chosen["0Z", 0] == 2.0


def test_n_ph_rejects_zero_setting_probability():
    spec, counts, gammas = _pipeline_pieces()
    s_prime = {(c, y): 1.0 for c in ("0Z", "1Z", "0X") for y in (0, 1)}
    with pytest.raises(ValueError):
        n_ph_upper(s_prime, gammas, counts, replace(spec, p_A_Z=1.0), 0.2, default_budget().eps_A)


def test_phase_error_rate_clamps():
    assert phase_error_rate(5e4, 1e6) == pytest.approx(0.05)
    assert phase_error_rate(9e5, 1e6) == 0.5
    assert phase_error_rate(-1.0, 1e6) == 0.0
    assert phase_error_rate(1.0, 0.0) == 0.5

import numpy as np
import pytest
from dataclasses import replace
from hypothesis import given, settings, strategies as st

from scic_qkd.channel_sim import (ChannelSpec, ObservedCounts, detection_prob, simulate_counts,
                                  transmittance)
from scic_qkd.numerics import poisson_pmf
from scic_qkd.cli import decoy_sandwich_failures
from scic_qkd.concentration import modified_azuma_term
from scic_qkd.decoy_estimator import (DecoyEpsilons, estimate_single_photon_bounds,
                                      oracle_single_photon_counts, s1_lower_ZZ, s1_lower_ZZ_raw,
                                      sx_lower, sx_lower_raw, sx_upper, sx_upper_raw)
from scic_qkd.key_length import default_budget
from scic_qkd.optimizer import SourceTemplate
from scic_qkd.source_model import IntensityIntervals, Side, pois1_mixture

EPS = default_budget().decoy
CELLS = [(c, y) for c in ("0Z", "1Z", "0X") for y in (0, 1)]


def sim(length=25.0, N=1e12, mu1=0.5, mu2=0.1, n_tag=0):
    spec = SourceTemplate().build(mu1, mu2, N_tag=n_tag)
    counts = simulate_counts(N, spec, ChannelSpec(length), {"k1": mu1, "k2": mu2, "k3": 0.0})
    return spec, counts


def zero_counts(spec):
    S = {(c, k, y, b): 0.0 for c in ("0Z", "1Z", "0X") for k in ("k1", "k2", "k3")
         for y in (0, 1) for b in ("Z", "X")}
    return ObservedCounts(S_ZZ={k: 0.0 for k in ("k1", "k2", "k3")}, S=S, N_det=0.0,
                          sift_len=0.0, e_bit=0.0, N_sent=1.0)


def test_zero_counts_asymptotic_give_zero():
    spec = SourceTemplate().build(0.5, 0.1)
    counts = zero_counts(spec)
    assert s1_lower_ZZ(counts, spec, EPS, 0.8, asymptotic=True) == 0.0
    for c, y in CELLS:
        assert sx_upper(c, y, counts, spec, EPS, 0.2, asymptotic=True) == 0.0
        assert sx_lower(c, y, counts, spec, EPS, 0.2, asymptotic=True) == 0.0


def test_sandwich_oracle_subset():
    assert decoy_sandwich_failures(150, seed=99) == []


def test_always_detect_yields_total_probability():
    spec = SourceTemplate().build(0.5, 0.1)
    yields = {("0X", n, 0): 1.0 for n in range(21)}
    mu = {"k1": 0.5, "k2": 0.1, "k3": 0.0}
    counts, truth = oracle_single_photon_counts(yields, spec, 1e6, mu, 0.2)
    for k in ("k1", "k2", "k3"):
        assert counts.S["0X", k, 0, "X"] == pytest.approx(1e6 * 0.2 * 0.2 * spec.p_intensity(k))
    assert counts.S["0X", "k1", 1, "X"] == 0.0


def test_oracle_rejects_out_of_interval():
    spec = SourceTemplate().build(0.5, 0.1)
    with pytest.raises(ValueError):
        oracle_single_photon_counts({}, spec, 1.0, {"k1": 0.6, "k2": 0.1, "k3": 0.0}, 0.2)


@pytest.mark.parametrize("length", [0.0, 50.0, 100.0])
def test_channel_counts_enclose_their_single_photon_part(length):
    """The channel model is IID in photon number: an n-photon pulse sees the
    vacuum factor (1 - eta/2)**n, so its single-photon yield is the detection
    formula evaluated at the intensity whose factor equals 1 - eta/2."""
    mu = {"k1": 0.5, "k2": 0.1, "k3": 0.0}
    spec, counts = sim(length)
    channel = ChannelSpec(length)
    eta = transmittance(channel)
    mu_single = -2.0 * np.log(1.0 - eta / 2.0) / eta
    b = estimate_single_photon_bounds(counts, spec, EPS, 0.8, 0.2, asymptotic=True)
    p1 = sum(spec.p_intensity(k) * poisson_pmf(1, mu[k]) for k in mu)
    for c, y in CELLS:
        y1 = detection_prob(c, "k1", "X", y, mu_single, channel)
        truth = 1e12 * spec.p_setting(c) * 0.2 * p1 * y1
        assert b.sL_c1yX[c, y] <= truth * (1 + 1e-9)
        assert truth <= b.sU_c1yX[c, y] * (1 + 1e-9)
    truth_z = sum(1e12 * spec.p_setting(c) * 0.8 * p1
                  * detection_prob(c, "k1", "Z", y, mu_single, channel)
                  for c in ("0Z", "1Z") for y in (0, 1))
    assert b.s1L_ZZ <= truth_z * (1 + 1e-9)


def test_infeasible_intervals_raise():
    spec, counts = sim()
    bad = replace(spec, intensities=IntensityIntervals(0.2, 0.21, 0.2, 0.21, 0.0, 0.001))
    with pytest.raises(ValueError):
        s1_lower_ZZ(counts, bad, EPS, 0.8)
    with pytest.raises(ValueError):
        sx_lower("0X", 0, counts, bad, EPS, 0.2)
    flat = replace(spec, intensities=IntensityIntervals(0.5, 0.5, 0.0005, 0.0005, 0.0, 0.001))
    with pytest.raises(ValueError):
        sx_upper("0X", 0, counts, flat, EPS, 0.2)


def test_tag_correction_is_linear():
    spec0, counts = sim(25.0)
    delta = 1000
    spec1 = replace(spec0, N_tag=delta)
    iv = spec0.intensities
    pref = iv.mu_minus_k1 * pois1_mixture(Side.LOWER, spec0) / (
        (iv.mu_plus_k2 - iv.mu_minus_k3) * (iv.mu_minus_k1 - iv.mu_plus_k2 - iv.mu_minus_k3))
    drop = pref * np.exp(iv.mu_minus_k2) * delta / spec0.p_k2
    assert s1_lower_ZZ_raw(counts, spec0, EPS, 0.8) - s1_lower_ZZ_raw(
        counts, spec1, EPS, 0.8) == pytest.approx(drop, rel=1e-9)
    assert sx_lower_raw("0X", 0, counts, spec0, EPS, 0.2) - sx_lower_raw(
        "0X", 0, counts, spec1, EPS, 0.2) == pytest.approx(drop, rel=1e-9)
    den = (np.exp(-iv.mu_minus_k2 - iv.mu_minus_k3) * iv.mu_minus_k2
           - np.exp(-iv.mu_plus_k2 - iv.mu_plus_k3) * iv.mu_plus_k3)
    rise = delta * np.exp(-iv.mu_plus_k2) / spec0.p_k3 / den * pois1_mixture(Side.UPPER, spec0)
    assert sx_upper_raw("0X", 0, counts, spec1, EPS, 0.2) - sx_upper_raw(
        "0X", 0, counts, spec0, EPS, 0.2) == pytest.approx(rise, rel=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 0.02), st.floats(0.0, 0.02), st.floats(0.0, 0.02), st.floats(0.0, 0.02),
       st.sampled_from(CELLS))
def test_widening_intervals_loosens_bounds(w1, w2, w3, w4, cell):
    spec, counts = sim(25.0)
    iv = spec.intensities
    wide = replace(spec, intensities=IntensityIntervals(
        iv.mu_minus_k1 - w1, iv.mu_plus_k1 + w2, iv.mu_minus_k2 - w3, iv.mu_plus_k2 + w4,
        0.0, iv.mu_plus_k3))
    c, y = cell
    kw = dict(asymptotic=True)
    assert s1_lower_ZZ(counts, wide, EPS, 0.8, **kw) <= s1_lower_ZZ(counts, spec, EPS, 0.8, **kw) * (1 + 1e-12)
    assert sx_lower(c, y, counts, wide, EPS, 0.2, **kw) <= sx_lower(c, y, counts, spec, EPS, 0.2, **kw) * (1 + 1e-12) + 1e-9
    assert sx_upper(c, y, counts, wide, EPS, 0.2, **kw) >= sx_upper(c, y, counts, spec, EPS, 0.2, **kw) * (1 - 1e-12)


def test_finite_lower_below_asymptotic_plus_trailing():
    spec, counts = sim(10.0)
    for c, y in CELLS:
        trailing = modified_azuma_term(EPS.eps_MA_c1yX[c, y], 0.2, counts.N_det)
        finite = sx_lower_raw(c, y, counts, spec, EPS, 0.2)
        asym = sx_lower_raw(c, y, counts, spec, EPS, 0.2, asymptotic=True)
        assert finite <= asym + trailing


def test_finite_bounds_converge_to_asymptotic():
    gaps = []
    for N in [1e12 * 2 ** i for i in range(0, 16, 3)]:
        spec, counts = sim(10.0, N)
        finite = s1_lower_ZZ_raw(counts, spec, EPS, 0.8)
        asym = s1_lower_ZZ_raw(counts, spec, EPS, 0.8, asymptotic=True)
        gaps.append(abs(finite - asym) / asym)
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 1e-3


def test_conservative_flag_flips_trailing_sign():
    spec, counts = sim(10.0)
    g = modified_azuma_term(EPS.eps_MA_Z1, 0.8, counts.N_det)
    literal = s1_lower_ZZ_raw(counts, spec, EPS, 0.8)
    conservative = s1_lower_ZZ_raw(counts, spec, EPS, 0.8, conservative_trailing_terms=True)
    assert literal - conservative == pytest.approx(2 * g, rel=1e-9)
    upper = sx_upper_raw("0X", 0, counts, spec, EPS, 0.2)
    bounds = estimate_single_photon_bounds(counts, spec, EPS, 0.8, 0.2,
                                           conservative_trailing_terms=True)
    assert bounds.raw["sU", "0X", 0] == upper


@pytest.mark.parametrize("length", [0, 25, 50, 75, 100, 150, 200])
@pytest.mark.parametrize("asymptotic", [True, False])
def test_lower_never_above_upper(length, asymptotic):
    spec, counts = sim(float(length))
    b = estimate_single_photon_bounds(counts, spec, EPS, 0.8, 0.2, asymptotic=asymptotic)
    for cell in CELLS:
        assert b.sL_c1yX[cell] <= b.sU_c1yX[cell]
        assert 0.0 <= b.sL_c1yX[cell]
    assert 0.0 <= b.s1L_ZZ <= counts.sift_len


def test_clamping_is_flagged():
    spec, counts = sim(75.0, N=1e10)
    b = estimate_single_photon_bounds(counts, spec, EPS, 0.8, 0.2)
    flagged = [name for name in b.clamped if name.startswith("sL")]
    assert flagged
    for name in flagged:
        _, c, y = name.split("_")
        assert b.raw["sL", c, int(y)] < 0 and b.sL_c1yX[c, int(y)] == 0.0


def test_uniform_epsilons_domain():
    with pytest.raises(ValueError):
        DecoyEpsilons.uniform(0.0, 0.1)

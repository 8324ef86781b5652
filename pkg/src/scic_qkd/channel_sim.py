"""Expected detection statistics of a lossy fibre link with threshold detectors.

Counts are expected values (reals), not samples. ``poisson_resample`` draws a
seeded Poisson realization when integer data are wanted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import BASES, BITS, INTENSITIES, SETTINGS
from .source_model import SourceSpec


@dataclass(frozen=True)
class ChannelSpec:
    """Fibre, detector and Bob's basis choice.

    Attributes:
        fiber_length_km: Link length.
        loss_db_per_km: Fibre attenuation.
        eta_det: Detector efficiency.
        p_dark: Dark-count probability per detector and pulse.
        e_mis: Misalignment error added to the bit error rate.
        p_B_Z: Probability Bob measures in Z.
    """

    fiber_length_km: float = 0.0
    loss_db_per_km: float = 0.2
    eta_det: float = 0.1
    p_dark: float = 1e-5
    e_mis: float = 0.01
    p_B_Z: float = 0.8

    def __post_init__(self) -> None:
        if self.fiber_length_km < 0 or self.loss_db_per_km < 0:
            raise ValueError("fibre length and loss must be nonnegative")
        for name in ("eta_det", "p_dark", "e_mis", "p_B_Z"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value!r}")

    @property
    def p_B_X(self) -> float:
        return 1.0 - self.p_B_Z

    def p_basis(self, b: str) -> float:
        return self.p_B_Z if b == "Z" else self.p_B_X


@dataclass
class ObservedCounts:
    """Observable tallies.

    Attributes:
        S_ZZ: Z-basis-matched detections per intensity, keyed by ``k``.
        S: Detections keyed by ``(c, k, y, b)``: setting, intensity, Bob's
            outcome and Bob's basis.
        N_det: Total number of detected rounds.
        sift_len: Sifted-key length, the sum of ``S_ZZ``.
        e_bit: Bit error rate of the sifted key.
        N_sent: Number of pulses sent.
    """

    S_ZZ: dict
    S: dict
    N_det: object
    sift_len: object
    e_bit: object
    N_sent: float
    meta: dict = field(default_factory=dict)


def transmittance(channel: ChannelSpec) -> float:
    """Overall transmission ``10**(-loss l / 10) * eta_det``."""
    return 10.0 ** (-channel.loss_db_per_km * channel.fiber_length_km / 10.0) * channel.eta_det


def detection_prob(c: str, k: str, b: str, y: int, mu_k, channel: ChannelSpec):
    """Probability that Bob records outcome ``y`` in basis ``b``.

    Three families cover all cases: the correct outcome of a matched basis, the
    wrong outcome of a matched basis, and either outcome when the bases differ
    (``0X`` measured in Z included). For ``0X`` in X the correct outcome is 0.
    ``k`` only labels the intensity; its value enters through ``mu_k``.
    """
    del k
    eta = transmittance(channel)
    pd = channel.p_dark
    vac = np.exp(-eta * np.asarray(mu_k, dtype=float) / 2.0)
    matched = (c in ("0Z", "1Z") and b == "Z") or (c == "0X" and b == "X")
    if not matched:
        out = (1.0 - (1.0 - pd) ** 2 * vac) / 2.0
    else:
        correct = 0 if c in ("0Z", "0X") else 1
        if y == correct:
            out = (1.0 - vac * (1.0 - pd)) * (1.0 - pd / 2.0)
        else:
            out = pd * (1.0 + vac * (1.0 - pd)) / 2.0
    return float(out) if np.ndim(out) == 0 else out


def bit_error_rate(channel: ChannelSpec, mu_k1):
    """Sifted-key error rate at the signal intensity, plus misalignment.

    Wrong-outcome probability over total Z-basis detection probability for the
    two Z states, plus ``e_mis``.
    """
    wrong = detection_prob("0Z", "k1", "Z", 1, mu_k1, channel) + detection_prob(
        "1Z", "k1", "Z", 0, mu_k1, channel
    )
    total = sum(
        detection_prob(c, "k1", "Z", y, mu_k1, channel) for c in ("0Z", "1Z") for y in BITS
    )
    # No detections at all leaves nothing to correct; only misalignment remains.
    safe = np.where(total > 0.0, total, 1.0)
    out = np.where(total > 0.0, wrong / safe, 0.0) + channel.e_mis
    return float(out) if np.ndim(out) == 0 else out


def simulate_counts(
    N_sent: float, source: SourceSpec, channel: ChannelSpec, mu_expected: dict
) -> ObservedCounts:
    """Expected observable counts for ``N_sent`` pulses.

    Args:
        N_sent: Number of pulses.
        source: Setting and intensity probabilities are read from here.
        channel: Link model.
        mu_expected: Actual mean photon number per intensity setting. Values may
            be arrays of matching shape.
    """
    S = {}
    for c in SETTINGS:
        for k in INTENSITIES:
            for b in BASES:
                weight = N_sent * source.p_setting(c) * channel.p_basis(b) * source.p_intensity(k)
                for y in BITS:
                    S[c, k, y, b] = weight * detection_prob(c, k, b, y, mu_expected[k], channel)
    S_ZZ = {
        k: sum(
            N_sent * (source.p_A_Z / 2) * channel.p_B_Z * source.p_intensity(k)
            * detection_prob(c, k, "Z", y, mu_expected[k], channel)
            for c in ("0Z", "1Z") for y in BITS
        )
        for k in INTENSITIES
    }
    N_det = sum(S.values())
    sift_len = sum(S_ZZ.values())
    return ObservedCounts(
        S_ZZ=S_ZZ, S=S, N_det=N_det, sift_len=sift_len,
        e_bit=bit_error_rate(channel, mu_expected["k1"]), N_sent=N_sent,
    )


def poisson_resample(counts: ObservedCounts, seed: int) -> ObservedCounts:
    """Seeded Poisson realization of expected counts, for oracle experiments.

    Per-cell counts are drawn independently; ``S_ZZ``, ``N_det`` and
    ``sift_len`` are recomputed from them so the consistency identities hold.
    The bit error rate is left at its expected value.
    """
    rng = np.random.default_rng(seed)
    S = {key: float(rng.poisson(value)) for key, value in sorted(counts.S.items())}
    S_ZZ = {
        k: sum(S[c, k, y, "Z"] for c in ("0Z", "1Z") for y in BITS) for k in INTENSITIES
    }
    return ObservedCounts(
        S_ZZ=S_ZZ, S=S, N_det=sum(S.values()), sift_len=sum(S_ZZ.values()),
        e_bit=counts.e_bit, N_sent=counts.N_sent,
    )

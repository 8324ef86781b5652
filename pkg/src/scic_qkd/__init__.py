"""Finite-key secret-key-rate engine for loss-tolerant three-state decoy QKD.

The package simulates the expected detection statistics of a weak coherent
source with bounded phase and intensity fluctuations, bounds the
single-photon quantities with decoy states plus martingale concentration
corrections, and turns them into an extractable key length.
"""

__version__ = "0.1.0"

SETTINGS = ("0Z", "1Z", "0X")
INTENSITIES = ("k1", "k2", "k3")
BASES = ("Z", "X")
BITS = (0, 1)

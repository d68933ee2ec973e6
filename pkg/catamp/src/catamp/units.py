"""Unit conventions: time in ns, angular frequency in rad/ns."""

import math

TWO_PI = 2.0 * math.pi

# Angular frequency per unit of ordinary frequency.
GHZ = TWO_PI
MHZ = TWO_PI * 1e-3
KHZ = TWO_PI * 1e-6

# Nanoseconds per microsecond.
US = 1e3


def to_ghz(omega: float) -> float:
    """Angular frequency (rad/ns) to ordinary frequency in GHz."""
    return omega / TWO_PI


def to_mhz(omega: float) -> float:
    return omega / MHZ

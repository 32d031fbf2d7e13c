"""Digamma function for double-precision arrays."""

from __future__ import annotations

import numpy as np

from ..errors import DomainError

_CUTOFF = 8.0
# B_2k / (2k) for k = 1..6
_ASYMPTOTIC = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
)


def digamma(t):
    """psi(t) for t > 0, scalar or array.

    Shifts t upward with psi(t) = psi(t + 1) - 1/t until t >= 8, then uses
    the asymptotic series ln t - 1/(2t) - sum_k B_2k / (2k t^2k) truncated
    after six terms.
    """
    scalar = np.ndim(t) == 0
    t = np.array(t, dtype=np.float64, ndmin=1)
    if np.any(~(t > 0)):
        raise DomainError("digamma is only defined here for t > 0")
    shift = np.zeros_like(t)
    while True:
        low = t < _CUTOFF
        if not low.any():
            break
        shift[low] -= 1.0 / t[low]
        t = np.where(low, t + 1.0, t)
    inv2 = 1.0 / (t * t)
    tail = np.zeros_like(t)
    for c in reversed(_ASYMPTOTIC):
        tail = (tail + c) * inv2
    out = np.log(t) - 0.5 / t - tail + shift
    return float(out[0]) if scalar else out

"""Bessel functions of the first kind by Miller's downward recurrence."""

from __future__ import annotations

import math

import numpy as np

Z_MAX = 50.0
SERIES_BELOW = 1e-3


def bessel_j_all(n_max: int, z: float) -> np.ndarray:
    """``[J_0(z), ..., J_{n_max}(z)]`` for real ``|z| <= 50``.

    The recurrence ``J_{k-1} = (2k/z) J_k - J_{k+1}`` is run downward from an
    order well above both ``n_max`` and ``|z|`` with arbitrary seed values, and
    the result is normalized with ``J_0 + 2 sum_k J_{2k} = 1``.
    """
    if n_max < 0:
        raise ValueError(f"order must be >= 0, got {n_max}")
    z = float(z)
    if not math.isfinite(z) or abs(z) > Z_MAX:
        raise ValueError(f"|z| must be <= {Z_MAX}, got {z}")
    out = np.zeros(n_max + 1)
    if z == 0.0:
        out[0] = 1.0
        return out
    x = abs(z)
    if x < SERIES_BELOW:
        # the recurrence coefficients 2k/x overflow here; three series terms are exact
        h = 0.25 * x * x
        for n in range(n_max + 1):
            lead = math.exp(n * math.log(0.5 * x) - math.lgamma(n + 1))
            out[n] = lead * (1.0 - h / (n + 1) + h * h / (2 * (n + 1) * (n + 2)))
        if z < 0:
            out[1::2] *= -1.0
        return out
    top = int(max(n_max, x) + 30 + 10 * math.sqrt(x))
    top += top % 2
    j_next, j_cur = 0.0, 1e-300
    vals = np.zeros(top + 1)
    vals[top] = j_cur
    for k in range(top, 0, -1):
        j_prev = (2.0 * k / x) * j_cur - j_next
        j_next, j_cur = j_cur, j_prev
        vals[k - 1] = j_cur
        if abs(j_cur) > 1e250:
            vals[k - 1 :] *= 1e-250
            j_next *= 1e-250
            j_cur *= 1e-250
    norm = vals[0] + 2.0 * vals[2::2].sum()
    out[:] = vals[: n_max + 1] / norm
    if z < 0:
        out[1::2] *= -1.0
    return out


def bessel_j(n: int, z: float) -> float:
    """``J_n(z)`` for integer ``n >= 0`` and real ``|z| <= 50``."""
    return float(bessel_j_all(n, z)[n])

"""Closed-form first-order transition amplitudes for a harmonic mixing term.

All amplitudes are first-order Dyson integrals

    P(t) = -i int_0^t V(t') exp(-i Delta t') dt'

with a constant effective gap ``Delta`` and a perturbation ``V`` built from
the dominant sine mode ``R sin(pi qbar lambda)`` (plus, for the linear ramp,
a linear boundary offset). The closed forms below are exact evaluations of
these integrals, so they can be checked against quadrature.
"""

from __future__ import annotations

import math

import numpy as np

from .bessel import bessel_j_all

RESONANCE_GUARD = 1e-9


def _phase_integral(x, t):
    """``(exp(-i x t) - 1) / x``, continued to ``-i t`` as ``x t -> 0``."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    xt = x * t
    small = np.abs(xt) < RESONANCE_GUARD
    safe = np.where(small, 1.0, x)
    full = np.expm1(-1j * xt) / safe
    series = -1j * t * (1.0 - 0.5j * xt)
    return np.where(small, series, full)


def model_ramp_Pi_t(t, T, R, qbar, delta):
    """Amplitude ``P(t)`` under ``V = R sin(pi qbar t / T)`` on a linear ramp.

    Two-term form
    ``-(iR/2) [ (e^{-i(D-w)t} - 1)/(D-w) - (e^{-i(D+w)t} - 1)/(D+w) ]``
    with ``w = pi qbar / T``; either term is replaced by its finite limit at
    resonance.
    """
    w = math.pi * qbar / T
    return -0.5j * R * (_phase_integral(delta - w, t) - _phase_integral(delta + w, t))


def model_ramp_Pi(T, R, qbar, delta):
    """Final amplitude ``P(T)`` of :func:`model_ramp_Pi_t`.

    For integer ``qbar`` and away from resonance this equals
    ``i R (1 - (-1)^qbar e^{-i Delta T}) (pi qbar/T) / (Delta^2 - (pi qbar/T)^2)``;
    for non-integer ``qbar`` the two phase factors are ``e^{+i pi qbar}`` and
    ``e^{-i pi qbar}`` respectively. The model infidelity is ``|P(T)|^2``.
    """
    return model_ramp_Pi_t(T, T, R, qbar, delta)


def model_ramp_boundary(T, a, b, R, qbar, delta):
    """Final amplitude with ``V = a + (b - a) t/T + R sin(pi qbar t/T)``.

    The offset part integrates to
    ``-i [ a (1 - e^{-iDT})/(iD) + (b-a)/D (i e^{-iDT} + (e^{-iDT}-1)/(DT)) ]``
    and the harmonic part is :func:`model_ramp_Pi`.
    """
    if not delta > 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    T = np.asarray(T, dtype=float)
    if np.any(T <= 0):
        raise ValueError("T must be > 0")
    e = np.exp(-1j * delta * T)
    const = a * (1.0 - e) / (1j * delta)
    linear = (b - a) / delta * (1j * e + (e - 1.0) / (delta * T))
    return -1j * (const + linear) + model_ramp_Pi(T, R, qbar, delta)


def _I0(k):
    """``int_0^{pi/2} e^{-i k theta} d theta`` (elementwise), ``pi/2`` at ``k = 0``."""
    k = np.asarray(k, dtype=float)
    small = np.abs(k) < 1e-12
    safe = np.where(small, 1.0, k)
    return np.where(small, math.pi / 2, -np.expm1(-1j * safe * math.pi / 2) / (1j * safe))


def _Ip(k, p):
    """``int_0^{pi/2} cos(p theta) e^{-i k theta} d theta``."""
    return 0.5 * (_I0(k - p) + _I0(k + p))


def model_sin2_bessel(T, R, qbar, delta, n_max: int = 40):
    """Final amplitude for the ``sin^2`` schedule via the Jacobi-Anger expansion.

    Evaluates ``-(2iTR/pi) int_0^{pi/2} sin(qbar pi sin^2 theta) e^{-i kappa theta} d theta``,
    ``kappa = 2 T Delta / pi``, as

    ``sin(a) [I_0 J_0(a) + 2 sum_{n>=1} (-1)^n J_{2n}(a) I_{4n}]
    - cos(a) [2 sum_{n>=0} (-1)^n J_{2n+1}(a) I_{4n+2}]``

    with ``a = qbar pi / 2``, truncated at ``n = n_max``. ``T`` may be an array.
    """
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    alpha = qbar * math.pi / 2
    J = bessel_j_all(2 * n_max + 1, alpha)
    T_arr = np.asarray(T, dtype=float)
    k = (2 * T_arr * delta / math.pi)[..., None]
    n_even = np.arange(1, n_max + 1)
    n_odd = np.arange(0, n_max + 1)
    even = _I0(k[..., 0]) * J[0] + 2 * np.sum((-1.0) ** n_even * J[2 * n_even] * _Ip(k, 4 * n_even), axis=-1)
    odd = 2 * np.sum((-1.0) ** n_odd * J[2 * n_odd + 1] * _Ip(k, 4 * n_odd + 2), axis=-1)
    out = -(2j * T_arr * R / math.pi) * (math.sin(alpha) * even - math.cos(alpha) * odd)
    return complex(out) if out.ndim == 0 else out


def boundary_offset_single_qubit(T: float, dt: float) -> float:
    """Boundary offset ``a = b = -dt sin(1/(4T))`` of the single-qubit linear ramp."""
    if T <= 0 or dt <= 0:
        raise ValueError("T and dt must be positive")
    return -dt * math.sin(1.0 / (4.0 * T))

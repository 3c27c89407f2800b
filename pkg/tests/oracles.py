"""Independent reference computations shared by the unit and acceptance tests."""

import math

import numpy as np
from scipy.integrate import quad


def taylor_expm(h, theta, terms=80):
    """exp(-i theta H) by a scaled Taylor series and repeated squaring."""
    a = -1j * theta * h
    nrm = np.abs(a).sum(axis=1).max()
    s = max(0, int(math.ceil(math.log2(nrm))) + 1) if nrm > 0 else 0
    a = a / 2**s
    out = np.eye(h.shape[0], dtype=complex)
    term = out.copy()
    for k in range(1, terms):
        term = term @ a / k
        out = out + term
    for _ in range(s):
        out = out @ out
    return out


def complex_quad(f, a, b):
    re = quad(lambda x: f(x).real, a, b, epsabs=1e-13, epsrel=1e-13, limit=400)[0]
    im = quad(lambda x: f(x).imag, a, b, epsabs=1e-13, epsrel=1e-13, limit=400)[0]
    return re + 1j * im


def bessel_quadrature(T, R, qbar, delta):
    """Sin^2-ramp amplitude as the direct theta integral."""
    kappa = 2 * T * delta / math.pi

    def f(th):
        return math.sin(qbar * math.pi * math.sin(th) ** 2) * np.exp(-1j * kappa * th)

    return -(2j * T * R / math.pi) * complex_quad(f, 0, math.pi / 2)

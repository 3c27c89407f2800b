"""Spin Hamiltonians, collective operators and annealing schedules.

Three families are supported:

* ``single_qubit``: ``H_i = -sigma_x``, ``H_f = h sigma_z``.
* ``ising``: ``H_f = -J_Z sum sigma^z_n sigma^z_{n+1} + h sum sigma^z_n`` on a
  ring (or open chain) in the full ``2**N`` space.
* ``pspin``: ``H_f = -(J_p / N**(p-1)) (2 S_z)**p``, simulated in the
  ``N + 1`` dimensional maximal-spin (Dicke) sector by default.

All share ``H_i = -2 K S_x`` and the interpolation
``H(lambda) = (1 - lambda) H_i + lambda H_f``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import reduce

import numpy as np

FAMILIES = ("single_qubit", "ising", "pspin")
REPRESENTATIONS = ("full", "dicke")
SCHEDULES = ("linear", "sin2")
MAX_ISING_N = 12

_PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def pauli(axis: str) -> np.ndarray:
    return _PAULI[axis].copy()


def _site_operator(op: np.ndarray, site: int, n: int) -> np.ndarray:
    mats = [np.eye(2, dtype=complex)] * n
    mats = mats[:site] + [op] + mats[site + 1 :]
    return reduce(np.kron, mats)


def _dicke_spin(n: int, axis: str) -> np.ndarray:
    # basis ordered m = j, j-1, ..., -j
    j = n / 2
    m = j - np.arange(n + 1)
    if axis == "z":
        return np.diag(m).astype(complex)
    # <m+1|S_+|m> = sqrt(j(j+1) - m(m+1)); S_+ raises, i.e. moves one index up
    sp = np.zeros((n + 1, n + 1), dtype=complex)
    for k in range(1, n + 1):
        sp[k - 1, k] = math.sqrt(j * (j + 1) - m[k] * (m[k] + 1))
    if axis == "x":
        return (sp + sp.conj().T) / 2
    if axis == "y":
        return (sp - sp.conj().T) / 2j
    raise ValueError(f"unknown axis {axis!r}")


def collective_spin(n: int, axis: str, representation: str = "full") -> np.ndarray:
    """``S_axis = 1/2 sum_n sigma_n^axis`` in the requested representation."""
    if n < 1:
        raise ValueError("need at least one spin")
    if axis not in _PAULI:
        raise ValueError(f"unknown axis {axis!r}")
    if representation == "dicke":
        return _dicke_spin(n, axis)
    if representation != "full":
        raise ValueError(f"unknown representation {representation!r}")
    sigma = _PAULI[axis]
    return 0.5 * sum(_site_operator(sigma, k, n) for k in range(n))


@dataclass(frozen=True)
class ModelSpec:
    family: str = "single_qubit"
    N: int = 1
    K: float = 1.0
    J_Z: float = 1.0
    h: float = 1.0
    periodic: bool = True
    p: int = 2
    J_p: float = 1.0
    representation: str | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family: must be one of {FAMILIES}, got {self.family!r}")
        if self.N < 1:
            raise ValueError(f"N: must be >= 1, got {self.N}")
        rep = self.representation
        if rep is None:
            rep = "dicke" if self.family == "pspin" else "full"
            object.__setattr__(self, "representation", rep)
        if rep not in REPRESENTATIONS:
            raise ValueError(f"representation: must be one of {REPRESENTATIONS}, got {rep!r}")
        if self.family == "single_qubit" and self.N != 1:
            raise ValueError("N: single_qubit requires N=1")
        if self.family in ("single_qubit", "ising") and rep != "full":
            raise ValueError(f"representation: {self.family} requires the full Hilbert space")
        if self.family == "ising" and self.N > MAX_ISING_N:
            raise ValueError(f"N: ising chains are capped at N={MAX_ISING_N}")
        if self.family == "pspin" and self.p < 1:
            raise ValueError(f"p: must be >= 1, got {self.p}")
        if self.family == "pspin" and rep == "full" and self.N > MAX_ISING_N:
            raise ValueError(f"N: full-space p-spin is capped at N={MAX_ISING_N}")

    @property
    def dim(self) -> int:
        return self.N + 1 if self.representation == "dicke" else 2**self.N

    def label(self) -> str:
        return {"single_qubit": "single_qubit", "ising": "ising", "pspin": "pspin"}[self.family]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ValueError(f"model: unknown fields {sorted(extra)}")
        return cls(**d)


def build_initial(spec: ModelSpec) -> np.ndarray:
    """Transverse-field start Hamiltonian ``-2 K S_x``."""
    return -2.0 * spec.K * collective_spin(spec.N, "x", spec.representation)


def build_final(spec: ModelSpec) -> np.ndarray:
    if spec.family == "single_qubit":
        return spec.h * pauli("z")
    if spec.family == "pspin":
        sz2 = 2.0 * collective_spin(spec.N, "z", spec.representation)
        return -(spec.J_p / spec.N ** (spec.p - 1)) * np.linalg.matrix_power(sz2, spec.p)
    # Ising chain, diagonal in the computational basis; bit 0 of the state index is the last site
    n = spec.N
    idx = np.arange(2**n)
    spins = 1 - 2 * ((idx[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1)
    bonds = [(k, k + 1) for k in range(n - 1)]
    if spec.periodic and n > 1:
        bonds.append((n - 1, 0))
    zz = sum((spins[:, a] * spins[:, b] for a, b in bonds), np.zeros(2**n))
    diag = -spec.J_Z * zz + spec.h * spins.sum(axis=1)
    return np.diag(diag).astype(complex)


@dataclass(frozen=True)
class AnnealingHamiltonian:
    """``H(lambda) = (1 - lambda) H_i + lambda H_f`` with constant ``dH = H_f - H_i``."""

    H_i: np.ndarray
    H_f: np.ndarray
    dH: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "dH", self.H_f - self.H_i)

    @property
    def dim(self) -> int:
        return self.H_i.shape[0]

    def at(self, lam: float) -> np.ndarray:
        if not 0.0 <= lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {lam}")
        if lam == 0.0:
            return self.H_i.copy()
        if lam == 1.0:
            return self.H_f.copy()
        return (1.0 - lam) * self.H_i + lam * self.H_f

    def batch(self, lams: np.ndarray) -> np.ndarray:
        lams = np.asarray(lams, dtype=float)[:, None, None]
        return (1.0 - lams) * self.H_i[None] + lams * self.H_f[None]


def build_annealing(spec: ModelSpec) -> AnnealingHamiltonian:
    return AnnealingHamiltonian(build_initial(spec), build_final(spec))


def hamiltonian_at(ann: AnnealingHamiltonian, lam: float) -> np.ndarray:
    return ann.at(lam)


@dataclass(frozen=True)
class Schedule:
    """``lambda(t)`` on ``[0, T]``: linear ramp or the endpoint-smooth ``sin^2`` ramp."""

    kind: str
    T: float

    def __post_init__(self):
        if self.kind not in SCHEDULES:
            raise ValueError(f"schedule: must be one of {SCHEDULES}, got {self.kind!r}")
        if not self.T > 0:
            raise ValueError(f"T: must be > 0, got {self.T}")

    def __call__(self, t):
        return schedule_eval(self, t)

    def lam(self, t):
        return schedule_eval(self, t)[0]


def schedule_eval(s: Schedule, t):
    """Return ``(lambda(t), dlambda/dt(t))``; ``t`` may be a scalar or an array."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > s.T * (1 + 1e-12)):
        raise ValueError(f"t must lie in [0, {s.T}]")
    t_arr = np.minimum(t_arr, s.T)
    if s.kind == "linear":
        lam = t_arr / s.T
        dlam = np.full_like(lam, 1.0 / s.T)
    else:
        x = np.pi * t_arr / (2 * s.T)
        lam = np.sin(x) ** 2
        dlam = (np.pi / s.T) * np.sin(x) * np.cos(x)
        # exact endpoint values, free of the cos(pi/2) roundoff
        lam = np.where(t_arr == s.T, 1.0, lam)
        dlam = np.where((t_arr == s.T) | (t_arr == 0), 0.0, dlam)
    if np.ndim(t) == 0:
        return float(lam), float(dlam)
    return lam, dlam


def cyclic_shift(n: int) -> np.ndarray:
    """Permutation matrix translating an ``n``-site computational basis state by one site."""
    dim = 2**n
    perm = np.zeros((dim, dim))
    for s in range(dim):
        bits = [(s >> (n - 1 - k)) & 1 for k in range(n)]
        shifted = bits[-1:] + bits[:-1]
        t = int("".join(map(str, shifted)), 2)
        perm[t, s] = 1.0
    return perm


def symmetric_subspace_isometry(n: int) -> np.ndarray:
    """Columns are the Dicke states ``|j=n/2, m>`` (``m = j..-j``) in the full space."""
    dim = 2**n
    idx = np.arange(dim)
    downs = np.array([bin(s).count("1") for s in idx])
    cols = []
    for k in range(n + 1):
        v = (downs == k).astype(complex)
        cols.append(v / np.linalg.norm(v))
    return np.column_stack(cols)

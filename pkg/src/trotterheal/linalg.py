"""Dense complex Hermitian linear algebra.

Every operator in the package is a plain ``numpy`` complex array. The helpers
here validate Hermiticity, diagonalize with a deterministic eigenvector
convention, exponentiate through the eigendecomposition and form the
commutators and trace products used by the gauge-potential code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-10


class NonHermitianError(ValueError):
    """Raised when an operator that must be Hermitian is not."""

    def __init__(self, asymmetry: float):
        self.asymmetry = asymmetry
        super().__init__(f"operator is not Hermitian: max |H - H^dagger| = {asymmetry:.3e}")


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class EigenSystem:
    """Eigenvalues in ascending order; column ``k`` of ``vectors`` belongs to ``values[k]``."""

    values: np.ndarray
    vectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def ground(self) -> np.ndarray:
        return self.vectors[:, 0]


def as_operator(a) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise DimensionMismatch(f"expected a non-empty square matrix, got shape {a.shape}")
    return a


def hermitian_asymmetry(a: np.ndarray) -> float:
    return float(np.max(np.abs(a - a.conj().T))) if a.size else 0.0


def check_hermitian(a, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Return ``a`` as a complex square array, raising if it is not Hermitian.

    The tolerance is absolute for operators of order-one norm and scales with
    the largest entry otherwise.
    """
    a = as_operator(a)
    asym = hermitian_asymmetry(a)
    scale = max(1.0, float(np.max(np.abs(a))))
    if asym > tol * scale:
        raise NonHermitianError(asym)
    return a


def hermiticity(a: np.ndarray, tol: float = HERMITIAN_TOL) -> str:
    """Classify ``a`` as ``"hermitian"``, ``"anti-hermitian"`` or ``"neither"``."""
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if np.max(np.abs(a - a.conj().T)) <= tol * scale:
        return "hermitian"
    if np.max(np.abs(a + a.conj().T)) <= tol * scale:
        return "anti-hermitian"
    return "neither"


def unitarity_defect(u: np.ndarray) -> float:
    """Max-abs entry of ``U^dagger U - 1``."""
    u = np.asarray(u)
    return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))


def _phase_fix(vectors: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Rotate each column so its first non-negligible component is real positive."""
    out = vectors.copy()
    for k in range(out.shape[1]):
        col = out[:, k]
        idx = np.flatnonzero(np.abs(col) > tol * max(1.0, np.max(np.abs(col))))
        if idx.size:
            c = col[idx[0]]
            out[:, k] = col * (abs(c) / c)
    return out


def _canonical_block(block: np.ndarray) -> np.ndarray:
    """Canonical orthonormal basis of the span of ``block``'s columns.

    Projects the computational basis vectors, in order, onto the subspace and
    orthonormalizes the first ones that survive. For a subspace that contains
    computational basis vectors this returns exactly those vectors.
    """
    dim, g = block.shape
    proj = block @ block.conj().T
    basis: list[np.ndarray] = []
    for j in range(dim):
        v = proj[:, j].copy()
        for b in basis:
            v -= (b.conj() @ v) * b
        nrm = np.linalg.norm(v)
        if nrm > 1e-6:
            basis.append(v / nrm)
            if len(basis) == g:
                break
    out = np.column_stack(basis)
    # one refinement pass restores orthonormality to roundoff
    q, r = np.linalg.qr(out)
    return q * np.sign(np.real(np.diag(r)))[None, :]


def eigendecompose(h, degeneracy_tol: float = 1e-10) -> EigenSystem:
    """Diagonalize a Hermitian matrix with a deterministic eigenvector convention.

    Eigenvalues come out ascending. Inside a degenerate cluster (eigenvalues
    within ``degeneracy_tol`` times the spectral scale) the basis is
    canonicalized by projecting computational basis vectors, so e.g. the zero
    matrix yields the identity. Every eigenvector is then phase-rotated so its
    first non-negligible component is real and positive.
    """
    h = check_hermitian(h)
    w, v = np.linalg.eigh(h)
    scale = max(1.0, float(np.max(np.abs(w)))) if w.size else 1.0
    start = 0
    n = w.shape[0]
    while start < n:
        stop = start + 1
        while stop < n and w[stop] - w[start] <= degeneracy_tol * scale:
            stop += 1
        if stop - start > 1:
            v[:, start:stop] = _canonical_block(v[:, start:stop])
        start = stop
    return EigenSystem(values=w, vectors=_phase_fix(v))


def expm_hermitian(h, theta: float, eig: EigenSystem | None = None) -> np.ndarray:
    """Return ``exp(-i theta H)`` built from the eigendecomposition of ``H``."""
    if not np.isfinite(theta):
        raise ValueError(f"theta must be finite, got {theta}")
    if eig is None:
        h = check_hermitian(h)
        w, v = np.linalg.eigh(h)
    else:
        w, v = eig.values, eig.vectors
    return (v * np.exp(-1j * theta * w)[None, :]) @ v.conj().T


def expm_hermitian_batch(h: np.ndarray, theta) -> np.ndarray:
    """Stacked version of :func:`expm_hermitian` for arrays of shape ``(..., d, d)``."""
    w, v = np.linalg.eigh(h)
    theta = np.asarray(theta, dtype=float)[..., None]
    return (v * np.exp(-1j * theta * w)[..., None, :]) @ np.swapaxes(v.conj(), -1, -2)


def commutator(a, b) -> np.ndarray:
    """Raw matrix ``AB - BA``.

    For Hermitian ``A`` and ``B`` the result is anti-Hermitian; callers that need
    a Hermitian generator multiply by ``1j``. :func:`hermiticity` reports which
    case a given matrix falls into.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[-2:] != b.shape[-2:]:
        raise DimensionMismatch(f"commutator of shapes {a.shape} and {b.shape}")
    return a @ b - b @ a


def trace_product(a, b) -> complex:
    """``Tr[AB]`` evaluated as ``sum_jk A[j,k] B[k,j]`` without forming ``AB``."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 2:
        raise DimensionMismatch(f"trace_product of shapes {a.shape} and {b.shape}")
    return complex(np.einsum("jk,kj->", a, b))


def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    x = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * (x + x.conj().T) / 2

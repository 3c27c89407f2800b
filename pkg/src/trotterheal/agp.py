"""Adiabatic gauge potentials and counterdiabatic terms.

Two constructions are provided:

* :func:`exact_agp` builds the gauge potential from the instantaneous
  eigendecomposition (zero diagonal, i.e. parallel-transport gauge).
* :func:`variational_agp` uses the nested-commutator ansatz
  ``A = i sum_k alpha_k O_{2k-1}`` with ``O_0 = dH`` and ``O_k = [H, O_{k-1}]``,
  choosing ``alpha`` to minimize ``Tr[G^2]`` with ``G = dH + i[A, H]``.

:class:`AgpProvider` binds either construction to an annealing Hamiltonian and
memoizes results per ``lambda``; it also evaluates whole ``lambda`` grids in
vectorized form, which is what the propagators use.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field

import numpy as np

from .linalg import check_hermitian, commutator, trace_product
from .models import AnnealingHamiltonian

log = logging.getLogger(__name__)

GAP_TOL = 1e-9
ELEMENT_TOL = 1e-12
VAR_RCOND = 1e-12


class DegenerateGap(ArithmeticError):
    """Two levels closer than the gap tolerance are coupled by ``dH``."""

    def __init__(self, m: int, n: int, gap: float, element: float):
        self.m, self.n, self.gap, self.element = m, n, gap, element
        super().__init__(
            f"levels {m} and {n} are degenerate (gap {gap:.2e}) but coupled by dH (|element| {element:.2e})"
        )


class IllConditioned(ArithmeticError):
    def __init__(self, condition: float):
        self.condition = condition
        super().__init__(f"variational system is ill-conditioned (cond ~ {condition:.2e})")


@dataclass(frozen=True)
class AgpResult:
    A_lambda: np.ndarray
    method: str
    l: int = 0
    alpha: np.ndarray = field(default_factory=lambda: np.zeros(0))
    action_value: float = 0.0


def _rotate_degenerate_blocks(w, v, dh_eig, gap_tol):
    """Diagonalize ``dH`` inside each cluster of degenerate levels.

    Any basis of a degenerate eigenspace is admissible; choosing the one that
    diagonalizes ``dH`` removes couplings that are artifacts of the basis.
    """
    n = w.shape[0]
    start = 0
    changed = False
    while start < n:
        stop = start + 1
        while stop < n and w[stop] - w[stop - 1] < gap_tol:
            stop += 1
        if stop - start > 1:
            blk = dh_eig[start:stop, start:stop]
            _, u = np.linalg.eigh((blk + blk.conj().T) / 2)
            v[:, start:stop] = v[:, start:stop] @ u
            changed = True
        start = stop
    return v, changed


def exact_agp(H, dH, gap_tol: float = GAP_TOL, element_tol: float = ELEMENT_TOL) -> AgpResult:
    """Exact gauge potential ``<m|A|n> = -i <m|dH|n> / (E_m - E_n)``, diagonal zero."""
    H = check_hermitian(H)
    dH = check_hermitian(dH)
    w, v = np.linalg.eigh(H)
    d = v.conj().T @ dH @ v
    gaps = w[:, None] - w[None, :]
    near = np.abs(gaps) < gap_tol
    np.fill_diagonal(near, False)
    floor = element_tol * max(1.0, float(np.max(np.abs(dH))))
    if np.any(near & (np.abs(d) >= floor)):
        v, _ = _rotate_degenerate_blocks(w, v.copy(), d, gap_tol)
        d = v.conj().T @ dH @ v
        bad = near & (np.abs(d) >= floor)
        if np.any(bad):
            m, n = map(int, np.argwhere(bad)[0])
            raise DegenerateGap(m, n, float(abs(gaps[m, n])), float(abs(d[m, n])))
    # couplings at roundoff level are symmetry zeros; dividing them by a tiny gap only amplifies noise
    zero = near | (np.abs(d) < floor) | np.eye(len(w), dtype=bool)
    safe = np.where(zero, 1.0, gaps)
    a = np.where(zero, 0.0, -1j * d / safe)
    np.fill_diagonal(a, 0.0)
    A = v @ a @ v.conj().T
    A = (A + A.conj().T) / 2
    return AgpResult(A_lambda=A, method="exact")


def exact_agp_batch(Hs: np.ndarray, dH: np.ndarray, gap_tol: float = GAP_TOL) -> np.ndarray:
    """Exact gauge potentials for a stack of Hamiltonians sharing ``dH``.

    Falls back to :func:`exact_agp` (with its degeneracy handling) for any
    member of the stack that has a near-degenerate pair.
    """
    w, v = np.linalg.eigh(Hs)
    vh = np.swapaxes(v.conj(), -1, -2)
    d = vh @ dH @ v
    gaps = w[:, :, None] - w[:, None, :]
    dim = w.shape[1]
    eye = np.eye(dim, dtype=bool)[None]
    near = (np.abs(gaps) < gap_tol) & ~eye
    floor = ELEMENT_TOL * max(1.0, float(np.max(np.abs(dH))))
    zero = near | eye | (np.abs(d) < floor)
    safe = np.where(zero, 1.0, gaps)
    a = np.where(zero, 0.0, -1j * d / safe)
    out = v @ a @ vh
    out = (out + np.swapaxes(out.conj(), -1, -2)) / 2
    for b in np.flatnonzero((near & (np.abs(d) >= floor)).any(axis=(1, 2))):
        out[b] = exact_agp(Hs[b], dH, gap_tol).A_lambda
    return out


def nested_commutators(H, O0, l: int) -> list[np.ndarray]:
    """Return ``[O_1, ..., O_{2l}]`` with ``O_k = [H, O_{k-1}]``.

    For Hermitian ``O_0`` the odd members are anti-Hermitian and the even members
    Hermitian.
    """
    if l < 1:
        raise ValueError(f"l must be >= 1, got {l}")
    out = []
    prev = np.asarray(O0, dtype=complex)
    for _ in range(2 * l):
        prev = commutator(H, prev)
        out.append(prev)
    return out


def action_matrices(O0, ops, normalization: float = 1.0):
    """Quadratic-form data ``(A, B, C)`` of the action in ``alpha``.

    ``S(alpha) = A + 2 B.alpha + alpha.C.alpha`` with ``A = Tr[O_0^2]``,
    ``B_i = Tr[O_0 O_{2i}]`` and ``C_ij = Tr[O_{2i} O_{2j}]``. Every trace is
    multiplied by ``normalization``; the minimizer does not depend on it.
    """
    evens = ops[1::2]
    l = len(evens)
    A = normalization * trace_product(O0, O0).real
    B = np.array([normalization * trace_product(O0, e).real for e in evens])
    C = np.empty((l, l))
    for i in range(l):
        for j in range(i, l):
            C[i, j] = C[j, i] = normalization * trace_product(evens[i], evens[j]).real
    return A, B, C


def _variational_eig(w, d, l: int, floor: float, gap_tol: float = GAP_TOL, rcond: float = VAR_RCOND):
    """Variational minimizer in the eigenbasis of ``H``, for a stack of problems.

    With ``w`` the energies and ``d`` the matrix of ``dH`` in the eigenbasis,
    ``O_k`` has elements ``omega_mn^k d_mn`` (``omega_mn = E_m - E_n``), so
    ``Tr[G^2] = sum_mn |d_mn|^2 P(omega_mn^2)^2`` with ``P(x) = 1 + sum_k alpha_k x^k``.
    The minimization over ``alpha`` is a weighted polynomial least-squares
    problem. It is solved by the Stieltjes procedure: polynomials ``x p_j(x)``
    orthonormal under the weights ``|d_mn|^2`` are built one degree at a time
    (``x`` times the previous one, then Gram-Schmidt applied twice), carrying
    their values at the nodes ``omega_mn^2``.
    ``P`` is then evaluated directly at every node, so pairs with tiny weight
    or tiny gap get no amplified rounding, and ``P - 1`` keeps its exact factor
    of ``x``. A new direction whose norm drops below ``rcond`` times its norm
    before orthogonalization is discarded (rank deficiency, merging nodes).

    Returns ``(a, P, alpha, full_rank)`` with ``a`` the gauge potential in the
    eigenbasis and ``alpha`` the monomial coefficients.
    """
    n = w.shape[-1]
    batch = w.shape[:-1]
    om = w[..., :, None] - w[..., None, :]
    scale = np.maximum(1.0, np.abs(w).max(axis=-1))[..., None, None]
    active = (np.abs(d) >= floor) & (np.abs(om) >= gap_tol * scale) & ~np.eye(n, dtype=bool)
    # weights and nodes are symmetric in (m, n): work on the upper triangle
    iu = np.triu_indices(n, 1)
    act_u = active[..., iu[0], iu[1]]
    s2 = np.where(act_u, np.abs(d[..., iu[0], iu[1]]) ** 2, 0.0)
    x = om[..., iu[0], iu[1]] ** 2
    x_scale = np.where(act_u, x, 0.0).max(axis=-1, initial=0.0)
    x_scale = np.where(x_scale > 0, x_scale, 1.0)
    xt = x / x_scale[..., None]

    K = x.shape[-1]
    vals = np.zeros((*batch, l, K))
    coefs = np.zeros((*batch, l, l + 1))
    full_rank = np.ones(batch, dtype=bool)
    g = xt
    cf = np.zeros((*batch, l + 1))
    cf[..., 1] = 1.0
    for j in range(l):
        if j:
            g = xt * vals[..., j - 1, :]
            cf = np.roll(coefs[..., j - 1, :], 1, axis=-1)
        before = np.sqrt(np.einsum("...k,...k->...", s2 * g, g))
        for _ in range(2):  # classical Gram-Schmidt, twice
            h = vals[..., :j, :] @ (s2 * g)[..., None]
            g = g - (np.swapaxes(vals[..., :j, :], -1, -2) @ h)[..., 0]
            cf = cf - (np.swapaxes(coefs[..., :j, :], -1, -2) @ h)[..., 0]
        nrm = np.sqrt(np.einsum("...k,...k->...", s2 * g, g))
        ok = nrm > rcond * before
        full_rank &= ok
        inv = np.where(ok, 1.0 / np.where(ok, nrm, 1.0), 0.0)[..., None]
        vals[..., j, :] = g * inv
        coefs[..., j, :] = cf * inv
    c = -(vals @ s2[..., None])
    pm1_u = (np.swapaxes(vals, -1, -2) @ c)[..., 0]
    poly = (np.swapaxes(coefs, -1, -2) @ c)[..., 0]
    alpha = poly[..., 1:] / x_scale[..., None] ** np.arange(1, l + 1)
    pm1 = np.zeros(om.shape)
    pm1[..., iu[0], iu[1]] = np.where(act_u, pm1_u, 0.0)
    pm1 = pm1 + np.swapaxes(pm1, -1, -2)
    a = np.where(active, 1j * d * pm1 / np.where(active, om, 1.0), 0.0)
    return a, 1.0 + pm1, alpha, full_rank


def variational_agp(
    H,
    dH,
    l: int,
    normalization: float = 1.0,
    strict: bool = False,
) -> AgpResult:
    """Nested-commutator gauge potential of order ``l``.

    ``A = i sum_k alpha_k O_{2k-1}`` with ``alpha`` minimizing
    ``S(alpha) = Tr[G^2]``, ``G = O_0 + sum_k alpha_k O_{2k}``. The minimizer is
    computed in the eigenbasis of ``H`` (see :func:`_variational_eig`); when the
    commutator basis is rank deficient every minimizer gives the same ``A``.
    ``alpha`` is reported in the monomial basis and may be poorly determined
    in that case. With ``strict=True`` rank deficiency raises
    :class:`IllConditioned`.
    """
    H = check_hermitian(H)
    dH = check_hermitian(dH)
    if l < 1:
        raise ValueError(f"l must be >= 1, got {l}")
    w, v = np.linalg.eigh(H)
    d = v.conj().T @ dH @ v
    floor = ELEMENT_TOL * max(1.0, float(np.max(np.abs(dH))))
    a, P, alpha, full_rank = _variational_eig(w, d, l, floor)
    if not full_rank:
        if strict:
            raise IllConditioned(float("inf"))
        log.debug("variational AGP l=%d: rank-deficient commutator basis", l)
    A = v @ a @ v.conj().T
    A = (A + A.conj().T) / 2
    action_value = normalization * float(np.sum(np.abs(d) ** 2 * P**2))
    return AgpResult(A_lambda=A, method="variational", l=l, alpha=alpha, action_value=max(action_value, 0.0))


def variational_agp_batch(Hs: np.ndarray, dH: np.ndarray, l: int) -> np.ndarray:
    """Stacked :func:`variational_agp`, returning only the gauge potentials."""
    w, v = np.linalg.eigh(Hs)
    vh = np.swapaxes(v.conj(), -1, -2)
    d = vh @ dH @ v
    floor = ELEMENT_TOL * max(1.0, float(np.max(np.abs(dH))))
    a, *_ = _variational_eig(w, d, l, floor)
    A = v @ a @ vh
    return (A + np.swapaxes(A.conj(), -1, -2)) / 2


def action(H, dH, A) -> float:
    """``Tr[G^dagger G]`` with ``G = dH + i[A, H]`` for an arbitrary trial potential."""
    G = dH + 1j * commutator(A, H)
    return float(trace_product(G.conj().T, G).real)


def cd_term(agp: AgpResult, lam_dot: float) -> np.ndarray:
    """``H_CD = dlambda/dt * A_lambda``."""
    return lam_dot * agp.A_lambda


class AgpProvider:
    """Gauge potentials of one annealing Hamiltonian along ``lambda``.

    ``method`` is ``"exact"`` or ``"variational"`` (with order ``l``). Scalar
    lookups are memoized by the bit pattern of ``lambda``; the cache is guarded
    by a lock so concurrent readers and writers see identical results.
    """

    def __init__(self, ann: AnnealingHamiltonian, method: str, l: int = 1, cache: bool = True):
        if method not in ("exact", "variational"):
            raise ValueError(f"cd method must be 'exact' or 'variational', got {method!r}")
        if method == "variational" and l < 1:
            raise ValueError(f"l must be >= 1, got {l}")
        self.ann = ann
        self.method = method
        self.l = l
        self._cache: dict[bytes, AgpResult] | None = {} if cache else None
        self._lock = threading.Lock()

    def at(self, lam: float) -> AgpResult:
        key = np.float64(lam).tobytes()
        if self._cache is not None:
            with self._lock:
                hit = self._cache.get(key)
            if hit is not None:
                return hit
        H = self.ann.at(float(lam))
        if self.method == "exact":
            res = exact_agp(H, self.ann.dH)
        else:
            res = variational_agp(H, self.ann.dH, self.l)
        if self._cache is not None:
            with self._lock:
                res = self._cache.setdefault(key, res)
        return res

    def batch(self, lams: np.ndarray) -> np.ndarray:
        Hs = self.ann.batch(lams)
        if self.method == "exact":
            return exact_agp_batch(Hs, self.ann.dH)
        return variational_agp_batch(Hs, self.ann.dH, self.l)

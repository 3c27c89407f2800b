"""One-step diagnostics in the instantaneous eigenbasis.

For a digitized step at fixed ``lambda`` the overlaps obey
``P(t_{m+1}) = M G P(t_m)`` with

* ``G_kj = <phi_k(lambda)|U_step|phi_j(lambda)>`` (the step in the frame), and
* ``M_ik = <phi_i(lambda + dlambda)|phi_k(lambda)>`` (the basis change),

where ``dlambda = lambda_dot dt`` and the eigenvectors at ``lambda + dlambda``
are aligned to those at ``lambda`` (parallel transport).

Two mixing rates are reported. ``R = offdiag(G) / dt`` is the raw per-step
rate in the frame at fixed ``lambda``; it contains the counterdiabatic
rotation itself and is ``O(lambda_dot)``. ``R_residual = offdiag(M G) / dt``
is what is left after the basis change is accounted for; with exact CD the
``O(dt lambda_dot)`` parts cancel and it is ``O(dt)``. The sine-series
analysis uses ``R_residual``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft

from ..evolve import EvolutionConfig
from ..linalg import eigendecompose, expm_hermitian
from ..models import schedule_eval

OVERLAP_MIN = 0.5


class CrossingDetected(RuntimeError):
    def __init__(self, lam: float, level: int, overlap: float):
        self.lam, self.level, self.overlap = lam, level, overlap
        super().__init__(
            f"eigenbasis matching failed at lambda={lam:.6g}: level {level} overlap {overlap:.3f}"
        )


@dataclass(frozen=True)
class AdiabaticFrameStep:
    lam: float
    dlam: float
    dt: float
    G: np.ndarray
    M: np.ndarray
    energies: np.ndarray
    basis: np.ndarray

    @property
    def R(self) -> np.ndarray:
        return _offdiag(self.G) / self.dt

    @property
    def R_residual(self) -> np.ndarray:
        return _offdiag(self.M @ self.G) / self.dt

    def diagonal_defect(self) -> float:
        """``max_j |G_jj - (1 - i E_j dt)| / dt^2``, the constant in the ``O(dt^2)`` remainder."""
        d = np.abs(np.diag(self.G) - (1.0 - 1j * self.energies * self.dt))
        return float(d.max() / self.dt**2)


def _offdiag(a: np.ndarray) -> np.ndarray:
    out = a.copy()
    np.fill_diagonal(out, 0.0)
    return out


def _time_of(cfg: EvolutionConfig, lam: float) -> float:
    if cfg.schedule == "linear":
        return lam * cfg.T
    return 2.0 * cfg.T / math.pi * math.asin(math.sqrt(lam))


def _align(new: np.ndarray, w_new: np.ndarray, old: np.ndarray, lam: float, tol: float = 1e-9) -> np.ndarray:
    """Rotate ``new`` eigenvectors onto ``old`` (parallel transport), block-wise on degeneracies."""
    out = new.copy()
    n = w_new.shape[0]
    scale = max(1.0, float(np.abs(w_new).max()))
    start = 0
    while start < n:
        stop = start + 1
        while stop < n and w_new[stop] - w_new[stop - 1] < tol * scale:
            stop += 1
        blk = slice(start, stop)
        ov = new[:, blk].conj().T @ old[:, blk]
        u, s, vh = np.linalg.svd(ov)
        if s.min() < OVERLAP_MIN:
            raise CrossingDetected(lam, start + int(np.argmin(s)), float(s.min()))
        # polar factor: new block -> closest unitary rotation onto the old block
        out[:, blk] = new[:, blk] @ (u @ vh)
        start = stop
    return out


def extract_frame_step(cfg: EvolutionConfig, lam: float) -> AdiabaticFrameStep:
    """``G``, ``M`` and the derived mixing rates for one digitized step at ``lambda``."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    ann = cfg.annealing()
    t = _time_of(cfg, lam)
    _, lam_dot = schedule_eval(cfg.sched, t)
    dt = cfg.step
    dlam = lam_dot * dt
    if lam + dlam > 1.0 + 1e-12:
        raise ValueError(f"lambda + dlambda = {lam + dlam:.6g} exceeds 1")
    eig = eigendecompose(ann.at(lam))
    U = _step_at(cfg, lam, lam_dot)
    G = eig.vectors.conj().T @ U @ eig.vectors
    if dlam == 0.0:
        M = np.eye(eig.dim, dtype=complex)
    else:
        nxt = eigendecompose(ann.at(min(lam + dlam, 1.0)))
        v_new = _align(nxt.vectors, nxt.values, eig.vectors, lam)
        M = v_new.conj().T @ eig.vectors
    return AdiabaticFrameStep(lam=lam, dlam=dlam, dt=dt, G=G, M=M, energies=eig.values, basis=eig.vectors)


def _step_at(cfg: EvolutionConfig, lam: float, lam_dot: float) -> np.ndarray:
    """Step unitary with all coefficients taken at ``lambda`` (and its ``lambda_dot``)."""
    ann = cfg.annealing()
    h = cfg.step
    U = expm_hermitian(ann.H_i, h * (1.0 - lam)) @ expm_hermitian(ann.H_f, h * lam)
    if cfg.cd != "none":
        A = cfg.provider().at(lam).A_lambda
        U = U @ expm_hermitian(lam_dot * A, h)
    return U


@dataclass(frozen=True)
class SineSeries:
    """Sine-series content of a sampled mixing rate on ``lambda in [0, 1]``.

    ``coefficients[q-1]`` multiplies ``sin(pi q lambda)``. ``amplitude`` is
    ``R = sqrt(sum_q |c_q|^2)`` and ``normalized = coefficients / R`` has unit
    norm. ``offset`` holds the removed boundary values ``(a, b)``.
    """

    coefficients: np.ndarray
    lambdas: np.ndarray
    samples: np.ndarray
    offset: tuple[complex, complex] = (0.0, 0.0)

    @property
    def q_max(self) -> int:
        return self.coefficients.shape[0]

    @property
    def amplitude(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.coefficients) ** 2)))

    @property
    def normalized(self) -> np.ndarray:
        return self.coefficients / self.amplitude

    @property
    def dominant_mode(self) -> int:
        return int(np.argmax(np.abs(self.coefficients))) + 1

    def l2_norm_sq(self) -> float:
        """``2 int_0^1 |f|^2 dlambda`` by the trapezoid rule; equals ``sum |c_q|^2`` for band-limited ``f``."""
        return float(2.0 * np.trapezoid(np.abs(self.samples) ** 2, self.lambdas))


def sine_decompose(lambdas: np.ndarray, values: np.ndarray, q_max: int, subtract_offset: bool = False) -> SineSeries:
    """Project samples on a uniform grid over ``[0, 1]`` (endpoints included) onto ``sin(pi q lambda)``.

    The trapezoid projection ``c_q = 2 int f sin(pi q lambda)`` is a type-I
    discrete sine transform of the interior samples. With
    ``subtract_offset`` the linear interpolation between the endpoint values
    ``a`` and ``b`` is removed first.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    values = np.asarray(values, dtype=complex)
    n = lambdas.shape[0]
    if n < 3 or not np.allclose(lambdas, np.linspace(0.0, 1.0, n), atol=1e-12):
        raise ValueError("samples must lie on a uniform grid over [0, 1] including both endpoints")
    if q_max < 1 or q_max > n - 2:
        raise ValueError(f"q_max must be in [1, {n - 2}]")
    a, b = complex(values[0]), complex(values[-1])
    if subtract_offset:
        values = values - a + (a - b) * lambdas
    inner = values[1:-1]
    coeff = (scipy.fft.dst(inner.real, type=1) + 1j * scipy.fft.dst(inner.imag, type=1)) / (n - 1)
    return SineSeries(
        coefficients=coeff[:q_max], lambdas=lambdas, samples=values,
        offset=(a, b) if subtract_offset else (0.0, 0.0),
    )


def sample_R(cfg: EvolutionConfig, grid_points: int, channel: tuple[int, int] = (0, 1), residual: bool = True):
    """Mixing rate of one channel on a uniform ``lambda`` grid.

    Points whose forward step would leave ``[0, 1]`` are evaluated one step
    earlier, at ``1 - dlambda``. Eigenvector phases are carried continuously
    along the grid so the sampled function has no gauge jumps.
    """
    lams = np.linspace(0.0, 1.0, grid_points)
    vals = np.empty(grid_points, dtype=complex)
    i, j = channel
    prev = None
    for k, lam in enumerate(lams):
        try:
            step = extract_frame_step(cfg, float(lam))
        except ValueError:
            t = _time_of(cfg, float(lam))
            dlam = schedule_eval(cfg.sched, t)[1] * cfg.step
            step = extract_frame_step(cfg, max(0.0, 1.0 - dlam))
        rate = step.R_residual if residual else step.R
        phase = np.ones(step.basis.shape[1], dtype=complex)
        if prev is not None:
            ov = np.einsum("ij,ij->j", step.basis.conj(), prev)
            phase = np.where(np.abs(ov) > 1e-3, ov / np.abs(np.where(ov == 0, 1, ov)), 1.0)
        prev = step.basis * phase[None, :]
        vals[k] = np.conj(phase[i]) * rate[i, j] * phase[j]
    return lams, vals


def sample_R_and_decompose(cfg: EvolutionConfig, grid_points: int = 512, q_max: int = 16) -> SineSeries:
    """Sample the ``(0, 1)`` residual mixing rate and decompose it in ``sin(pi q lambda)``.

    For the linear schedule the endpoint offsets are subtracted first.
    """
    lams, vals = sample_R(cfg, grid_points)
    return sine_decompose(lams, vals, q_max, subtract_offset=cfg.schedule == "linear")

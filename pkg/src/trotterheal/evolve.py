"""Digitized and continuous-time propagation with optional counterdiabatic driving.

The digitized evolution applies, for ``k = 0 .. M-1`` and midpoint times
``t_k = (k + 1/2) dt``::

    psi <- exp(-i dt (1-lam_k) H_i) exp(-i dt lam_k H_f) exp(-i dt H_CD(t_k)) psi

so within a step the counterdiabatic factor hits the state first. The
reference evolution integrates ``H(t) + H_CD(t)`` with a fourth-order
commutator-free Magnus scheme (two exact exponentials per substep), halving
the substep block by block until the state is converged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .agp import AgpProvider
from .linalg import EigenSystem, eigendecompose, expm_hermitian
from .models import AnnealingHamiltonian, ModelSpec, Schedule, build_annealing, schedule_eval

CD_SETTINGS = ("none", "exact", "variational")
INITIAL_CONDITIONS = ("ground", "kick_compensated")
CHUNK = 2048
REF_TOL = 1e-10
REF_BLOCK = 64
REF_SPLIT = 256
REF_MAX_DEPTH = 40
REF_FLOOR = 1e-2
GROUND_TOL = 1e-8


class ReferenceNotConverged(RuntimeError):
    def __init__(self, refinement: int, interval: tuple[float, float]):
        self.refinement = refinement
        self.interval = interval
        super().__init__(
            f"reference evolution not converged with {refinement} substeps on "
            f"t in [{interval[0]:.6g}, {interval[1]:.6g}] at maximum bisection depth"
        )


@dataclass(frozen=True)
class EvolutionConfig:
    """One evolution: model, schedule, total time ``T``, Trotter step ``dt``, CD setting.

    ``T / dt`` is rounded to the nearest positive integer ``M`` and the step is
    re-derived as ``T / M``; :attr:`dt_adjusted` reports whether that changed
    ``dt``. ``hamiltonian`` overrides the Hamiltonians built from ``model``.
    ``reference_tol`` is the state-norm tolerance of :func:`run_reference`.
    """

    model: ModelSpec = field(default_factory=ModelSpec)
    schedule: str = "linear"
    T: float = 1.0
    dt: float = 0.01
    cd: str = "none"
    l: int = 1
    reference_refinement: int = 2
    reference_tol: float = REF_TOL
    initial: str = "ground"
    hamiltonian: AnnealingHamiltonian | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not (isinstance(self.T, (int, float)) and math.isfinite(self.T) and self.T > 0):
            raise ValueError(f"T: must be a positive finite number, got {self.T}")
        if not (isinstance(self.dt, (int, float)) and math.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt: must be a positive finite number, got {self.dt}")
        if self.cd not in CD_SETTINGS:
            raise ValueError(f"cd: must be one of {CD_SETTINGS}, got {self.cd!r}")
        if self.cd == "variational" and self.l < 1:
            raise ValueError(f"l: must be >= 1, got {self.l}")
        if self.reference_refinement < 2:
            raise ValueError("reference_refinement: must be >= 2")
        if not (isinstance(self.reference_tol, (int, float)) and 0 < self.reference_tol < 1):
            raise ValueError(f"reference_tol: must lie in (0, 1), got {self.reference_tol}")
        if self.initial not in INITIAL_CONDITIONS:
            raise ValueError(f"initial: must be one of {INITIAL_CONDITIONS}, got {self.initial!r}")
        if self.M < 1:
            raise ValueError(f"dt: T/dt = {self.T / self.dt:.3g} rounds to zero steps")
        Schedule(self.schedule, self.T)

    @property
    def M(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def step(self) -> float:
        """The step actually used, ``T / M``."""
        return self.T / self.M

    @property
    def dt_adjusted(self) -> bool:
        return not math.isclose(self.step, self.dt, rel_tol=1e-12)

    @property
    def sched(self) -> Schedule:
        return Schedule(self.schedule, self.T)

    def annealing(self) -> AnnealingHamiltonian:
        return self.hamiltonian if self.hamiltonian is not None else build_annealing(self.model)

    def provider(self) -> AgpProvider | None:
        if self.cd == "none":
            return None
        return AgpProvider(self.annealing(), self.cd, self.l)

    def with_(self, **kw) -> "EvolutionConfig":
        return replace(self, **kw)


@dataclass
class Trajectory:
    """Stroboscopic record at ``t_m = m * step``.

    ``overlaps[m, i] = <phi_i(lambda_m)|psi(t_m)>`` in the instantaneous
    eigenbasis of the reference Hamiltonian (no CD term). ``infidelity`` is
    filled by :func:`infidelity_series` or by the sweep driver.
    """

    times: np.ndarray
    lambdas: np.ndarray
    states: np.ndarray
    overlaps: np.ndarray
    energies: np.ndarray
    infidelity: np.ndarray | None = None
    kind: str = "digitized"
    refinement: int | None = None
    error_estimate: float | None = None

    @property
    def ground_mask(self) -> np.ndarray:
        """Levels within ``GROUND_TOL`` (relative) of the instantaneous ground energy."""
        scale = np.maximum(1.0, np.abs(self.energies).max(axis=1, keepdims=True))
        return self.energies - self.energies[:, :1] <= GROUND_TOL * scale

    @property
    def gs_infidelity(self) -> np.ndarray:
        """``1 - |P_0|^2``, with ``|P_0|^2`` summed over a (near-)degenerate ground manifold."""
        pop = np.where(self.ground_mask, self.populations, 0.0).sum(axis=1)
        return np.clip(1.0 - pop, 0.0, 1.0)

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.overlaps) ** 2

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


def initial_state(model: ModelSpec | AnnealingHamiltonian) -> np.ndarray:
    """Ground state of ``H_i`` with the phase convention of :func:`eigendecompose`."""
    ann = model if isinstance(model, AnnealingHamiltonian) else build_annealing(model)
    eig = eigendecompose(ann.H_i)
    scale = max(1.0, abs(eig.values[0]))
    if eig.dim > 1 and eig.values[1] - eig.values[0] < 1e-9 * scale:
        raise ValueError("initial Hamiltonian has a degenerate ground space")
    return eig.vectors[:, 0].copy()


def _midpoints(cfg: EvolutionConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    h = cfg.step
    tk = (np.arange(cfg.M) + 0.5) * h
    lam, dlam = schedule_eval(cfg.sched, tk)
    return tk, np.asarray(lam), np.asarray(dlam)


def _cd_eigs(provider: AgpProvider, lam: np.ndarray, dlam: np.ndarray):
    """Eigendecompositions of ``H_CD = dlam * A(lam)`` for a chunk of times."""
    A = provider.batch(lam)
    return np.linalg.eigh(dlam[:, None, None] * A)


def trotter_step_unitary(cfg: EvolutionConfig, t_k: float) -> np.ndarray:
    """Single first-order step ``e^{-i dt A H_i} e^{-i dt B H_f} [e^{-i dt H_CD}]`` at time ``t_k``."""
    ann = cfg.annealing()
    lam, dlam = schedule_eval(cfg.sched, t_k)
    h = cfg.step
    U = expm_hermitian(ann.H_i, h * (1.0 - lam)) @ expm_hermitian(ann.H_f, h * lam)
    if cfg.cd != "none":
        A = cfg.provider().at(lam).A_lambda
        U = U @ expm_hermitian(dlam * A, h)
    return U


def _overlaps(ann: AnnealingHamiltonian, lams: np.ndarray, states: np.ndarray):
    """Instantaneous-eigenbasis amplitudes and energies for each recorded state."""
    Hs = ann.batch(lams)
    w, v = np.linalg.eigh(Hs)
    scale = np.maximum(1.0, np.abs(w).max(axis=1))
    degenerate = (np.diff(w, axis=1) <= 1e-10 * scale[:, None]).any(axis=1)
    # phase convention: first non-negligible component real positive
    mag = np.abs(v)
    first = np.argmax(mag > 1e-12 * mag.max(axis=1, keepdims=True), axis=1)
    lead = np.take_along_axis(v, first[:, None, :], axis=1)[:, 0, :]
    v = v * (np.abs(lead) / lead)[:, None, :]
    for b in np.flatnonzero(degenerate):
        eig = eigendecompose(Hs[b])
        w[b], v[b] = eig.values, eig.vectors
    P = np.einsum("bji,bj->bi", v.conj(), states)
    return P, w


def _initial(cfg: EvolutionConfig, ann: AnnealingHamiltonian, provider) -> np.ndarray:
    psi = initial_state(ann)
    if cfg.initial == "kick_compensated" and provider is not None:
        # pre-rotate so that the first CD factor lands exactly on the start ground state
        _, lam0, dlam0 = (x[:1] for x in _midpoints(cfg))
        A0 = provider.at(float(lam0[0])).A_lambda
        psi = expm_hermitian(float(dlam0[0]) * A0, -cfg.step) @ psi
    return psi


def _record(cfg: EvolutionConfig, ann: AnnealingHamiltonian, states: np.ndarray, idx: np.ndarray, kind: str):
    times = idx * cfg.step
    times[-1] = cfg.T if idx[-1] == cfg.M else times[-1]
    lams = np.asarray(schedule_eval(cfg.sched, times)[0])
    P, E = _overlaps(ann, lams, states)
    return Trajectory(times=times, lambdas=lams, states=states, overlaps=P, energies=E, kind=kind)


def run_digitized(cfg: EvolutionConfig, record: str = "all") -> Trajectory:
    """First-order product-formula evolution from the ground state of ``H_i``.

    ``record="all"`` stores every stroboscopic time ``t_0 .. t_M``; ``"final"``
    stores only ``t_0`` and ``t_M`` (used by sweeps that need final values).
    """
    ann = cfg.annealing()
    provider = cfg.provider()
    h = cfg.step
    wi, vi = np.linalg.eigh(ann.H_i)
    wf, vf = np.linalg.eigh(ann.H_f)
    vih, vfh = vi.conj().T, vf.conj().T
    psi = _initial(cfg, ann, provider)
    keep_all = record == "all"
    states = [psi.copy()]
    _, lam, dlam = _midpoints(cfg)
    for start in range(0, cfg.M, CHUNK):
        sl = slice(start, min(start + CHUNK, cfg.M))
        ph_i = np.exp(-1j * h * (1.0 - lam[sl])[:, None] * wi[None, :])
        ph_f = np.exp(-1j * h * lam[sl][:, None] * wf[None, :])
        if provider is not None:
            wc, vc = _cd_eigs(provider, lam[sl], dlam[sl])
            ph_c = np.exp(-1j * h * wc)
            vch = np.swapaxes(vc.conj(), -1, -2)
        for j in range(sl.stop - sl.start):
            if provider is not None:
                psi = vc[j] @ (ph_c[j] * (vch[j] @ psi))
            psi = vf @ (ph_f[j] * (vfh @ psi))
            psi = vi @ (ph_i[j] * (vih @ psi))
            if keep_all:
                states.append(psi)
        # roundoff shrinks the norm by ~1e-16 per step; over 1e5 steps that biases 1 - |<a|b>|^2
        psi = psi / np.linalg.norm(psi)
        if keep_all:
            states[-1] = psi
    if not keep_all:
        states.append(psi)
        idx = np.array([0, cfg.M], dtype=float)
    else:
        idx = np.arange(cfg.M + 1, dtype=float)
    return _record(cfg, ann, np.array(states), idx, "digitized")


# fourth-order commutator-free Magnus: Gauss nodes and weights
_C1 = 0.5 - math.sqrt(3) / 6
_C2 = 0.5 + math.sqrt(3) / 6
_A1 = (3 - 2 * math.sqrt(3)) / 12
_A2 = (3 + 2 * math.sqrt(3)) / 12


def total_hamiltonian(cfg: EvolutionConfig) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorized ``t -> H(lambda(t)) + dlambda/dt * A(lambda(t))``."""
    ann = cfg.annealing()
    provider = cfg.provider()
    sched = cfg.sched

    def H_tot(t: np.ndarray) -> np.ndarray:
        lam, dlam = schedule_eval(sched, np.asarray(t, dtype=float))
        lam = np.atleast_1d(lam)
        dlam = np.atleast_1d(dlam)
        Hs = ann.batch(lam)
        if provider is not None:
            Hs = Hs + dlam[:, None, None] * provider.batch(lam)
        return Hs

    return H_tot


def _expm_stack(H: np.ndarray, theta: float) -> np.ndarray:
    w, v = np.linalg.eigh(H)
    return (v * np.exp(-1j * theta * w)[:, None, :]) @ np.swapaxes(v.conj(), -1, -2)


def propagate_magnus(H_tot, t0: float, t1: float, n_steps: int, r: int, psi: np.ndarray, record: bool = True):
    """Integrate ``i d/dt psi = H_tot(t) psi`` over ``[t0, t1]`` split into ``n_steps`` records of ``r`` substeps.

    Returns the states at the ``n_steps + 1`` record times (or only the first
    and last if ``record`` is false). Substeps are processed in chunks of at
    most ``CHUNK`` so memory stays bounded for large ``r``.
    """
    span = (t1 - t0) / n_steps
    h = span / r
    states = [psi.copy()]
    total = n_steps * r
    for start in range(0, total, CHUNK):
        sub = np.arange(start, min(start + CHUNK, total))
        s = t0 + sub * h
        H1 = H_tot(s + _C1 * h)
        H2 = H_tot(s + _C2 * h)
        U_first = _expm_stack(_A2 * H1 + _A1 * H2, h)
        U_second = _expm_stack(_A1 * H1 + _A2 * H2, h)
        for j, q in enumerate(sub):
            psi = U_second[j] @ (U_first[j] @ psi)
            if record and (q + 1) % r == 0:
                states.append(psi)
    if not record:
        states.append(psi)
    return np.array(states)


def run_reference(
    cfg: EvolutionConfig,
    record: str = "all",
    tol: float | None = None,
    block: int = REF_BLOCK,
) -> Trajectory:
    """Converged continuous-time evolution under ``H(t) + H_CD(t)``.

    The ``M`` stroboscopic intervals are integrated in blocks of ``block``.
    Within a block every interval is split into ``r`` substeps, ``r`` doubling
    until the block's end state moves by less than ``tol`` times the block's
    share of ``T``, so the local errors add up to at most ``tol``. A block
    that needs more than ``REF_SPLIT`` substeps per interval is bisected; a
    single interval that does is bisected in time (up to ``REF_MAX_DEPTH``
    levels). Refinement thus concentrates where the Hamiltonian varies fastest.

    Each accepted piece is allowed at least ``REF_FLOOR * tol``. Without this
    absolute floor a jump in ``H`` (a matrix element crossing a numerical
    threshold) could never be resolved by bisection, since the deviation and
    the proportional budget both shrink with the piece. The sum of accepted
    deviations is stored in :attr:`Trajectory.error_estimate`.

    ``tol`` defaults to ``cfg.reference_tol``.
    """
    tol = cfg.reference_tol if tol is None else tol
    ann = cfg.annealing()
    H_tot = total_hamiltonian(cfg)
    psi = initial_state(ann)
    keep_all = record == "all"
    span = cfg.T / cfg.M
    r_base = cfg.reference_refinement
    floor = 256 * np.finfo(float).eps
    stats = {"r_max": r_base, "depth": 0, "error": 0.0}

    def t_at(k: int) -> float:
        return cfg.T if k == cfg.M else k * span

    def refine(ta: float, tb: float, n: int, psi: np.ndarray, rec: bool, limit: int):
        """Doubling loop; returns the converged states or ``None`` past ``limit``."""
        local_tol = max(tol * (tb - ta) / cfg.T, REF_FLOOR * tol, floor)
        r = r_base
        prev = propagate_magnus(H_tot, ta, tb, n, r, psi, rec)
        while 2 * r <= limit:
            r *= 2
            cur = propagate_magnus(H_tot, ta, tb, n, r, psi, rec)
            dev = float(np.linalg.norm(cur[-1] - prev[-1]))
            prev = cur
            if dev < local_tol:
                stats["r_max"] = max(stats["r_max"], r)
                stats["error"] += dev
                return prev
        return None

    def interval(ta: float, tb: float, psi: np.ndarray, depth: int) -> np.ndarray:
        out = refine(ta, tb, 1, psi, False, REF_SPLIT)
        if out is not None:
            return out[-1]
        if depth >= REF_MAX_DEPTH:
            raise ReferenceNotConverged(REF_SPLIT, (ta, tb))
        stats["depth"] = max(stats["depth"], depth + 1)
        tm = 0.5 * (ta + tb)
        return interval(tm, tb, interval(ta, tm, psi, depth + 1), depth + 1)

    def steps(b0: int, b1: int, psi: np.ndarray) -> np.ndarray:
        if b1 - b0 == 1:
            return np.array([psi, interval(t_at(b0), t_at(b1), psi, 0)])
        out = refine(t_at(b0), t_at(b1), b1 - b0, psi, keep_all, REF_SPLIT)
        if out is not None:
            return out
        mid = (b0 + b1) // 2
        left = steps(b0, mid, psi)
        right = steps(mid, b1, left[-1])
        return np.concatenate([left, right[1:]]) if keep_all else np.array([psi, right[-1]])

    states = [psi.copy()]
    for b0 in range(0, cfg.M, block):
        seg = steps(b0, min(b0 + block, cfg.M), psi)
        psi = seg[-1]
        if keep_all:
            states.extend(seg[1:])
    if not keep_all:
        states.append(psi)
    idx = np.arange(cfg.M + 1, dtype=float) if keep_all else np.array([0, cfg.M], dtype=float)
    traj = _record(cfg, ann, np.array(states), idx, "reference")
    traj.refinement = stats["r_max"] * 2 ** stats["depth"]
    traj.error_estimate = stats["error"]
    return traj


def infidelity_series(ref: Trajectory, dig: Trajectory) -> np.ndarray:
    """``1 - |<psi_ref(t_m)|psi_dig(t_m)>|^2`` on a shared stroboscopic grid."""
    if ref.times.shape != dig.times.shape or not np.allclose(ref.times, dig.times, rtol=1e-12, atol=1e-12):
        raise ValueError("trajectories are recorded on different time grids")
    ov = np.einsum("bi,bi->b", ref.states.conj(), dig.states)
    # normalized so that roundoff drift of either norm does not bias small infidelities
    norms = np.linalg.norm(ref.states, axis=1) * np.linalg.norm(dig.states, axis=1)
    return np.clip(1.0 - (np.abs(ov) / norms) ** 2, 0.0, 1.0)


def digital_infidelity(cfg: EvolutionConfig, record: str = "all") -> Trajectory:
    """Digitized trajectory with its :attr:`Trajectory.infidelity` filled against the reference."""
    dig = run_digitized(cfg, record)
    ref = run_reference(cfg, record)
    dig.infidelity = infidelity_series(ref, dig)
    return dig

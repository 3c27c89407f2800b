"""Single-point evaluations and parameter scans.

A scan point is one :class:`~trotterheal.evolve.EvolutionConfig`. With exact
counterdiabatic driving the continuous reference stays on the instantaneous
ground state up to a phase, so the digital infidelity equals ``1 - |P_0|^2``
of the digitized state and the reference run can be skipped
(``reference="auto"``). ``"always"`` runs it regardless and ``"never"`` skips
it and reports ``NaN`` where it would be needed.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .evolve import EvolutionConfig, Trajectory, infidelity_series, run_digitized, run_reference

log = logging.getLogger(__name__)

REFERENCE_MODES = ("auto", "always", "never")


@dataclass
class PointResult:
    cfg: EvolutionConfig
    trajectory: Trajectory | None
    infidelity: np.ndarray
    error: str | None = None

    @property
    def final_infidelity(self) -> float:
        return float(self.infidelity[-1])

    @property
    def final_gs_infidelity(self) -> float:
        return float(self.trajectory.gs_infidelity[-1])


def evaluate(cfg: EvolutionConfig, record: str = "final", reference: str = "auto") -> PointResult:
    """Digitized run plus its digital infidelity series."""
    if reference not in REFERENCE_MODES:
        raise ValueError(f"reference must be one of {REFERENCE_MODES}")
    dig = run_digitized(cfg, record)
    if reference == "always" or (reference == "auto" and cfg.cd != "exact"):
        ref = run_reference(cfg, record)
        inf = infidelity_series(ref, dig)
    elif cfg.cd == "exact":
        inf = dig.gs_infidelity
    else:
        inf = np.full(dig.times.shape, np.nan)
    dig.infidelity = inf
    return PointResult(cfg=cfg, trajectory=dig, infidelity=inf)


def _evaluate_safe(args) -> PointResult:
    cfg, record, reference = args
    try:
        return evaluate(cfg, record, reference)
    except Exception as exc:  # recorded per point; the scan continues
        log.warning("point T=%g dt=%g failed: %s", cfg.T, cfg.dt, exc)
        return PointResult(cfg=cfg, trajectory=None, infidelity=np.array([np.nan]), error=f"{type(exc).__name__}: {exc}")


def resolve_workers(workers: int | None) -> int:
    """Explicit value, else ``TROTTERHEAL_WORKERS``, else 1."""
    if workers is None:
        env = os.environ.get("TROTTERHEAL_WORKERS")
        workers = int(env) if env else 1
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    return workers


def run_points(
    cfgs: list[EvolutionConfig],
    record: str = "final",
    reference: str = "auto",
    workers: int | None = None,
) -> list[PointResult]:
    """Evaluate independent points, in input order, optionally in worker processes."""
    workers = resolve_workers(workers)
    jobs = [(c, record, reference) for c in cfgs]
    if workers == 1 or len(jobs) < 2:
        return [_evaluate_safe(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_evaluate_safe, jobs, chunksize=1))


def log_grid(lo: float, hi: float, n: int) -> np.ndarray:
    """``n`` log-spaced values in ``[lo, hi]``, endpoints included."""
    if not (0 < lo < hi) or n < 2:
        raise ValueError("log grid needs 0 < lo < hi and n >= 2")
    return np.logspace(np.log10(lo), np.log10(hi), n)


def snap_to_step(T_values, dt: float) -> np.ndarray:
    """Round each ``T`` to a positive multiple of ``dt`` (duplicates removed, order kept)."""
    snapped = np.maximum(1, np.round(np.asarray(T_values, dtype=float) / dt)) * dt
    _, idx = np.unique(np.round(snapped / dt).astype(np.int64), return_index=True)
    return snapped[np.sort(idx)]


def scan_T(base: EvolutionConfig, T_values, reference: str = "auto", workers: int | None = None) -> np.ndarray:
    """Final digital infidelity for each ``T`` at fixed ``dt``."""
    cfgs = [base.with_(T=float(T)) for T in T_values]
    return np.array([r.final_infidelity for r in run_points(cfgs, "final", reference, workers)])

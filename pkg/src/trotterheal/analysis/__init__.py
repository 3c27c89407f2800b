"""Trajectory analysis, perturbative error models and fits."""

from __future__ import annotations

import numpy as np

from ..evolve import Trajectory
from .bessel import bessel_j, bessel_j_all
from .error_models import (
    boundary_offset_single_qubit,
    model_ramp_boundary,
    model_ramp_Pi,
    model_ramp_Pi_t,
    model_sin2_bessel,
)
from .fitting import FitFailed, FitResult, fit_model, fit_power_law, model_infidelity
from .frame import (
    AdiabaticFrameStep,
    CrossingDetected,
    SineSeries,
    extract_frame_step,
    sample_R,
    sample_R_and_decompose,
    sine_decompose,
)


def gs_infidelity(traj: Trajectory) -> np.ndarray:
    """``1 - |P_0(t_m)|^2`` for every recorded time.

    A degenerate ground level counts as a whole, see
    :attr:`~trotterheal.evolve.Trajectory.gs_infidelity`.
    """
    return traj.gs_infidelity


def excited_population_bound(traj: Trajectory) -> np.ndarray:
    """``sum_{i excited} |P_i(t_m)|^2``; equal to :func:`gs_infidelity` by completeness."""
    return np.where(traj.ground_mask, 0.0, traj.populations).sum(axis=1)


__all__ = [
    "AdiabaticFrameStep",
    "CrossingDetected",
    "FitFailed",
    "FitResult",
    "SineSeries",
    "bessel_j",
    "bessel_j_all",
    "boundary_offset_single_qubit",
    "excited_population_bound",
    "extract_frame_step",
    "fit_model",
    "fit_power_law",
    "gs_infidelity",
    "model_infidelity",
    "model_ramp_Pi",
    "model_ramp_Pi_t",
    "model_ramp_boundary",
    "model_sin2_bessel",
    "sample_R",
    "sample_R_and_decompose",
    "sine_decompose",
]

"""Fits of the perturbative error models and power laws to infidelity scans.

Model fits minimize ``sum_j (log I_model(T_j) - log I_j)^2`` over
``(qbar, Delta, log R)`` with a bounded trust-region Gauss-Newton solver
(:func:`scipy.optimize.least_squares`). ``R`` enters the model only as
``|R|^2``, so its optimum given ``(qbar, Delta)`` is closed form; starting
points are the best cells of a profile scan over ``(qbar, Delta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .error_models import model_ramp_Pi, model_sin2_bessel

QBAR_BOUNDS = (0.25, 8.0)
DELTA_BOUNDS = (1e-6, 20.0)
LOG_FLOOR = 1e-300
MODELS = ("ramp", "bessel")


class FitFailed(RuntimeError):
    def __init__(self, message: str, diagnostics: list[dict]):
        self.diagnostics = diagnostics
        super().__init__(message)


@dataclass(frozen=True)
class FitResult:
    model: str
    params: dict
    residual: float
    fit_window: tuple[float, float]
    n_starts: int
    seed: int | None = None
    n_points: int = 0
    diagnostics: list = field(default_factory=list, compare=False, repr=False)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "params": {k: float(v) for k, v in self.params.items()},
            "residual": float(self.residual),
            "window": [float(self.fit_window[0]), float(self.fit_window[1])],
            "n_starts": self.n_starts,
            "seed": self.seed,
            "n_points": self.n_points,
        }


def model_infidelity(model: str, T, qbar: float, delta: float, R: float) -> np.ndarray:
    """``|P(T)|^2`` for ``model`` in ``{"ramp", "bessel"}``."""
    T = np.asarray(T, dtype=float)
    if model == "ramp":
        P = model_ramp_Pi(T, R, qbar, delta)
    elif model == "bessel":
        P = model_sin2_bessel(T, R, qbar, delta)
    else:
        raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")
    return np.abs(P) ** 2


def _window(T, I, window):
    T = np.asarray(T, dtype=float)
    I = np.asarray(I, dtype=float)
    if T.shape != I.shape:
        raise ValueError("T and infidelity arrays differ in shape")
    lo, hi = window if window is not None else (float(T.min()), float(T.max()))
    keep = (T >= lo) & (T <= hi) & (I > 0) & np.isfinite(I)
    return T[keep], I[keep], (float(lo), float(hi))


def fit_model(
    T,
    infidelity,
    model: str = "ramp",
    window: tuple[float, float] | None = None,
    n_starts: int = 24,
    seed: int = 0,
    qbar: float | None = None,
    bounds: dict | None = None,
) -> FitResult:
    """Fit ``(qbar, Delta, R)`` of a perturbative model to ``(T, I)`` data.

    ``qbar`` fixes the mode index when given. ``bounds`` may override
    ``{"qbar": (lo, hi), "delta": (lo, hi)}``. The result with the lowest RMS
    log-residual wins; ties go to the earlier start.
    """
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")
    T, I, win = _window(T, infidelity, window)
    if T.size < 8:
        raise ValueError(f"need at least 8 points inside the fit window, got {T.size}")
    b = {"qbar": QBAR_BOUNDS, "delta": DELTA_BOUNDS}
    b.update(bounds or {})
    logI = np.log(I)
    fixed_q = qbar is not None
    rng = np.random.default_rng(seed)

    def unpack(x):
        if fixed_q:
            return float(qbar), x[0], x[1]
        return x[0], x[1], x[2]

    def resid(x):
        q, d, logR = unpack(x)
        m = model_infidelity(model, T, q, d, 1.0)
        return np.log(np.maximum(m, LOG_FLOOR)) + 2.0 * logR - logI

    lo = ([] if fixed_q else [b["qbar"][0]]) + [b["delta"][0], -350.0]
    hi = ([] if fixed_q else [b["qbar"][1]]) + [b["delta"][1], 350.0]
    best, diagnostics = None, []
    # The log landscape is riddled with narrow basins (nodes of |P|), so local
    # starts come from a profile scan: R is eliminated in closed form and the
    # RMS is tabulated on a (qbar, Delta) grid; the best cells, jittered with
    # the seeded generator, are polished by least squares.
    d_grid = np.linspace(max(b["delta"][0], 0.05), min(b["delta"][1], 8.0), 600)
    q_grid = np.array([float(qbar)]) if fixed_q else np.arange(
        max(b["qbar"][0], 0.5), min(b["qbar"][1], 4.0) + 1e-9, 0.05
    )
    prof = np.empty((q_grid.size, d_grid.size))
    for iq, q in enumerate(q_grid):
        for jd, d in enumerate(d_grid):
            r = logI - np.log(np.maximum(model_infidelity(model, T, q, d, 1.0), LOG_FLOOR))
            prof[iq, jd] = np.sqrt(np.mean((r - r.mean()) ** 2))
    order = np.argsort(prof, axis=None, kind="stable")[:n_starts]
    d_step = d_grid[1] - d_grid[0]
    for k, flat in enumerate(order):
        iq, jd = np.unravel_index(flat, prof.shape)
        q0 = float(q_grid[iq]) if fixed_q else float(np.clip(q_grid[iq] + rng.uniform(-0.025, 0.025), *b["qbar"]))
        d0 = float(np.clip(d_grid[jd] + rng.uniform(-0.5, 0.5) * d_step, *b["delta"]))
        base = np.log(np.maximum(model_infidelity(model, T, q0, d0, 1.0), LOG_FLOOR))
        logR0 = float(np.clip(0.5 * np.mean(logI - base), -349.0, 349.0))
        x0 = ([] if fixed_q else [q0]) + [d0, logR0]
        try:
            sol = least_squares(resid, x0, bounds=(lo, hi), method="trf", x_scale="jac", max_nfev=400)
        except (ValueError, FloatingPointError) as exc:
            diagnostics.append({"start": k, "x0": x0, "error": str(exc)})
            continue
        rms = float(np.sqrt(np.mean(sol.fun**2)))
        diagnostics.append({"start": k, "x0": x0, "x": sol.x.tolist(), "rms": rms, "status": int(sol.status)})
        if not np.isfinite(rms):
            continue
        if best is None or rms < best[0]:
            best = (rms, sol.x, k)
    if best is None:
        raise FitFailed(f"all {n_starts} starts failed", diagnostics)
    q, d, logR = unpack(best[1])
    return FitResult(
        model=model,
        params={"qbar": float(q), "delta": float(d), "R": float(math.exp(logR))},
        residual=best[0],
        fit_window=win,
        n_starts=n_starts,
        seed=seed,
        n_points=int(T.size),
        diagnostics=diagnostics,
    )


def fit_power_law(x, y, window: tuple[float, float] | None = None) -> FitResult:
    """Ordinary least squares of ``log y = beta log x + log amp``."""
    x, y, win = _window(x, y, window)
    if x.size < 5:
        raise ValueError(f"need at least 5 points inside the window, got {x.size}")
    lx = np.log(x)
    if np.ptp(lx) == 0:
        raise ValueError("degenerate window: all abscissae equal")
    A = np.column_stack([lx, np.ones_like(lx)])
    coef, *_ = np.linalg.lstsq(A, np.log(y), rcond=None)
    res = np.log(y) - A @ coef
    return FitResult(
        model="power",
        params={"beta": float(coef[0]), "amp": float(math.exp(coef[1]))},
        residual=float(np.sqrt(np.mean(res**2))),
        fit_window=win,
        n_starts=1,
        n_points=int(x.size),
    )

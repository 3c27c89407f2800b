"""Experiment configs, named recipes and the files they produce.

An experiment is a list of :class:`Section` objects. Each section expands to a
grid of :class:`~trotterheal.evolve.EvolutionConfig` points (T x dt x CD
setting x l) and carries the fits to run on its final infidelities. Running an
experiment yields an :class:`Outcome` that can be written as ``scan.csv``,
``fits.json``, ``plot.gp`` and ``meta.json``.

The ``model`` CSV column is a label that also encodes the model parameters
the fixed header has no room for (``ising:J_Z=0.5``, ``pspin:p=2``) and a
``/kick`` suffix for the kick-compensated initial condition.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .analysis.error_models import boundary_offset_single_qubit
from .analysis.fitting import FitFailed, fit_model, fit_power_law
from .evolve import CD_SETTINGS, INITIAL_CONDITIONS, REF_TOL, EvolutionConfig
from .models import ModelSpec
from .sweep import PointResult, log_grid, run_points, snap_to_step

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
CSV_HEADER = (
    "model", "N", "schedule", "cd", "l", "T", "dt", "t", "lambda",
    "infidelity", "gs_infidelity", "p0sq", "p1sq", "p2sq", "p3sq",
)
DEFAULT_T_GRID = (0.1, 100.0, 40)
FIT_MODELS = ("ramp", "bessel", "power")
OUTPUT_FORMATS = ("csv", "json", "gp")
RECORD_MODES = ("final", "all")
SCHEDULES = ("linear", "sin2")
QUANTITIES = ("infidelity", "gs_infidelity")


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


@dataclass(frozen=True)
class FitSpec:
    """One fit per group of final infidelities.

    ``x="T"`` fits ``I(T)`` per ``(cd, l, dt)`` group; ``x="dt"`` fits ``I(dt)``
    per ``(cd, l, T)`` group (power law only). ``cd`` restricts the fit to
    some CD settings. ``quantity`` selects the digital infidelity or the
    ground-state infidelity of the final state.
    """

    model: str
    window: tuple[float, float] | None = None
    n_starts: int = 24
    seed: int = 0
    qbar: float | None = None
    x: str = "T"
    cd: tuple[str, ...] | None = None
    quantity: str = "infidelity"

    def __post_init__(self):
        if self.model not in FIT_MODELS:
            raise ConfigError(f"fit.model: must be one of {FIT_MODELS}, got {self.model!r}")
        if self.x not in ("T", "dt"):
            raise ConfigError(f"fit.x: must be 'T' or 'dt', got {self.x!r}")
        if self.x == "dt" and self.model != "power":
            raise ConfigError("fit.x: fits against dt need fit.model='power'")
        if self.window is not None:
            lo, hi = self.window
            if not (0 < lo < hi):
                raise ConfigError(f"fit.window: need 0 < a < b, got {self.window}")
        if self.n_starts < 1:
            raise ConfigError(f"fit.n_starts: must be >= 1, got {self.n_starts}")
        if self.quantity not in QUANTITIES:
            raise ConfigError(f"fit.quantity: must be one of {QUANTITIES}, got {self.quantity!r}")


@dataclass(frozen=True)
class Section:
    model: ModelSpec
    schedule: str = "linear"
    T_values: tuple[float, ...] | None = None
    dt_values: tuple[float, ...] = (0.01,)
    cd_settings: tuple[str, ...] = ("exact",)
    l_values: tuple[int, ...] = (1,)
    initial: str = "ground"
    record: str = "final"
    fits: tuple[FitSpec, ...] = ()
    reference_tol: float = REF_TOL
    snap: bool = True

    def __post_init__(self):
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"schedule: must be one of {SCHEDULES}, got {self.schedule!r}")
        if not self.dt_values:
            raise ConfigError("sweep.dt_values: must not be empty")
        for dt in self.dt_values:
            if not (isinstance(dt, (int, float)) and math.isfinite(dt) and dt > 0):
                raise ConfigError(f"dt: every value must be a positive finite number, got {dt}")
        if self.T_values is not None:
            if not self.T_values:
                raise ConfigError("sweep.T_values: must not be empty")
            for T in self.T_values:
                if not (isinstance(T, (int, float)) and math.isfinite(T) and T > 0):
                    raise ConfigError(f"T: every value must be a positive finite number, got {T}")
        if not self.cd_settings:
            raise ConfigError("sweep.cd_settings: must not be empty")
        for cd in self.cd_settings:
            if cd not in CD_SETTINGS:
                raise ConfigError(f"cd: must be one of {CD_SETTINGS}, got {cd!r}")
        for l in self.l_values:
            if not (isinstance(l, int) and l >= 1):
                raise ConfigError(f"l: every value must be an integer >= 1, got {l!r}")
        if "variational" in self.cd_settings and not self.l_values:
            raise ConfigError("sweep.l_values: variational CD needs at least one l")
        if self.initial not in INITIAL_CONDITIONS:
            raise ConfigError(f"initial: must be one of {INITIAL_CONDITIONS}, got {self.initial!r}")
        if self.record not in RECORD_MODES:
            raise ConfigError(f"record: must be one of {RECORD_MODES}, got {self.record!r}")
        if not (isinstance(self.reference_tol, (int, float)) and 0 < self.reference_tol < 1):
            raise ConfigError(f"reference_tol: must lie in (0, 1), got {self.reference_tol!r}")

    @property
    def label(self) -> str:
        return model_label(self.model, self.initial)

    def T_grid(self, dt: float) -> np.ndarray:
        T = log_grid(*DEFAULT_T_GRID) if self.T_values is None else np.asarray(self.T_values, dtype=float)
        # without snapping a T that is not a multiple of dt runs with the step T / round(T / dt)
        return snap_to_step(T, dt) if self.snap else T

    def points(self) -> list[EvolutionConfig]:
        out = []
        for cd in self.cd_settings:
            ls = self.l_values if cd == "variational" else (1,)
            for l in ls:
                for dt in self.dt_values:
                    for T in self.T_grid(dt):
                        out.append(EvolutionConfig(
                            model=self.model, schedule=self.schedule, T=float(T), dt=float(dt),
                            cd=cd, l=int(l), initial=self.initial, reference_tol=float(self.reference_tol),
                        ))
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.to_dict()
        return d


def model_label(model: ModelSpec, initial: str = "ground") -> str:
    """Compact model label used in the ``model`` CSV column."""
    if model.family == "single_qubit":
        label = "single_qubit" if model.h == 1.0 else f"single_qubit:h={model.h:g}"
    elif model.family == "ising":
        parts = [f"J_Z={model.J_Z:g}"]
        if model.K != 1.0:
            parts.append(f"K={model.K:g}")
        if not model.periodic:
            parts.append("open")
        label = "ising:" + ",".join(parts)
    else:
        parts = [f"p={model.p}"]
        if model.J_p != 1.0:
            parts.append(f"J_p={model.J_p:g}")
        if model.representation != "dicke":
            parts.append(model.representation)
        label = "pspin:" + ",".join(parts)
    return label if initial == "ground" else f"{label}/kick"


def _dt_label(cfg: EvolutionConfig) -> float:
    # T / M differs from dt by rounding even when no adjustment happened
    return cfg.step if cfg.dt_adjusted else cfg.dt


def _l_label(cfg: EvolutionConfig) -> int:
    return cfg.l if cfg.cd == "variational" else 0


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


@dataclass
class Outcome:
    recipe: str
    sections: tuple[Section, ...]
    results: list[tuple[int, PointResult]]
    fits: list[dict]
    failures: list[dict]
    wall_time: float
    workers: int | None
    checks: list[Check] = field(default_factory=list)

    def rows(self) -> list[tuple]:
        rows = []
        for s_idx, res in self.results:
            if res.error is not None:
                continue
            sec, cfg, traj = self.sections[s_idx], res.cfg, res.trajectory
            idx = range(len(traj.times)) if sec.record == "all" else [len(traj.times) - 1]
            pops = traj.populations
            gs = traj.gs_infidelity
            for m in idx:
                p = [float(pops[m, k]) if k < pops.shape[1] else 0.0 for k in range(4)]
                rows.append((
                    sec.label, cfg.model.N, cfg.schedule, cfg.cd, _l_label(cfg), cfg.T, _dt_label(cfg),
                    float(traj.times[m]), float(traj.lambdas[m]), float(res.infidelity[m]), float(gs[m]), *p,
                ))
        rows.sort()
        return rows

    def final_values(self, s_idx: int, quantity: str = "infidelity") -> list[tuple[EvolutionConfig, float]]:
        """Final ``infidelity`` (digital) or ``gs_infidelity`` of every successful point of a section."""
        if quantity not in QUANTITIES:
            raise ValueError(f"unknown quantity {quantity!r}")
        return [
            (r.cfg, r.final_infidelity if quantity == "infidelity" else r.final_gs_infidelity)
            for i, r in self.results
            if i == s_idx and r.error is None
        ]

    def dt_adjustments(self) -> list[dict]:
        seen, out = set(), []
        for _, r in self.results:
            c = r.cfg
            if c.dt_adjusted and (c.T, c.dt) not in seen:
                seen.add((c.T, c.dt))
                out.append({"T": c.T, "dt": c.dt, "step": c.step, "M": c.M})
        return out

    def find_fit(self, **key) -> dict | None:
        for f in self.fits:
            if all(f["key"].get(k) == v for k, v in key.items()):
                return f
        return None


def _fit_key(sec: Section, cfg: EvolutionConfig, x: str) -> dict:
    key = {"model": sec.label, "N": cfg.model.N, "schedule": cfg.schedule, "cd": cfg.cd, "l": _l_label(cfg)}
    if cfg.model.family == "ising":
        key["J_Z"] = cfg.model.J_Z
    if x == "T":
        key["dt"] = cfg.dt
    else:
        key["T"] = cfg.T
    return key


def run_fits(recipe: str, sections, outcome: Outcome) -> tuple[list[dict], list[dict]]:
    fits, failures = [], []
    for s_idx, sec in enumerate(sections):
        for spec in sec.fits:
            groups: dict[str, tuple[dict, list, list]] = {}
            for cfg, val in outcome.final_values(s_idx, spec.quantity):
                if spec.cd is not None and cfg.cd not in spec.cd:
                    continue
                key = _fit_key(sec, cfg, spec.x)
                k = json.dumps(key, sort_keys=True)
                entry = groups.setdefault(k, (key, [], []))
                entry[1].append(cfg.T if spec.x == "T" else _dt_label(cfg))
                entry[2].append(val)
            for k in sorted(groups):
                key, xs, ys = groups[k]
                order = np.argsort(xs, kind="stable")
                xs, ys = np.asarray(xs)[order], np.asarray(ys)[order]
                try:
                    if spec.model == "power":
                        res = fit_power_law(xs, ys, spec.window)
                    else:
                        res = fit_model(xs, ys, spec.model, spec.window, spec.n_starts, spec.seed, spec.qbar)
                except (ValueError, FitFailed) as exc:
                    failures.append({"fit": spec.model, "key": key, "error": str(exc)})
                    continue
                d = res.to_dict()
                fits.append({
                    "recipe": recipe, "key": key, "model": spec.model, "params": d["params"],
                    "residual": d["residual"], "window": d["window"], "seed": spec.seed,
                    "quantity": spec.quantity,
                })
    return fits, failures


def execute(recipe: str, sections, workers: int | None = None) -> Outcome:
    """Evaluate every point of every section, then run the fits."""
    sections = tuple(sections)
    t0 = time.perf_counter()
    tagged = [(i, cfg) for i, sec in enumerate(sections) for cfg in sec.points()]
    record_of = {i: sec.record for i, sec in enumerate(sections)}
    results: list[tuple[int, PointResult]] = []
    # one pool per record mode keeps the work queue flat
    for mode in RECORD_MODES:
        batch = [(i, c) for i, c in tagged if record_of[i] == mode]
        if not batch:
            continue
        res = run_points([c for _, c in batch], record=mode, workers=workers)
        results.extend((i, r) for (i, _), r in zip(batch, res))
    failures = [
        {"section": i, "T": r.cfg.T, "dt": r.cfg.dt, "cd": r.cfg.cd, "l": _l_label(r.cfg), "error": r.error}
        for i, r in results if r.error is not None
    ]
    out = Outcome(recipe, sections, results, [], failures, 0.0, workers)
    out.fits, fit_failures = run_fits(recipe, sections, out)
    out.failures.extend(fit_failures)
    out.wall_time = time.perf_counter() - t0
    return out


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".17g")


def write_csv(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_fits(path: Path, fits: list[dict]) -> None:
    path.write_text(json.dumps(fits, indent=2, sort_keys=True) + "\n")


def plot_script(outcome: Outcome, csv_name: str = "scan.csv") -> str:
    """Gnuplot script drawing one curve per evolution group of the CSV."""
    lines = [
        "# generated by trotterheal; run with: gnuplot -p plot.gp",
        'set datafile separator ","',
        "set logscale xy",
        'set ylabel "digital infidelity"',
        "set key outside right",
    ]
    final_curves: dict[str, str] = {}
    time_curves: list[tuple[str, str]] = []
    for s_idx, sec in enumerate(outcome.sections):
        for cfg in sec.points():
            base = (
                f'strcol(1) eq "{sec.label}" && $2=={cfg.model.N} && strcol(3) eq "{cfg.schedule}"'
                f' && strcol(4) eq "{cfg.cd}" && $5=={_l_label(cfg)}'
            )
            if sec.record == "final":
                cond = f"{base} && abs($7-{_dt_label(cfg):.17g})<1e-12*{_dt_label(cfg):.17g}"
                title = f"{sec.label} N={cfg.model.N} {cfg.cd} l={_l_label(cfg)} dt={cfg.dt:g}"
                final_curves.setdefault(title, cond)
            else:
                cond = f"{base} && abs($6-{cfg.T:.17g})<1e-9 && abs($7-{_dt_label(cfg):.17g})<1e-12*{_dt_label(cfg):.17g}"
                title = f"{sec.label} N={cfg.model.N} {cfg.cd} l={_l_label(cfg)} T={cfg.T:g} dt={cfg.dt:g}"
                time_curves.append((cond, title))
    if final_curves:
        lines.append('set xlabel "T"')
        plots = [f"'{csv_name}' skip 1 using ({c} ? $6 : 1/0):10 with linespoints title \"{t}\"" for t, c in final_curves.items()]
        lines.append("plot \\\n  " + ", \\\n  ".join(plots))
    if time_curves:
        if final_curves:
            lines.append("pause -1")
        lines.append("unset logscale x")
        lines.append('set xlabel "t"')
        plots = [f"'{csv_name}' skip 1 using ({c} ? $8 : 1/0):10 with lines title \"{t}\"" for c, t in time_curves]
        lines.append("plot \\\n  " + ", \\\n  ".join(plots))
    return "\n".join(lines) + "\n"


def write_artifacts(outcome: Outcome, out_dir: Path, formats=OUTPUT_FORMATS, config_echo: dict | None = None) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        write_csv(out_dir / "scan.csv", outcome.rows())
        written.append(out_dir / "scan.csv")
    if "json" in formats:
        write_fits(out_dir / "fits.json", outcome.fits)
        written.append(out_dir / "fits.json")
    if "gp" in formats:
        (out_dir / "plot.gp").write_text(plot_script(outcome))
        written.append(out_dir / "plot.gp")
    meta = {
        "recipe": outcome.recipe,
        "version": __version__,
        "config": config_echo if config_echo is not None else {"sections": [s.to_dict() for s in outcome.sections]},
        "workers": outcome.workers,
        "wall_time_s": outcome.wall_time,
        "n_points": len(outcome.results),
        "failures": outcome.failures,
        "dt_adjustments": outcome.dt_adjustments(),
        "checks": [asdict(c) for c in outcome.checks],
    }
    (out_dir / "meta.json").write_text(json.dumps(meta, indent=2, default=_json_default) + "\n")
    written.append(out_dir / "meta.json")
    return written


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


# ---------------------------------------------------------------- config files


def _require(doc: dict, name: str, kind, where: str = ""):
    if name not in doc:
        raise ConfigError(f"{where}{name}: required field missing")
    val = doc[name]
    if not isinstance(val, kind):
        raise ConfigError(f"{where}{name}: expected {getattr(kind, '__name__', kind)}, got {type(val).__name__}")
    return val


def _T_values(spec, where="sweep.T_values"):
    if isinstance(spec, list):
        return tuple(float(x) for x in spec)
    if isinstance(spec, dict) and set(spec) == {"log"}:
        lo_hi_n = spec["log"]
        if not (isinstance(lo_hi_n, list) and len(lo_hi_n) == 3):
            raise ConfigError(f"{where}.log: expected [lo, hi, n]")
        lo, hi, n = lo_hi_n
        try:
            return tuple(float(x) for x in log_grid(float(lo), float(hi), int(n)))
        except ValueError as exc:
            raise ConfigError(f"{where}.log: {exc}") from None
    raise ConfigError(f"{where}: expected a list of numbers or {{\"log\": [lo, hi, n]}}")


@dataclass(frozen=True)
class ExperimentConfig:
    recipe: str
    section: Section | None
    out_dir: str | None = None
    formats: tuple[str, ...] = OUTPUT_FORMATS
    workers: int | None = None
    raw: dict = field(default_factory=dict, compare=False, repr=False)


def parse_config(doc: dict) -> ExperimentConfig:
    """Validate a ``schema: 1`` experiment document."""
    if not isinstance(doc, dict):
        raise ConfigError("config: top level must be a JSON object")
    schema = _require(doc, "schema", int)
    if schema != SCHEMA_VERSION:
        raise ConfigError(f"schema: unsupported version {schema}, expected {SCHEMA_VERSION}")
    known = {"schema", "recipe", "model", "schedule", "sweep", "fit", "output", "workers", "initial", "record", "reference_tol"}
    extra = set(doc) - known
    if extra:
        raise ConfigError(f"config: unknown fields {sorted(extra)}")
    recipe = doc.get("recipe", "custom")
    if not isinstance(recipe, str):
        raise ConfigError("recipe: expected a string")
    output = doc.get("output", {})
    if not isinstance(output, dict):
        raise ConfigError("output: expected an object")
    formats = tuple(output.get("formats", OUTPUT_FORMATS))
    bad = [f for f in formats if f not in OUTPUT_FORMATS]
    if bad:
        raise ConfigError(f"output.formats: unknown formats {bad}; allowed {OUTPUT_FORMATS}")
    out_dir = output.get("dir")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigError("output.dir: expected a string")
    workers = doc.get("workers")
    if workers is not None and (not isinstance(workers, int) or workers < 1):
        raise ConfigError(f"workers: must be an integer >= 1, got {workers!r}")

    if recipe != "custom":
        if recipe not in RECIPES:
            raise ConfigError(f"recipe: unknown recipe {recipe!r}; known: {sorted(RECIPES)}")
        return ExperimentConfig(recipe, None, out_dir, formats, workers, doc)

    model_doc = _require(doc, "model", dict)
    try:
        model = ModelSpec.from_dict(model_doc)
    except (TypeError, ValueError) as exc:
        msg = str(exc)
        raise ConfigError(msg if msg.startswith("model") else f"model.{msg}") from None
    schedule = doc.get("schedule", "linear")
    sweep = _require(doc, "sweep", dict)
    extra = set(sweep) - {"T_values", "dt_values", "cd_settings", "l_values"}
    if extra:
        raise ConfigError(f"sweep: unknown fields {sorted(extra)}")
    T_values = _T_values(sweep["T_values"]) if "T_values" in sweep else None
    dt_values = sweep.get("dt_values", [0.01])
    if not isinstance(dt_values, list):
        raise ConfigError("dt: sweep.dt_values must be a list")
    cd_settings = sweep.get("cd_settings", ["exact"])
    l_values = sweep.get("l_values", [1])
    fits = ()
    if "fit" in doc:
        f = doc["fit"]
        if not isinstance(f, dict):
            raise ConfigError("fit: expected an object")
        extra = set(f) - {"model", "window", "n_starts", "seed", "qbar", "x", "quantity"}
        if extra:
            raise ConfigError(f"fit: unknown fields {sorted(extra)}")
        window = f.get("window")
        if window is not None:
            if not (isinstance(window, list) and len(window) == 2):
                raise ConfigError("fit.window: expected [a, b]")
            window = (float(window[0]), float(window[1]))
        fits = (FitSpec(
            model=_require(f, "model", str, "fit."), window=window, n_starts=int(f.get("n_starts", 24)),
            seed=int(f.get("seed", 0)), qbar=f.get("qbar"), x=f.get("x", "T"),
            quantity=f.get("quantity", "infidelity"),
        ),)
    section = Section(
        model=model, schedule=schedule, T_values=T_values,
        dt_values=tuple(dt_values), cd_settings=tuple(cd_settings), l_values=tuple(l_values),
        initial=doc.get("initial", "ground"), record=doc.get("record", "final"), fits=fits,
        reference_tol=doc.get("reference_tol", REF_TOL),
    )
    for cfg in section.points():
        if cfg.M < 1:
            raise ConfigError(f"dt: T={cfg.T} with dt={cfg.dt} gives no steps")
    return ExperimentConfig("custom", section, out_dir, formats, workers, doc)


def load_config(path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config: file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON ({exc})") from None
    return parse_config(doc)


# ---------------------------------------------------------------- scan files


def read_scan(path) -> list[dict]:
    """Rows of a scan CSV as dicts with numeric fields converted."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_HEADER:
            raise ValueError(f"header mismatch: expected {','.join(CSV_HEADER)}")
        rows = []
        for n, raw in enumerate(reader, start=2):
            if len(raw) != len(CSV_HEADER):
                raise ValueError(f"line {n}: expected {len(CSV_HEADER)} fields, got {len(raw)}")
            row = dict(zip(CSV_HEADER, raw))
            try:
                row["N"] = int(row["N"])
                row["l"] = int(row["l"])
                for k in CSV_HEADER[5:]:
                    row[k] = float(row[k])
            except ValueError as exc:
                raise ValueError(f"line {n}: {exc}") from None
            row["_line"] = n
            rows.append(row)
    return rows


def _group(row: dict) -> tuple:
    return (row["model"], row["N"], row["schedule"], row["cd"], row["l"], row["T"], row["dt"])


def validate_rows(rows: list[dict], tol: float = 1e-12) -> list[str]:
    """Problems found in scan rows; an empty list means the file is valid."""
    problems = []
    last_t: dict[tuple, float] = {}
    for row in rows:
        n = row["_line"]
        if row["cd"] not in CD_SETTINGS:
            problems.append(f"line {n}: cd {row['cd']!r} not in {CD_SETTINGS}")
        if row["schedule"] not in SCHEDULES:
            problems.append(f"line {n}: schedule {row['schedule']!r} not in {SCHEDULES}")
        for k in ("infidelity", "gs_infidelity", "p0sq", "p1sq", "p2sq", "p3sq", "lambda"):
            v = row[k]
            if not (-tol <= v <= 1 + tol):
                problems.append(f"line {n}: {k}={v!r} outside [0, 1]")
        if not (row["T"] > 0 and row["dt"] > 0):
            problems.append(f"line {n}: T and dt must be positive")
        if not (-tol <= row["t"] <= row["T"] * (1 + 1e-12) + tol):
            problems.append(f"line {n}: t={row['t']!r} outside [0, T]")
        if row["p0sq"] + row["p1sq"] + row["p2sq"] + row["p3sq"] > 1 + 1e-9:
            problems.append(f"line {n}: populations sum above 1")
        g = _group(row)
        if g in last_t and not row["t"] > last_t[g]:
            problems.append(f"line {n}: time column not increasing within its evolution")
        last_t[g] = row["t"]
    return problems


def final_rows(rows: list[dict]) -> list[dict]:
    """Last row of every evolution group."""
    last: dict[tuple, dict] = {}
    for row in rows:
        g = _group(row)
        if g not in last or row["t"] > last[g]["t"]:
            last[g] = row
    return [last[g] for g in sorted(last)]


def fit_scan(rows: list[dict], model: str, window=None, seed: int = 0, n_starts: int = 24,
             qbar: float | None = None, x: str = "T", quantity: str = "infidelity") -> list[dict]:
    """Fit the final infidelities of a scan, one fit per group."""
    spec = FitSpec(model=model, window=window, n_starts=n_starts, seed=seed, qbar=qbar, x=x, quantity=quantity)
    groups: dict[tuple, tuple[list, list]] = {}
    for row in final_rows(rows):
        if x == "T":
            key = (row["model"], row["N"], row["schedule"], row["cd"], row["l"], "dt", row["dt"])
            xs = row["T"]
        else:
            key = (row["model"], row["N"], row["schedule"], row["cd"], row["l"], "T", row["T"])
            xs = row["dt"]
        entry = groups.setdefault(key, ([], []))
        entry[0].append(xs)
        entry[1].append(row[quantity])
    out = []
    for key in sorted(groups):
        xs, ys = (np.asarray(v) for v in groups[key])
        order = np.argsort(xs, kind="stable")
        xs, ys = xs[order], ys[order]
        if spec.model == "power":
            res = fit_power_law(xs, ys, spec.window)
        else:
            res = fit_model(xs, ys, spec.model, spec.window, spec.n_starts, spec.seed, spec.qbar)
        d = res.to_dict()
        k = dict(zip(("model", "N", "schedule", "cd", "l"), key[:5]))
        k[key[5]] = key[6]
        out.append({
            "recipe": "custom", "key": k, "model": spec.model, "params": d["params"],
            "residual": d["residual"], "window": d["window"], "seed": seed, "quantity": quantity,
        })
    return out


# ---------------------------------------------------------------- recipes

SQ = ModelSpec(family="single_qubit")
DT3 = (0.1, 0.01, 0.001)

#: published fit pairs (qbar, Delta) per (N, J_Z, dt); the "1.33.96" entry is read as 1.3396
ISING_TABLE = {
    0.1: {
        (3, 0.1): (0.9976, 1.5880), (3, 0.5): (0.9865, 1.6916), (3, 1.0): (0.9750, 1.7579),
        (4, 0.1): (1.0068, 1.4828), (4, 0.5): (1.0000, 1.5707), (4, 1.0): (0.9963, 1.6284),
        (5, 0.1): (1.0072, 1.3891), (5, 0.5): (1.0048, 1.4678), (5, 1.0): (1.0011, 1.5272),
        (6, 0.1): (1.0060, 1.3151), (6, 0.5): (1.0018, 1.3535), (6, 1.0): (0.9860, 1.2139),
    },
    0.01: {
        (3, 0.1): (1.0004, 1.5635), (3, 0.5): (0.8578, 1.5803), (3, 1.0): (0.7191, 1.5259),
        (4, 0.1): (1.0020, 1.4374), (4, 0.5): (1.0013, 1.5115), (4, 1.0): (0.9977, 1.4695),
        (5, 0.1): (0.9987, 1.3396), (5, 0.5): (0.9907, 1.3160), (5, 1.0): (0.9707, 1.2094),
        (6, 0.1): (0.9993, 1.2767), (6, 0.5): (0.9875, 1.2428), (6, 1.0): (0.9725, 1.1965),
    },
}
RAMP_TARGETS = {0.1: 1.16, 0.01: 1.14, 0.001: 1.12}
BESSEL_TARGETS = {0.1: 2.579, 0.01: 2.596, 0.001: 2.611}
PSPIN_T_GRID = tuple(float(x) for x in log_grid(0.1, 10.0, 21))
#: at l=7 the least-squares extrapolation turns eigenvector roundoff into ~1e-6 noise in A(lambda),
#: which a tighter reference would chase; ~1e-4 relative accuracy on I >= 1e-4 is kept
PSPIN_LARGE_REF_TOL = 1e-5


@dataclass(frozen=True)
class Recipe:
    description: str
    sections: Callable[[], tuple[Section, ...]]
    check: Callable[[Outcome], list[Check]] | None = None


def _fig1() -> tuple[Section, ...]:
    return (
        # the exponent is read off the final ground-state infidelity, as plotted for the plain ramp
        Section(SQ, "linear", None, DT3, ("none",), fits=(FitSpec("power", (10.0, 100.0), quantity="gs_infidelity"),)),
        Section(SQ, "linear", None, DT3, ("exact",), fits=(FitSpec("ramp", (1.0, 100.0)),)),
    )


def _check_fig1(o: Outcome) -> list[Check]:
    return check_power_exponent(o, DT3, -2.0, 0.1) + check_ramp_fit(o)


def check_power_exponent(o: Outcome, dts, target: float, tol: float) -> list[Check]:
    out = []
    for dt in dts:
        f = o.find_fit(model="single_qubit", cd="none", dt=dt)
        if f is None:
            out.append(Check(f"power exponent dt={dt:g}", False, "fit missing"))
            continue
        beta = f["params"]["beta"]
        out.append(Check(f"power exponent dt={dt:g}", abs(beta - target) <= tol, f"beta={beta:.4f}, target {target}+-{tol}"))
    return out


def check_ramp_fit(o: Outcome) -> list[Check]:
    out = []
    for dt, target in RAMP_TARGETS.items():
        f = o.find_fit(model="single_qubit", cd="exact", schedule="linear", dt=dt)
        if f is None:
            out.append(Check(f"ramp fit dt={dt:g}", False, "fit missing"))
            continue
        q, d = f["params"]["qbar"], f["params"]["delta"]
        ok = abs(q - 1.0) <= 0.05 and abs(d - target) <= 0.06
        out.append(Check(f"ramp fit dt={dt:g}", ok, f"qbar={q:.4f} (1+-0.05), delta={d:.4f} ({target}+-0.06)"))
    return out


def ising_sections(Ns, J_Zs, dts, window=(1.0, 100.0)) -> tuple[Section, ...]:
    return tuple(
        Section(ModelSpec(family="ising", N=N, J_Z=J), "linear", None, tuple(dts), ("exact",),
                fits=(FitSpec("ramp", window),))
        for N in Ns for J in J_Zs
    )


def check_ising_table(o: Outcome, cells=None, need: int | None = None) -> list[Check]:
    cells = cells or [(dt, N, J) for dt in ISING_TABLE for (N, J) in ISING_TABLE[dt]]
    out, n_ok = [], 0
    for dt, N, J in cells:
        qt, dtab = ISING_TABLE[dt][(N, J)]
        f = o.find_fit(N=N, J_Z=J, dt=dt)
        if f is None:
            out.append(Check(f"table cell N={N} J_Z={J:g} dt={dt:g}", False, "fit missing"))
            continue
        q, d = f["params"]["qbar"], f["params"]["delta"]
        ok = abs(q - qt) <= 0.05 and abs(d - dtab) / dtab <= 0.10
        n_ok += ok
        out.append(Check(f"table cell N={N} J_Z={J:g} dt={dt:g}", ok,
                         f"fit ({q:.4f}, {d:.4f}) vs published ({qt}, {dtab})"))
    if need is not None:
        out.append(Check("table cells within tolerance", n_ok >= need, f"{n_ok}/{len(cells)} (need {need})"))
    return out


def _check_tables(o: Outcome) -> list[Check]:
    return check_ising_table(o, need=20)


def _check_fig2(o: Outcome) -> list[Check]:
    cells = [(dt, 6, J) for dt in (0.1, 0.01) for J in (0.1, 0.5, 1.0)]
    return check_ising_table(o, cells)


def pspin_sections(Ns, l_values, dt, T_values=PSPIN_T_GRID, record="final") -> tuple[Section, ...]:
    """Variational-CD p-spin scans; sizes above 10 use the looser reference tolerance."""
    return tuple(
        Section(ModelSpec(family="pspin", N=N, p=2), "linear", tuple(T_values), (dt,), ("variational",),
                tuple(l_values), record=record, reference_tol=REF_TOL if N <= 10 else PSPIN_LARGE_REF_TOL)
        for N in Ns
    )


def check_l_monotone(o: Outcome, lo: float = 0.3, hi: float = 3.0, rtol: float = 1e-9) -> list[Check]:
    """Final ground-state infidelity non-increasing in ``l`` at every ``T`` in ``[lo, hi]``.

    The ground-state infidelity carries the diabatic error that a better gauge
    potential removes; the digital infidelity against the equally driven
    continuous evolution instead grows with the norm of ``H_CD``.
    """
    out = []
    table: dict[tuple, dict[int, float]] = {}
    for s_idx, sec in enumerate(o.sections):
        for cfg, val in o.final_values(s_idx, "gs_infidelity"):
            if cfg.cd == "variational" and lo <= cfg.T <= hi:
                table.setdefault((cfg.model.N, cfg.T), {})[cfg.l] = val
    for (N, T), by_l in sorted(table.items()):
        ls = sorted(by_l)
        vals = [by_l[l] for l in ls]
        ok = all(b <= a * (1 + rtol) + 1e-15 for a, b in zip(vals, vals[1:]))
        out.append(Check(f"l-monotone N={N} T={T:g}", ok, " >= ".join(f"{v:.3e}" for v in vals)))
    return out


def check_running_max(o: Outcome, l: int = 7, dt: float = 0.01) -> list[Check]:
    """Time-resolved ground-state infidelity at order ``l`` ends below its own maximum."""
    out = []
    for _, r in o.results:
        if r.error is not None or r.cfg.l != l or not math.isclose(r.cfg.dt, dt):
            continue
        I = r.trajectory.gs_infidelity
        peak = float(np.max(I))
        out.append(Check(f"bounded dynamics N={r.cfg.model.N} l={l} dt={dt:g}", float(I[-1]) < peak,
                         f"final {I[-1]:.3e} vs running max {peak:.3e}"))
    return out


def fig5_sections() -> tuple[Section, ...]:
    dts = (1e-3, 3e-3, 1e-2, 3e-2, 1e-1)
    fit = (FitSpec("power", x="dt"),)
    return (
        Section(SQ, "linear", (1.0,), dts, ("exact",), fits=fit, snap=False),
        Section(ModelSpec(family="ising", N=6, J_Z=0.1), "linear", (1.0,), dts, ("exact",), fits=fit, snap=False),
        Section(ModelSpec(family="pspin", N=10, p=2), "linear", (1.0,), dts, ("variational",), (7,), fits=fit, snap=False),
    )


def check_dt_exponent(o: Outcome, target: float = 2.0, tol: float = 0.05) -> list[Check]:
    out = []
    for f in o.fits:
        if f["model"] != "power" or "T" not in f["key"]:
            continue
        beta = f["params"]["beta"]
        out.append(Check(f"dt exponent {f['key']['model']} N={f['key']['N']}", abs(beta - target) <= tol,
                         f"exponent {beta:.4f}, target {target}+-{tol}"))
    return out


def _bessel() -> tuple[Section, ...]:
    return (Section(SQ, "sin2", None, DT3, ("exact",), fits=(FitSpec("bessel", (1.0, 100.0), qbar=2.0),)),)


def check_bessel_fit(o: Outcome, rtol: float = 0.02) -> list[Check]:
    out = []
    for dt, target in BESSEL_TARGETS.items():
        f = o.find_fit(model="single_qubit", schedule="sin2", dt=dt)
        if f is None:
            out.append(Check(f"bessel fit dt={dt:g}", False, "fit missing"))
            continue
        d = f["params"]["delta"]
        out.append(Check(f"bessel fit dt={dt:g}", abs(d - target) <= rtol * target,
                         f"delta={d:.4f}, target {target}+-{rtol:.0%}"))
    return out


def _ramp_offset() -> tuple[Section, ...]:
    return tuple(
        Section(SQ, "linear", None, (0.01,), ("exact",), initial=init)
        for init in ("ground", "kick_compensated")
    )


def check_offset_floor(o: Outcome, window=(1.0, 100.0)) -> list[Check]:
    """Uncorrected start: ``I(T) >= a(T)^2`` throughout; corrected start dips well below."""
    ratios = {}
    for s_idx, sec in enumerate(o.sections):
        rs = [val / boundary_offset_single_qubit(cfg.T, cfg.step) ** 2
              for cfg, val in o.final_values(s_idx) if window[0] <= cfg.T <= window[1]]
        ratios[sec.initial] = min(rs) if rs else float("nan")
    plain, kick = ratios.get("ground", math.nan), ratios.get("kick_compensated", math.nan)
    return [
        Check("uncorrected start keeps an a^2 floor", plain >= 1.0, f"min I/a^2 = {plain:.3g} (need >= 1)"),
        Check("corrected start drops below the floor", kick <= 0.2, f"min I/a^2 = {kick:.3g} (need <= 0.2)"),
    ]


RECIPES: dict[str, Recipe] = {
    "fig1-single-qubit": Recipe(
        "single qubit, linear ramp, no CD and exact CD, dt in {0.1, 0.01, 0.001}; "
        "power-law fits over T in [10, 100] and ramp-model fits over T in [1, 100]",
        _fig1, _check_fig1,
    ),
    "fig2-ising-fits": Recipe(
        "Ising N=6, J_Z in {0.1, 0.5, 1}, exact CD, dt in {0.1, 0.01}; ramp fits over T in [1, 100]",
        lambda: ising_sections((6,), (0.1, 0.5, 1.0), (0.1, 0.01)), _check_fig2,
    ),
    "tables-1-2": Recipe(
        "Ising N in 3..6, J_Z in {0.1, 0.5, 1}, exact CD, dt in {0.1, 0.01}; ramp fits over T in [1, 100]",
        lambda: ising_sections((3, 4, 5, 6), (0.1, 0.5, 1.0), (0.1, 0.01)), _check_tables,
    ),
    "fig3-pspin": Recipe(
        "p-spin p=2, N in {10, 30}, variational CD l in {1, 3, 7}, dt=0.01, T in [0.1, 10]",
        lambda: pspin_sections((10, 30), (1, 3, 7), 0.01), check_l_monotone,
    ),
    "fig4-pspin-dynamics": Recipe(
        "p-spin p=2, N=10, T=1, variational CD l in {1, 3, 7}, dt in {0.1, 0.01, 0.001}, full time series",
        lambda: tuple(
            Section(ModelSpec(family="pspin", N=10, p=2), "linear", (1.0,), (dt,), ("variational",), (1, 3, 7), record="all")
            for dt in DT3
        ),
        check_running_max,
    ),
    "fig5-dt-scaling": Recipe(
        "T=1, dt in {1e-3 .. 1e-1}: single qubit and Ising N=6 with exact CD, p-spin N=10 with l=7; "
        "power-law fit of I against dt",
        fig5_sections, check_dt_exponent,
    ),
    "supp-bessel-fit": Recipe(
        "single qubit, sin^2 schedule, exact CD, dt in {0.1, 0.01, 0.001}; Bessel-model fits with qbar=2",
        _bessel, check_bessel_fit,
    ),
    "supp-ising-sweeps": Recipe(
        "Ising N in 3..6, J_Z in {0.1, 0.5, 1}, no CD and exact CD, dt=0.1",
        lambda: tuple(
            Section(ModelSpec(family="ising", N=N, J_Z=J), "linear", None, (0.1,), ("none", "exact"))
            for N in (3, 4, 5, 6) for J in (0.1, 0.5, 1.0)
        ),
    ),
    "supp-ramp-offset": Recipe(
        "single qubit, linear ramp, exact CD, dt=0.01, plain and kick-compensated initial state",
        _ramp_offset, check_offset_floor,
    ),
}


def run_recipe(name: str, workers: int | None = None, check: bool = False) -> Outcome:
    if name not in RECIPES:
        raise ConfigError(f"recipe: unknown recipe {name!r}; known: {sorted(RECIPES)}")
    rec = RECIPES[name]
    outcome = execute(name, rec.sections(), workers)
    if check and rec.check is not None:
        outcome.checks = rec.check(outcome)
    return outcome

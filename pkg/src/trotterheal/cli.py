"""Command-line entry point ``trotterheal``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure,
3 acceptance-tolerance failure (``recipe --check``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .experiment import (
    RECIPES,
    ConfigError,
    execute,
    fit_scan,
    load_config,
    read_scan,
    run_recipe,
    validate_rows,
    write_artifacts,
)

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_CHECK = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _window(text: str) -> tuple[float, float]:
    try:
        a, b = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a,b got {text!r}") from None
    if not 0 < a < b:
        raise argparse.ArgumentTypeError(f"need 0 < a < b, got {text!r}")
    return a, b


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    recipes = "\n".join(f"  {k:22s} {v.description}" for k, v in RECIPES.items())
    p = _Parser(
        prog="trotterheal",
        description="Digitized counterdiabatic annealing: scans, fits and named recipes.",
        epilog=f"recipes:\n{recipes}",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("recipe", help="run a named recipe")
    r.add_argument("name", help="recipe name (see the list below)")
    r.add_argument("--out", type=Path, default=None, help="output directory (default: ./out/<name>)")
    r.add_argument("--workers", type=_positive_int, default=None, help="worker processes (env TROTTERHEAL_WORKERS)")
    r.add_argument("--check", action="store_true", help="check results against the published values")

    c = sub.add_parser("run", help="run an experiment from a JSON config")
    c.add_argument("config", type=Path)
    c.add_argument("--out", type=Path, default=None, help="output directory (overrides output.dir)")
    c.add_argument("--workers", type=_positive_int, default=None)

    v = sub.add_parser("validate", help="re-check the row invariants of a scan CSV")
    v.add_argument("scan", type=Path)

    f = sub.add_parser("fit", help="fit the final infidelities of a scan CSV")
    f.add_argument("scan", type=Path)
    f.add_argument("--model", choices=("ramp", "bessel", "power"), required=True)
    f.add_argument("--window", type=_window, default=None, help="fit window a,b")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--n-starts", type=_positive_int, default=24)
    f.add_argument("--qbar", type=float, default=None, help="fix the mode index")
    f.add_argument("--x", choices=("T", "dt"), default="T", help="abscissa for power-law fits")
    f.add_argument("--quantity", choices=("infidelity", "gs_infidelity"), default="infidelity",
                   help="column to fit (default: infidelity)")
    f.add_argument("--out", type=Path, default=None, help="write fits JSON here instead of stdout")
    return p


def _workers(value: int | None) -> int | None:
    if value is not None:
        return value
    env = os.environ.get("TROTTERHEAL_WORKERS")
    if not env:
        return None
    try:
        return _positive_int(env)
    except argparse.ArgumentTypeError as exc:
        raise ConfigError(f"TROTTERHEAL_WORKERS: {exc}") from None


def _report_failures(outcome) -> None:
    for fail in outcome.failures:
        print(f"warning: {json.dumps(fail, sort_keys=True)}", file=sys.stderr)


def _cmd_recipe(args) -> int:
    if args.name not in RECIPES:
        build_parser().print_usage(sys.stderr)
        print(f"trotterheal: error: unknown recipe {args.name!r}; known: {', '.join(RECIPES)}", file=sys.stderr)
        return EXIT_USAGE
    out = args.out or Path("out") / args.name
    outcome = run_recipe(args.name, _workers(args.workers), check=args.check)
    write_artifacts(outcome, out)
    _report_failures(outcome)
    print(f"wrote {out} ({len(outcome.results)} points, {len(outcome.fits)} fits, {outcome.wall_time:.1f} s)")
    if outcome.results and all(r.error is not None for _, r in outcome.results):
        return EXIT_RUNTIME
    if args.check:
        for c in outcome.checks:
            print(c.line())
        if not outcome.checks:
            print(f"no acceptance checks defined for {args.name}")
        if any(not c.passed for c in outcome.checks):
            return EXIT_CHECK
    return EXIT_OK


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    workers = args.workers if args.workers is not None else (cfg.workers or _workers(None))
    if cfg.section is None:
        outcome = run_recipe(cfg.recipe, workers)
    else:
        outcome = execute("custom", [cfg.section], workers)
    out = args.out or Path(cfg.out_dir or "out/custom")
    write_artifacts(outcome, out, cfg.formats, config_echo=cfg.raw)
    _report_failures(outcome)
    print(f"wrote {out} ({len(outcome.results)} points, {len(outcome.fits)} fits)")
    if outcome.results and all(r.error is not None for _, r in outcome.results):
        return EXIT_RUNTIME
    return EXIT_OK


def _read(path: Path):
    if not path.is_file():
        raise ConfigError(f"scan: file not found: {path}")
    return read_scan(path)


def _cmd_validate(args) -> int:
    try:
        rows = _read(args.scan)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        print(f"invalid: {exc}")
        return EXIT_RUNTIME
    problems = validate_rows(rows)
    for p in problems:
        print(p)
    print(f"{args.scan}: {len(rows)} rows, {len(problems)} problems")
    return EXIT_OK if not problems else EXIT_RUNTIME


def _cmd_fit(args) -> int:
    rows = _read(args.scan)
    if args.model != "power" and args.x != "T":
        raise ConfigError("--x: only power-law fits may use dt as abscissa")
    fits = fit_scan(rows, args.model, args.window, args.seed, args.n_starts, args.qbar, args.x, args.quantity)
    text = json.dumps(fits, indent=2, sort_keys=True) + "\n"
    if args.out:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {"recipe": _cmd_recipe, "run": _cmd_run, "validate": _cmd_validate, "fit": _cmd_fit}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"trotterheal: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # anything else is a runtime failure
        print(f"trotterheal: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

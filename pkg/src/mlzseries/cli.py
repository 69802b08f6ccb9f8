"""Command-line front end.

Exit codes: 0 success, 1 computation failure, 2 input error. ``validate``
exits with the number of failed checks instead. Indices in all output are
1-based and refer to the model file's level order.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from contextlib import contextmanager

import numpy as np

from . import __version__
from .checks import FAULTS, inject_fault, run_checks
from .errors import (
    ConvergenceFailure,
    DomainError,
    MlzError,
    NonUnitaryDrift,
    ParseError,
    PrecisionFloor,
    ResonantInput,
    StepSizeUnderflow,
)
from .model import MlzModel, load_model, model_hash
from .propagator import (
    SolverSettings,
    assemble_scan,
    numeric_on_grid,
    pinned_settings,
    ratio_powers,
)
from .series import evaluate_at, series_coefficients
from .specfun import QTriple, q_closed_form, q_quadrature
from .wengine import pn_finite, w_n_finite

EXIT_OK, EXIT_COMPUTE, EXIT_INPUT = 0, 1, 2
SCAN_DEFAULT_GRID = "0.02:0.5:12"


class InputError(Exception):
    pass


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def parse_g_grid(text: str) -> np.ndarray:
    """``a:b:n`` is n geometric points from a to b; otherwise a comma list."""
    try:
        if ":" in text:
            a, b, n = text.split(":")
            a, b, n = float(a), float(b), int(n)
            if n < 1 or a <= 0 or b <= 0:
                raise InputError(f"bad --g-grid {text!r}: need a, b > 0 and n >= 1")
            grid = np.geomspace(a, b, n) if n > 1 else np.array([a])
        else:
            grid = np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError as exc:
        raise InputError(f"bad --g-grid {text!r}: {exc}") from None
    if grid.size == 0 or np.any(np.diff(grid) <= 0) or np.any(grid < 0):
        raise InputError(f"--g-grid must be non-negative and strictly increasing, got {text!r}")
    return grid


def positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return v


class Writer:
    """CSV or aligned-table output with a ``#`` metadata header."""

    def __init__(self, stream, fmt_kind: str, header: list[str]):
        self.stream = stream
        self.kind = fmt_kind
        self.meta = header
        self.rows: list[list[str]] = []
        self.columns: list[str] | None = None
        for line in header:
            stream.write(f"# {line}\n")

    def start(self, columns: list[str]) -> None:
        self.columns = columns
        if self.kind == "csv":
            csv.writer(self.stream, lineterminator="\n").writerow(columns)

    def row(self, values: list) -> None:
        cells = [v if isinstance(v, str) else fmt(v) for v in values]
        if self.kind == "csv":
            csv.writer(self.stream, lineterminator="\n").writerow(cells)
            self.stream.flush()
        else:
            self.rows.append(cells)

    def note(self, line: str) -> None:
        self.finish_table()
        self.stream.write(f"# {line}\n")

    def finish_table(self) -> None:
        if self.kind != "table" or self.columns is None or not (self.rows or self.columns):
            return
        table = [self.columns] + self.rows
        widths = [max(len(r[i]) for r in table) for i in range(len(self.columns))]
        for r in table:
            self.stream.write("  ".join(c.rjust(w) for c, w in zip(r, widths)).rstrip() + "\n")
        self.rows = []
        self.columns = None
        self.stream.flush()


@contextmanager
def output(path: str | None):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def header_lines(args, model: MlzModel | None, settings: SolverSettings | None = None) -> list[str]:
    lines = [f"mlzseries {__version__}", f"command: {args.command}"]
    if model is not None:
        lines.append(f"model: label={model.label!r} n={model.n} sha256={model_hash(model)}")
    lines.append(f"tol: {float(args.tol)!r}")
    if settings is not None:
        lines.append(
            f"solver: {settings.method} rtol={float(settings.rtol)!r} atol={float(settings.atol)!r} "
            f"t0={float(settings.t0)!r} ladder=(t0, 2*t0) window_periods={settings.window_periods} "
            f"batch={settings.batch} max_error={float(settings.max_error)!r}"
        )
    return lines


def _load(args) -> MlzModel:
    if not args.model:
        raise InputError("--model is required")
    return load_model(args.model)


def _g_values(args, default: str | None = None) -> np.ndarray:
    if getattr(args, "g_grid", None):
        return parse_g_grid(args.g_grid)
    if getattr(args, "g", None) is not None:
        return np.array([args.g])
    if default is not None:
        return parse_g_grid(default)
    raise InputError("give --g or --g-grid")


def _pairs(n: int):
    for j in range(n):
        for k in range(n):
            yield j, k


# ---------------------------------------------------------------------------
# commands


def cmd_validate(args) -> int:
    model = _load(args)
    coeffs = series_coefficients(model)
    if args.inject_fault:
        coeffs = inject_fault(coeffs, args.inject_fault)
    results = run_checks(model, coeffs)
    with output(args.out) as fh:
        for line in header_lines(args, model):
            fh.write(f"# {line}\n")
        for r in results:
            detail = f"  ({r.detail})" if r.detail else ""
            fh.write(f"{'PASS' if r.passed else 'FAIL'}  {r.name}{detail}\n")
        failed = sum(not r.passed for r in results)
        fh.write(f"# {len(results) - failed}/{len(results)} checks passed\n")
    return min(failed, 125)


def cmd_series(args) -> int:
    model = _load(args)
    c = series_coefficients(model)
    g = args.g
    with output(args.out) as fh:
        w = Writer(fh, args.format, header_lines(args, model) + ([f"g: {fmt(g)}"] if g is not None else []))
        cols = ["j", "k", "p2", "p3", "p4"] + (["P_truncated"] if g is not None else [])
        w.start(cols)
        P = evaluate_at(c, g) if g is not None else None
        for j, k in _pairs(model.n):
            row = [str(j + 1), str(k + 1), c.p2[j, k], c.p3[j, k], c.p4[j, k]]
            if P is not None:
                row.append(P[j, k])
            w.row(row)
        w.finish_table()
        if P is not None and (np.any(P < 0) or np.any(P > 1)):
            w.note("warning: truncated series leaves [0, 1] at this g")
    return EXIT_OK


def _settings(args) -> SolverSettings:
    return SolverSettings(rtol=args.tol, max_error=args.max_error)


def cmd_numeric(args) -> int:
    model = _load(args)
    gs = _g_values(args, default=repr(model.g))
    s = pinned_settings(model, gs, _settings(args))
    with output(args.out) as fh:
        w = Writer(fh, args.format, header_lines(args, model, s))
        w.start(["g", "j", "k", "P", "est_error"])
        try:
            for lo in range(0, len(gs), s.batch):
                chunk = gs[lo : lo + s.batch]
                numeric, est = numeric_on_grid(model, chunk, s)
                for gi, g in enumerate(chunk):
                    for j, k in _pairs(model.n):
                        w.row([g, str(j + 1), str(k + 1), numeric[gi, j, k], est[gi]])
        finally:
            w.finish_table()
    return EXIT_OK


def _compare_like(args, default_grid: str | None, full: bool) -> int:
    model = _load(args)
    gs = _g_values(args, default_grid)
    s = pinned_settings(model, gs, _settings(args))
    c = series_coefficients(model)
    powers = ratio_powers(model.n)
    numeric = np.zeros((len(gs), model.n, model.n))
    est = np.zeros(len(gs))
    with output(args.out) as fh:
        w = Writer(fh, args.format, header_lines(args, model, s) + [f"band: {args.band!r}"])
        if full:
            w.start(["g", "j", "k", "P_series", "P_numeric", "dP", "ratio", "power", "est_error", "floor"])
        else:
            w.start(["g", "j", "k", "dP", "ratio", "power", "floor"])
        try:
            for lo in range(0, len(gs), s.batch):
                chunk = gs[lo : lo + s.batch]
                numeric[lo : lo + len(chunk)], est[lo : lo + len(chunk)] = numeric_on_grid(model, chunk, s)
                part = assemble_scan(chunk, numeric[lo : lo + len(chunk)], est[lo : lo + len(chunk)], c, args.band)
                for gi, g in enumerate(chunk):
                    for j, k in _pairs(model.n):
                        dp, ratio, fl = part.residuals[gi, j, k], part.ratios[gi, j, k], part.floor[gi, j, k]
                        tail = [str(int(powers[j, k])), *([part.est_error[gi]] if full else []), "1" if fl else "0"]
                        if full:
                            w.row([g, str(j + 1), str(k + 1), part.series[gi, j, k], part.numeric[gi, j, k], dp, ratio, *tail])
                        else:
                            w.row([g, str(j + 1), str(k + 1), dp, ratio, *tail])
        finally:
            w.finish_table()
        scan = assemble_scan(gs, numeric, est, c, args.band, strict=args.strict)
        for j, k in _pairs(model.n):
            verdict = "pass" if scan.passed[j, k] else "FAIL"
            why = " (all residuals below precision floor)" if scan.floor_only[j, k] else ""
            w.note(f"ratio-stability {j + 1},{k + 1} dP/g^{powers[j, k]}: {verdict}{why}")
        w.note(f"summary: {'pass' if scan.all_passed else 'FAIL'} "
               f"({int(scan.passed.sum())}/{scan.passed.size} entries)")
    if args.figure:
        from .plotting import residual_panels

        residual_panels(scan, args.figure, coeffs=c, title=model.label)
    return EXIT_OK if scan.all_passed or not args.require_pass else EXIT_COMPUTE


def cmd_compare(args) -> int:
    return _compare_like(args, None, full=True)


def cmd_scan(args) -> int:
    return _compare_like(args, SCAN_DEFAULT_GRID, full=False)


def cmd_qint(args) -> int:
    try:
        t = QTriple(args.alpha, args.beta, args.gamma)
    except DomainError as exc:
        raise InputError(str(exc)) from None
    if t.resonant:
        raise ResonantInput(
            "alpha + beta = 0 or alpha + gamma = 0: this is the resonance condition, where Q diverges. "
            "The physical fourth-order term stays finite; see resonant_r."
        )
    closed = q_closed_form(t)
    quad = q_quadrature(t, args.tol)
    with output(args.out) as fh:
        w = Writer(fh, args.format, header_lines(args, None) + [f"alpha={fmt(t.alpha)} beta={fmt(t.beta)} gamma={fmt(t.gamma)}"])
        w.start(["quantity", "real", "imag", "abs"])
        for name, v in (("Q_closed", closed), ("Q_quadrature", quad), ("difference", closed - quad)):
            w.row([name, v.real, v.imag, abs(v)])
        w.finish_table()
    return EXIT_OK


def cmd_wcheck(args) -> int:
    model = _load(args)
    times = [float(x) for x in args.t.split(",")]
    tol = args.tol
    ok = True
    with output(args.out) as fh:
        w = Writer(fh, args.format, header_lines(args, model) + [f"method: {args.method}"])
        w.start(["t", "quantity", "value", "limit", "status"])
        for t in times:
            for n in (1, 2, 3):
                d = w_n_finite(model, n, t, tol, args.method).parity_defect()
                good = d <= 10 * tol
                ok &= good
                w.row([t, f"W{n} parity defect", d, 10 * tol, "pass" if good else "FAIL"])
            for n in (1, 3):
                p = pn_finite(model, n, t, tol, args.method)
                d = float(np.max(np.abs(np.diag(p))))
                good = d <= 10 * tol
                ok &= good
                w.row([t, f"P{n} diagonal", d, 10 * tol, "pass" if good else "FAIL"])
            for n in (2, 3, 4):
                p = pn_finite(model, n, t, tol, args.method)
                d = float(np.max(np.abs(p - (-1) ** n * p.T)))
                good = d <= 10 * tol
                ok &= good
                w.row([t, f"P{n} matrix parity", d, 10 * tol, "pass" if good else "FAIL"])
        w.finish_table()
    return EXIT_OK if ok else EXIT_COMPUTE


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="mlzseries",
        description="Perturbative and numerical transition probabilities of one-crossing "
        "multistate Landau-Zener models.",
    )
    p.add_argument("--version", action="version", version=f"mlzseries {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, model=True, g=False, grid=False):
        if model:
            sp.add_argument("--model", metavar="PATH", help="model file")
        if g:
            sp.add_argument("--g", type=float, help="expansion parameter")
        if grid:
            sp.add_argument("--g-grid", metavar="a:b:n", help="geometric grid, or comma list of g values")
        sp.add_argument("--tol", type=positive, default=1e-10, help="tolerance (default 1e-10)")
        sp.add_argument("--out", metavar="PATH", help="output file (default stdout)")
        sp.add_argument("--format", choices=("csv", "table"), default="csv")

    sp = sub.add_parser("validate", help="run the invariant suite on a model")
    common(sp)
    sp.add_argument("--inject-fault", choices=FAULTS, help=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("series", help="series coefficients p2, p3, p4")
    common(sp, g=True)
    sp.set_defaults(func=cmd_series)

    sp = sub.add_parser("numeric", help="numerically propagated probabilities")
    common(sp, g=True, grid=True)
    sp.add_argument("--max-error", type=positive, default=1e-6, help="largest acceptable error estimate")
    sp.set_defaults(func=cmd_numeric)

    for name, func, helptext in (
        ("compare", cmd_compare, "series vs numeric with residual ratios"),
        ("scan", cmd_scan, f"residual ratio scan (default grid {SCAN_DEFAULT_GRID})"),
    ):
        sp = sub.add_parser(name, help=helptext)
        common(sp, g=True, grid=True)
        sp.add_argument("--max-error", type=positive, default=1e-6, help="largest acceptable error estimate")
        sp.add_argument("--band", type=positive, default=0.25, help="ratio agreement band (default 0.25)")
        sp.add_argument("--strict", action="store_true", help="fail on residuals below the precision floor")
        sp.add_argument("--require-pass", action="store_true", help="exit 1 when any entry fails")
        sp.add_argument("--figure", metavar="PATH", help="also save a 4-panel residual figure")
        sp.set_defaults(func=func)

    sp = sub.add_parser("qint", help="evaluate the triple integral Q both ways")
    common(sp, model=False)
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--beta", type=float, required=True)
    sp.add_argument("--gamma", type=float, required=True)
    sp.set_defaults(func=cmd_qint, tol=1e-8)

    sp = sub.add_parser("wcheck", help="parity checks of W1..W3 at finite t")
    common(sp)
    sp.add_argument("--t", default="1,3,10", help="comma list of times")
    sp.add_argument("--method", choices=("symmetrized", "recursion"), default="symmetrized")
    sp.set_defaults(func=cmd_wcheck)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_COMPUTE
    except (InputError, ParseError, ResonantInput, OSError) as exc:
        print(f"mlzseries: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ConvergenceFailure, PrecisionFloor, StepSizeUnderflow, NonUnitaryDrift) as exc:
        print(f"mlzseries: computation failed: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except MlzError as exc:
        # remaining library errors are invalid inputs (model or domain)
        print(f"mlzseries: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

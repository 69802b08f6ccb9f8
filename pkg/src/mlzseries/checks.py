"""Structural invariant suite behind ``mlzseries validate``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import MlzModel, lambda_matrix, new_model, parse_model_file, reorder_descending, serialize_model
from .series import SeriesCoefficients, series_coefficients

__all__ = ["CheckResult", "run_checks", "inject_fault", "FAULTS"]

REL_TOL = 1e-12


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def _rel(x: np.ndarray, scale: float) -> float:
    return float(np.max(np.abs(x))) / max(scale, 1e-300)


def inject_fault(coeffs: SeriesCoefficients, kind: str) -> SeriesCoefficients:
    """Corrupt coefficients on purpose, to show the suite catches it."""
    p2, p3, p4 = coeffs.p2.copy(), coeffs.p3.copy(), coeffs.p4.copy()
    scale = max(1.0, float(np.max(np.abs(p4))))
    if kind == "colsum":
        # keeps row sums, breaks column sums
        p4[0, 1] += 1e-3 * scale
        p4[0, 0] -= 1e-3 * scale
    elif kind == "p3-parity":
        p3[0, 1] += 1e-3 * max(1.0, float(np.max(np.abs(p3))))
    else:
        raise ValueError(f"unknown fault {kind!r}; choose from {FAULTS}")
    return SeriesCoefficients(coeffs.n, p2, p3, p4)


FAULTS = ("colsum", "p3-parity")


def run_checks(model: MlzModel, coeffs: SeriesCoefficients | None = None) -> list[CheckResult]:
    """Model, lambda and coefficient invariants plus the BE Taylor cross-check."""
    out: list[CheckResult] = []

    def add(name: str, ok: bool, detail: str = "") -> None:
        out.append(CheckResult(name, bool(ok), detail))

    b, A = model.slopes, model.couplings
    add("slopes distinct", len(set(b.tolist())) == model.n)
    add("couplings symmetric", np.array_equal(A, A.T))
    add("couplings zero diagonal", not np.any(np.diag(A)))
    srt, order = reorder_descending(model)
    add("reorder strictly descending", bool(np.all(np.diff(srt.slopes) < 0)))
    again, order2 = reorder_descending(srt)
    add("reorder idempotent", again == srt and np.array_equal(order2, np.arange(model.n)))

    lam = lambda_matrix(model).values
    add("lambda symmetric, zero diagonal", np.array_equal(lam, lam.T) and not np.any(np.diag(lam)))
    add("lambda sign matches coupling sign", np.array_equal(np.sign(lam), np.sign(A)))
    add("model file round trip", parse_model_file(serialize_model(model)) == model)

    c = coeffs if coeffs is not None else series_coefficients(model)
    scale = max(float(np.max(np.abs(m))) for m in (c.p2, c.p3, c.p4)) or 1.0
    add("p2 symmetric", np.array_equal(c.p2, c.p2.T))
    add("p4 symmetric", np.array_equal(c.p4, c.p4.T))
    add("p3 antisymmetric", np.array_equal(c.p3, -c.p3.T))
    off = ~np.eye(model.n, dtype=bool)
    add("p2 sign pattern", bool(np.all(c.p2[off] >= 0) and np.all(np.diag(c.p2) <= 0)))
    for name, m in (("p2", c.p2), ("p3", c.p3), ("p4", c.p4)):
        r, k = _rel(m.sum(axis=1), scale), _rel(m.sum(axis=0), scale)
        add(f"{name} row sums vanish", r <= REL_TOL, f"max relative {r:.3g}")
        add(f"{name} column sums vanish", k <= REL_TOL, f"max relative {k:.3g}")

    # Extremal levels obey P_jj = exp(-2 g^2 s): Taylor -2 s, 2 s^2
    L = lambda_matrix(srt).values
    for label, lvl, s in (("top", order[0], np.sum(L[0] ** 2)), ("bottom", order[-1], np.sum(L[:, -1] ** 2))):
        e2 = abs(c.p2[lvl, lvl] + 2 * s) / max(2 * s, 1e-300)
        e4 = abs(c.p4[lvl, lvl] - 2 * s * s) / max(2 * s * s, 1e-300)
        ok = (e2 <= REL_TOL or 2 * s == 0 and c.p2[lvl, lvl] == 0) and (e4 <= REL_TOL or s == 0 and c.p4[lvl, lvl] == 0)
        add(f"BE Taylor, {label} level {lvl + 1}", ok, f"relative errors {e2:.3g}, {e4:.3g}")

    # relabel covariance on the reversed level order
    perm = np.arange(model.n)[::-1]
    flipped = new_model(b[perm], A[np.ix_(perm, perm)], model.g, model.label)
    cf = series_coefficients(flipped)
    ix = np.ix_(perm, perm)
    cov = max(_rel(cf.p2 - c.p2[ix], scale), _rel(cf.p3 - c.p3[ix], scale), _rel(cf.p4 - c.p4[ix], scale))
    add("relabel covariance", cov <= REL_TOL, f"max relative {cov:.3g}")
    return out

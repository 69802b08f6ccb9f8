"""Acceptance criteria 1-8.

Each criterion prints one PASS/FAIL line. Run under pytest (lines also
appear in the terminal summary) or directly: ``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import csv
import io
import sys
import tempfile
import time
from contextlib import redirect_stdout
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest
import sympy as sp

sys.path.insert(0, str(Path(__file__).parent))

from conftest import (  # noqa: E402
    ACCEPTANCE,
    fig2_model,
    five_state_model,
    four_state_model,
    lz_model,
    random_lambda,
    random_model,
)
from mlzseries.cli import main as cli_main  # noqa: E402
from mlzseries.model import lambda_matrix, reorder_descending, serialize_model  # noqa: E402
from mlzseries.propagator import probabilities, probabilities_many, residual_scan  # noqa: E402
from mlzseries.series import be_formula, evaluate_at, lz_exact, series_coefficients, series_matrix  # noqa: E402
from mlzseries.specfun import QTriple, q_closed_form, q_quadrature, resonant_r  # noqa: E402
from mlzseries.wengine import pn_finite, resonant_limit_check, w_n_finite  # noqa: E402

pytestmark = pytest.mark.acceptance

SEED = 20240611


def report(key: str, desc: str, ok: bool, detail: str) -> None:
    ACCEPTANCE[key] = (desc, ok, detail)
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {desc} -- {detail}")


# --------------------------------------------------------------------------- 1


def criterion_1():
    t0 = time.perf_counter()
    m = lz_model(1.0)
    lam = lambda_matrix(m).values[0, 1]
    c = series_coefficients(m)
    exact = c.p2[0, 1] == 2 * lam**2 and c.p3[0, 1] == 0 and c.p4[0, 1] == -2 * lam**4
    worst = 0.0
    for glam in (0.1, 0.5, 1.0):
        g = glam / lam
        worst = max(worst, float(np.abs(probabilities(m, g).values - lz_exact(lam, g)).max()))
    dt = time.perf_counter() - t0
    ok = exact and worst <= 1e-6 and dt < 5
    return ok, f"max |P - LZ| = {worst:.2e} (<= 1e-6), coefficients exact: {exact}, {dt:.1f} s (< 5 s)"


# --------------------------------------------------------------------------- 2

FIG2_GRID = np.linspace(0.05, 0.5, 10)


@lru_cache(maxsize=None)
def fig2_compare():
    """Run the ``compare`` command on the three-state benchmark and parse its CSV."""
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "fig2.model"
        path.write_text(serialize_model(fig2_model(0.1)))
        buf = io.StringIO()
        with redirect_stdout(buf):
            code = cli_main(["compare", "--model", str(path), "--g-grid", ",".join(repr(float(g)) for g in FIG2_GRID)])
    dt = time.perf_counter() - t0
    body = [line for line in buf.getvalue().splitlines() if line and not line.startswith("#")]
    rows = list(csv.DictReader(io.StringIO("\n".join(body))))
    table = {}
    for r in rows:
        table.setdefault((int(r["j"]), int(r["k"])), []).append(r)
    return code, table, dt


def _two_smallest(rows):
    rs = sorted(rows, key=lambda r: float(r["g"]))[:2]
    return [float(r["g"]) for r in rs], [float(r["ratio"]) for r in rs]


def criterion_2a():
    code, table, dt = fig2_compare()
    worst, where = 0.0, None
    for r in table[(1, 2)]:
        g = float(r["g"])
        if g <= 0.2 + 1e-12:
            rel = abs(float(r["dP"])) / float(r["P_numeric"])
            if rel > worst:
                worst, where = rel, g
    ok = code == 0 and worst <= 0.1 and dt < 120
    return ok, f"max |dP12|/P12 for g <= 0.2 is {worst:.3f} at g = {where:g} (<= 0.1), {dt:.1f} s (< 120 s)"


def _ratio_agreement(entry, power):
    code, table, dt = fig2_compare()
    gs, rs = _two_smallest(table[entry])
    spread = abs(rs[0] - rs[1]) / max(abs(rs[0]), abs(rs[1]))
    ok = code == 0 and spread <= 0.25 and dt < 120
    j, k = entry
    return ok, (
        f"dP{j}{k}/g^{power} = {rs[0]:.4g} (g={gs[0]:g}), {rs[1]:.4g} (g={gs[1]:g}); "
        f"spread {spread:.3f} (<= 0.25)"
    )


def criterion_2b():
    return _ratio_agreement((1, 2), 5)


def criterion_2d():
    return _ratio_agreement((2, 2), 6)


# --------------------------------------------------------------------------- 3


def criterion_3():
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    g = 0.3
    worst_num, worst_ser = 0.0, 0.0
    for i in range(20):
        m = random_model(rng, (3, 4, 5)[i % 3], shuffle=True)
        _, order = reorder_descending(m)
        top, bottom = order[0], order[-1]
        p_top, p_bottom = be_formula(m)
        P = probabilities(m, g).values
        worst_num = max(worst_num, abs(P[top, top] - p_top(g)), abs(P[bottom, bottom] - p_bottom(g)))

        c = series_coefficients(m)
        L = lambda_matrix(m).values
        for lvl in (top, bottom):
            s = float(np.sum(L[lvl] ** 2))
            worst_ser = max(
                worst_ser,
                abs(c.p2[lvl, lvl] + 2 * s) / (2 * s),
                abs(c.p4[lvl, lvl] - 2 * s * s) / (2 * s * s),
            )
    dt = time.perf_counter() - t0
    ok = worst_num <= 1e-4 and worst_ser <= 1e-12 and dt < 180
    return ok, (
        f"max |P_numeric - BE| = {worst_num:.2e} (<= 1e-4), "
        f"max relative Taylor error {worst_ser:.1e} (<= 1e-12), {dt:.1f} s (< 180 s)"
    )


# --------------------------------------------------------------------------- 4


def q_triples(count: int = 50, seed: int = SEED):
    """Off-resonant triples with a balanced share of every admissible sign
    pattern of (alpha, beta, gamma) and of the theta-term region."""
    rng = np.random.default_rng(seed)
    patterns = [p for p in np.ndindex(2, 2, 2) if p != (0, 0, 0)]  # 1 = positive
    classes = [("pattern", p) for p in patterns] + [("theta", None)]
    out = []
    i = 0
    while len(out) < count:
        kind, p = classes[i % len(classes)]
        a, b, c = rng.uniform(0.1, 3.0, 3)
        if kind == "pattern":
            a, b, c = (v if s else -v for v, s in zip((a, b, c), p))
        else:
            a = -a
            b, c = abs(a) + b, abs(a) + c  # alpha < 0, alpha + beta > 0, alpha + gamma > 0
        if a + b + c < 0.1 or min(abs(a + b), abs(a + c)) < 0.05:
            continue
        out.append(QTriple(a, b, c))
        i += 1
    return out


def criterion_4():
    t0 = time.perf_counter()
    triples = q_triples()
    worst = 0.0
    patterns, theta = set(), 0
    for t in triples:
        worst = max(worst, abs(q_closed_form(t) - q_quadrature(t, tol=1e-7)))
        patterns.add((t.alpha > 0, t.beta > 0, t.gamma > 0))
        theta += t.alpha < 0 and t.alpha + t.beta > 0 and t.alpha + t.gamma > 0
    dt = time.perf_counter() - t0
    ok = worst <= 1e-4 and len(patterns) == 7 and theta > 0 and dt < 120
    return ok, (
        f"{len(triples)} triples, {len(patterns)}/7 sign patterns, {theta} in the theta region; "
        f"max |Q_closed - Q_quad| = {worst:.2e} (<= 1e-4), {dt:.1f} s (< 120 s)"
    )


# --------------------------------------------------------------------------- 5

# (model, j, k, l, p), 0-based in each model's own labelling, with b_j > b_k
RESONANT_CASES = [
    ("fig2", 0, 2, 1, 0),
    ("fig2", 0, 1, 2, 0),
    ("fig2", 0, 1, 1, 2),
    ("fig2", 1, 2, 2, 0),
    ("fig2", 0, 2, 2, 1),
    ("4-state", 0, 3, 1, 0),
    ("4-state", 1, 2, 3, 1),
    ("4-state", 0, 2, 2, 3),
    ("5-state", 0, 1, 2, 0),
    ("5-state", 4, 2, 2, 0),
]


def criterion_5():
    t0 = time.perf_counter()
    models = {"fig2": fig2_model(), "4-state": four_state_model(), "5-state": five_state_model()}
    worst, nonzero = 0.0, 0
    for name, j, k, l, p in RESONANT_CASES:
        m = models[name]
        ref = resonant_r(lambda_matrix(m), m.slopes, j, k, l, p)
        got = resonant_limit_check(m, j, k, l, p)
        worst = max(worst, abs(got - ref))
        nonzero += ref != 0
    dt = time.perf_counter() - t0
    ok = worst <= 1e-3 and dt < 300
    return ok, (
        f"{len(RESONANT_CASES)} quadruples ({nonzero} with nonzero R), max |R_numeric - R_formula| = "
        f"{worst:.2e} (<= 1e-3), {dt:.1f} s (< 300 s)"
    )


# --------------------------------------------------------------------------- 6


def criterion_6():
    rng = np.random.default_rng(SEED)
    worst = 0.0
    sym = True
    for i in range(100):
        n = 2 + i % 5
        c = series_matrix(random_lambda(rng, n))
        scale = max(float(np.abs(m).max()) for m in (c.p2, c.p3, c.p4)) or 1.0
        for m in (c.p2, c.p3, c.p4):
            worst = max(worst, np.abs(m.sum(0)).max() / scale, np.abs(m.sum(1)).max() / scale)
        sym &= np.array_equal(c.p3, -c.p3.T) and np.array_equal(c.p2, c.p2.T) and np.array_equal(c.p4, c.p4.T)
    ok = worst <= 1e-12 and bool(sym)
    return ok, f"max relative row/column sum {worst:.1e} (<= 1e-12), exact (anti)symmetry: {bool(sym)}"


# --------------------------------------------------------------------------- 7


def five_state_symbolic():
    """P32 and P33 coefficients of the 5-state chain with symbolic lambdas."""
    l12, l13, l14 = sp.symbols("lambda12 lambda13 lambda14", positive=True)
    L = np.zeros((5, 5), dtype=object)
    # |b_25| = |b_14|, |b_35| = |b_13|, |b_45| = |b_12| so the chain reuses three lambdas
    for (j, k), v in {(0, 1): l12, (0, 2): l13, (0, 3): l14, (1, 4): -l14, (2, 4): -l13, (3, 4): -l12}.items():
        L[j, k] = L[k, j] = v
    _, order = reorder_descending(five_state_model())
    c = series_matrix(L[np.ix_(order, order)])
    inv = np.argsort(order)  # original level -> sorted position
    at = lambda m, j, k: sp.expand(m[inv[j], inv[k]])  # noqa: E731
    p32 = [at(c.p2, 2, 1), at(c.p3, 2, 1), at(c.p4, 2, 1)]
    p33 = [at(c.p2, 2, 2), at(c.p3, 2, 2), at(c.p4, 2, 2)]
    want32 = [0, 0, l13**2 * (l12**2 + l14**2)]
    want33 = [-4 * l13**2, 0, 2 * l13**2 * (3 * l13**2 + 2 * l14**2)]
    return all(sp.expand(a - b) == 0 for a, b in zip(p32 + p33, want32 + want33))


def criterion_7():
    symbolic = five_state_symbolic()
    m = five_state_model()
    c = series_coefficients(m)
    # C from a ratio scan that brackets g = 0.1; residuals here start at g^6,
    # so |dP|/g^5 grows with g and its largest value bounds the whole range
    gs = np.geomspace(0.01, 0.2, 8)
    scan = residual_scan(m, gs, c)
    usable = ~scan.floor
    ratio5 = np.abs(scan.residuals) / gs[:, None, None] ** 5
    C = float(np.max(np.where(usable, ratio5, 0.0)))
    g = 0.1
    tm = probabilities_many(m, [g])[0]
    delta = float(np.abs(tm.values - evaluate_at(c, g)).max())
    ok = symbolic and scan.all_passed and delta <= C * g**5
    return ok, (
        f"symbolic P32/P33 identity: {symbolic}; ratio scan stable: {scan.all_passed}; "
        f"max |dP(0.1)| = {delta:.2e} <= C g^5 = {C * g**5:.2e} (C = {C:.3g})"
    )


# --------------------------------------------------------------------------- 8


def criterion_8():
    m = fig2_model()
    tol = 1e-10
    worst = 0.0
    for t in (1.0, 3.0, 10.0):
        for n in (1, 2, 3):
            worst = max(worst, w_n_finite(m, n, t, tol).parity_defect())
        for n in (1, 3):
            worst = max(worst, float(np.abs(np.diag(pn_finite(m, n, t, tol))).max()))
    ok = worst <= 10 * tol
    return ok, f"max parity defect / P1,P3 diagonal {worst:.1e} (<= {10 * tol:g})"


# ---------------------------------------------------------------------------

CRITERIA = {
    "1": ("LZ closed loop", criterion_1),
    "2a": ("three-state P12 series vs numeric for g <= 0.2", criterion_2a),
    "2b": ("three-state dP12/g^5 stable at the two smallest g", criterion_2b),
    "2d": ("three-state dP22/g^6 stable at the two smallest g", criterion_2d),
    "3": ("BE cross-check on 20 random models", criterion_3),
    "4": ("Q closed form vs quadrature, 50 triples", criterion_4),
    "5": ("resonant limit R, 10 quadruples", criterion_5),
    "6": ("coefficient stochasticity and parity", criterion_6),
    "7": ("5-state P32/P33", criterion_7),
    "8": ("W parity suite", criterion_8),
}


@pytest.mark.parametrize("key", list(CRITERIA))
def test_criterion(key):
    desc, fn = CRITERIA[key]
    ok, detail = fn()
    report(key, desc, ok, detail)
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for key, (desc, fn) in CRITERIA.items():
        ok, detail = fn()
        report(key, desc, ok, detail)
        failed += not ok
    sys.exit(1 if failed else 0)

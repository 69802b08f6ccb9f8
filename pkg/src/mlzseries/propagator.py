"""Direct numerical propagation and infinite-time transition probabilities.

The solver integrates ``i dW/dt = g {At(t), W}`` from ``W(0) = I`` over
``t >= 0``, which is the symmetric-time evolution from ``-t`` to ``t`` in the
interaction picture. Diabatic phases are stripped analytically, so the
integrand only oscillates like ``exp(i b_jk t^2 / 2)``.

Infinite-time probabilities are read out in the adiabatic basis: the
evolution operator ``S(t)`` is projected onto instantaneous eigenvectors of
``H(+t)`` and ``H(-t)``, which tend to the diabatic states as ``t -> inf``
but remove the slowly decaying ``g A / (b t)`` admixture. Residual
interference is removed by a smooth window average in ``u = t^2``. Two
window positions (``T0`` and ``2 T0``) from the same run form the ladder
whose disagreement certifies the error estimate.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.integrate import solve_ivp

from .errors import (
    ConvergenceFailure,
    DomainError,
    NoConvergence,
    NonUnitaryDrift,
    PrecisionFloor,
    StepSizeUnderflow,
)
from .model import MlzModel, reorder_descending, unsort_matrix
from .series import SeriesCoefficients, evaluate_at

__all__ = [
    "TransitionMatrix",
    "ResidualScan",
    "SolverSettings",
    "propagate",
    "probabilities",
    "probabilities_many",
    "residual_scan",
    "numeric_on_grid",
    "assemble_scan",
    "pinned_settings",
]


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    n: int
    values: NDArray[np.float64]
    est_error: float

    def stochastic_defect(self) -> float:
        v = self.values
        return float(max(np.abs(v.sum(0) - 1).max(), np.abs(v.sum(1) - 1).max()))


@dataclass(frozen=True)
class SolverSettings:
    """Knobs recorded in CLI output metadata."""

    method: str = "DOP853"
    rtol: float = 1e-10
    atol_factor: float = 1e-2  # atol = rtol * atol_factor
    t0: float | None = None  # first ladder time; None picks from the model
    window_periods: int = 8
    max_error: float = 1e-6
    batch: int = 16  # g values per vectorized solve

    @property
    def atol(self) -> float:
        return self.rtol * self.atol_factor


def _rhs(slopes: NDArray, couplings: NDArray, gs: NDArray):
    n = len(slopes)
    bd = slopes[:, None] - slopes[None, :]
    gsh = gs[:, None, None]

    def f(t, y):
        W = y.reshape(len(gs), n, n)
        gAt = gsh * (couplings * np.exp(0.5j * bd * (t * t)))
        return (-1j * (gAt @ W + W @ gAt)).ravel()

    return f


def _solve(model: MlzModel, gs: NDArray, t_eval: NDArray, rtol: float, atol: float, method: str):
    n = model.n
    y0 = np.tile(np.eye(n, dtype=complex), (len(gs), 1, 1)).ravel()
    t_end = float(t_eval[-1])
    if t_end == 0:
        return np.broadcast_to(y0.reshape(1, len(gs), n, n), (len(t_eval), len(gs), n, n)).copy()
    sol = solve_ivp(
        _rhs(model.slopes, model.couplings, gs),
        (0.0, t_end),
        y0,
        method=method,
        rtol=rtol,
        atol=atol,
        t_eval=t_eval,
    )
    if sol.status != 0:
        if "step size" in sol.message.lower():
            raise StepSizeUnderflow(sol.message)
        raise ConvergenceFailure(sol.message)
    return sol.y.T.reshape(len(t_eval), len(gs), n, n)


def _unitarity_defect(W: NDArray) -> float:
    n = W.shape[-1]
    d = np.swapaxes(W.conj(), -1, -2) @ W - np.eye(n)
    return float(np.max(np.abs(d)))


def propagate(model: MlzModel, g: float, t_final: float, tol: float = 1e-10) -> NDArray[np.complex128]:
    """``W(t_final)`` in the model's own labelling; ``|W_jk|^2`` are the
    finite-time diabatic probabilities."""
    if not t_final > 0:
        raise DomainError("t_final must be positive")
    if not tol > 0:
        raise DomainError("tol must be positive")
    W = _solve(model, np.array([float(g)]), np.array([float(t_final)]), tol, tol * 1e-2, "DOP853")[-1, 0]
    drift = _unitarity_defect(W)
    if drift > 10 * tol:
        raise NonUnitaryDrift(f"|W^H W - I| = {drift:.3g} exceeds 10*tol = {10 * tol:.3g}")
    return W


def _default_t0(model: MlzModel, gmax: float) -> float:
    bd = np.abs(model.slopes[:, None] - model.slopes[None, :])
    bmin = float(np.min(bd[bd > 0]))
    anorm = float(np.linalg.norm(model.couplings, 2))
    return max(40.0 / math.sqrt(bmin), 20.0 * abs(gmax) * anorm / bmin)


def _bump(x: NDArray) -> NDArray:
    w = np.zeros_like(x)
    m = (x > 0) & (x < 1)
    w[m] = np.exp(-1.0 / (x[m] * (1 - x[m])))
    return w


def _adiabatic_probs(model: MlzModel, gs: NDArray, ts: NDArray, W: NDArray) -> NDArray:
    """``|<+t, a| S(t) |-t, b>|^2`` for descending-slope models; (T, G, N, N)."""
    b, A = model.slopes, model.couplings
    ph = np.exp(-0.5j * b[None, :] * (ts[:, None] ** 2))  # (T, N)
    S = ph[:, None, :, None] * W * ph.conj()[:, None, None, :]
    H = lambda sign: sign * ts[:, None, None, None] * np.diag(b) + gs[None, :, None, None] * A
    _, vp = np.linalg.eigh(H(1.0))
    _, vm = np.linalg.eigh(H(-1.0))
    vp = vp[..., ::-1]  # descending energy at +t is level order 0..N-1
    # eigh leaves the sign of each vector free; |.|^2 does not care
    M = np.swapaxes(vp.conj(), -1, -2) @ S @ vm
    return np.abs(M) ** 2


def _ladder(model: MlzModel, gs: NDArray, s: SolverSettings) -> list[TransitionMatrix]:
    """Probabilities for a batch of g values on a sorted model."""
    n = model.n
    bd = np.abs(model.slopes[:, None] - model.slopes[None, :])
    wmin, wmax = float(np.min(bd[bd > 0])) / 2, float(np.max(bd)) / 2
    width = s.window_periods * 2 * math.pi / wmin
    t0 = s.t0 if s.t0 is not None else _default_t0(model, float(np.max(np.abs(gs))))
    nwin = max(400, int(40 * s.window_periods * wmax / wmin))
    starts = [t0 * t0, 4 * t0 * t0]
    u = np.concatenate([np.linspace(u0, u0 + width, nwin) for u0 in starts])
    ts = np.sqrt(u)
    W = _solve(model, gs, ts, s.rtol, s.atol, s.method)
    P = _adiabatic_probs(model, gs, ts, W)
    means = []
    for i, u0 in enumerate(starts):
        sl = slice(i * nwin, (i + 1) * nwin)
        w = _bump((u[sl] - u0) / width)
        means.append(np.tensordot(w, P[sl], axes=(0, 0)) / w.sum())
    drift = np.array([_unitarity_defect(W[-1, gi]) for gi in range(len(gs))])
    out = []
    for gi in range(len(gs)):
        v = means[1][gi]
        ladder = float(np.max(np.abs(means[1][gi] - means[0][gi])))
        stoch = float(max(np.abs(v.sum(0) - 1).max(), np.abs(v.sum(1) - 1).max()))
        est = max(ladder, stoch, float(drift[gi]))
        if est > s.max_error:
            raise NoConvergence(
                f"g={gs[gi]:g}: ladder levels t={t0:.3g} and t={2 * t0:.3g} disagree by {ladder:.3g} "
                f"(budget {s.max_error:g})"
            )
        out.append(TransitionMatrix(n, v, est))
    return out


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("MLZSERIES_THREADS", "1")))
    except ValueError:
        return 1


def probabilities_many(
    model: MlzModel, g_values: ArrayLike, settings: SolverSettings | None = None
) -> list[TransitionMatrix]:
    """Infinite-time probabilities for several g, in the model's own labelling.

    The g values are solved in fixed-size chunks, each one vectorized ODE.
    ``MLZSERIES_THREADS`` sets how many chunks run at once; since chunking
    and the ladder times depend only on the inputs, the thread count never
    changes the numbers.
    """
    s = settings or SolverSettings()
    gs = np.atleast_1d(np.asarray(g_values, dtype=float))
    if not s.rtol > 0:
        raise DomainError("tol must be positive")
    srt, order = reorder_descending(model)
    s = pinned_settings(model, gs, s)
    chunks = [gs[i : i + s.batch] for i in range(0, len(gs), s.batch)]
    nthreads = min(_threads(), len(chunks))
    if nthreads <= 1:
        parts = [_ladder(srt, c, s) for c in chunks]
    else:
        with ThreadPoolExecutor(nthreads) as pool:
            parts = list(pool.map(lambda c: _ladder(srt, c, s), chunks))
    return [TransitionMatrix(tm.n, unsort_matrix(tm.values, order), tm.est_error) for part in parts for tm in part]


def probabilities(model: MlzModel, g: float, tol: float = 1e-10, settings: SolverSettings | None = None) -> TransitionMatrix:
    s = settings or SolverSettings(rtol=tol)
    return probabilities_many(model, [g], s)[0]


@dataclass(frozen=True, eq=False)
class ResidualScan:
    """``Delta P = P_numeric - P_series`` over a g grid.

    ``ratios`` holds ``Delta P / g^5`` off the diagonal and ``Delta P / g^6`` on
    it. ``floor`` marks entries whose residual is below ``100 * est_error``.
    ``passed`` is the per-entry ratio-stability verdict.
    """

    g_values: NDArray[np.float64]
    residuals: NDArray[np.float64]  # (G, N, N)
    ratios: NDArray[np.float64]
    floor: NDArray[np.bool_]
    est_error: NDArray[np.float64]  # (G,)
    numeric: NDArray[np.float64]
    series: NDArray[np.float64]
    passed: NDArray[np.bool_]  # (N, N)
    floor_only: NDArray[np.bool_]  # (N, N): every g under the floor
    order: int = 4
    band: float = 0.25

    @property
    def all_passed(self) -> bool:
        return bool(np.all(self.passed))


def ratio_powers(n: int) -> NDArray[np.int_]:
    p = np.full((n, n), 5)
    np.fill_diagonal(p, 6)
    return p


def _stable(g1: float, g2: float, r1: float, r2: float, band: float) -> bool:
    """Ratios at the two smallest g agree within ``band``, or shrink toward 0
    at least linearly in g (a vanishing leading coefficient)."""
    if abs(r1 - r2) <= band * max(abs(r1), abs(r2)):
        return True
    return abs(r1) <= (g1 / g2) * abs(r2) * (1 + band)


def check_g_grid(g_values: ArrayLike) -> NDArray[np.float64]:
    gs = np.asarray(g_values, dtype=float)
    if gs.ndim != 1 or gs.size == 0 or np.any(gs < 0) or np.any(np.diff(gs) <= 0):
        raise DomainError("g_values must be non-negative and strictly increasing")
    return gs


def pinned_settings(model: MlzModel, g_values: ArrayLike, settings: SolverSettings) -> SolverSettings:
    """Settings with the ladder time fixed from the whole grid, so any split of
    the grid into pieces reproduces the same numbers."""
    if settings.t0 is not None:
        return settings
    srt, _ = reorder_descending(model)
    gmax = float(np.max(np.abs(np.atleast_1d(g_values)))) if np.size(g_values) else 0.0
    return replace(settings, t0=_default_t0(srt, gmax))


def numeric_on_grid(
    model: MlzModel, g_values: ArrayLike, settings: SolverSettings
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Probabilities (G, N, N) and error estimates (G,); ``g = 0`` is exact identity."""
    gs = np.atleast_1d(np.asarray(g_values, dtype=float))
    n = model.n
    numeric = np.broadcast_to(np.eye(n), (len(gs), n, n)).copy()
    est = np.zeros(len(gs))
    nz = np.flatnonzero(gs != 0)
    if nz.size:
        for i, tm in zip(nz, probabilities_many(model, gs[nz], settings)):
            numeric[i], est[i] = tm.values, tm.est_error
    return numeric, est


def assemble_scan(
    g_values: ArrayLike,
    numeric: NDArray,
    est: NDArray,
    coeffs: SeriesCoefficients,
    band: float = 0.25,
    strict: bool = False,
) -> ResidualScan:
    """Residuals, ratios, floor flags and verdicts from precomputed numerics."""
    gs = check_g_grid(g_values)
    n = coeffs.n
    series = np.array([evaluate_at(coeffs, g) for g in gs])
    resid = numeric - series
    powers = ratio_powers(n)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(gs[:, None, None] > 0, resid / gs[:, None, None] ** powers, 0.0)
    floor = (np.abs(resid) < 100 * est[:, None, None]) | (gs[:, None, None] == 0)
    if strict and np.any(floor):
        g_bad = gs[np.any(floor, axis=(1, 2))]
        raise PrecisionFloor(f"precision floor: residuals under 100*est_error at g = {g_bad.tolist()}")

    passed = np.zeros((n, n), dtype=bool)
    floor_only = np.zeros((n, n), dtype=bool)
    for j in range(n):
        for k in range(n):
            idx = np.flatnonzero(~floor[:, j, k])
            if idx.size == 0:
                # residual lost in solver noise at every g: nothing contradicts the order
                floor_only[j, k] = passed[j, k] = True
            elif idx.size >= 2:
                i1, i2 = idx[0], idx[1]
                passed[j, k] = _stable(gs[i1], gs[i2], ratios[i1, j, k], ratios[i2, j, k], band)
    return ResidualScan(gs, resid, ratios, floor, est, numeric, series, passed, floor_only, band=band)


def residual_scan(
    model: MlzModel,
    g_values: ArrayLike,
    coeffs: SeriesCoefficients,
    tol: float = 1e-10,
    band: float = 0.25,
    strict: bool = False,
    settings: SolverSettings | None = None,
) -> ResidualScan:
    """Certify the series order by order against the propagator.

    An entry passes when ``Delta P / g^m`` (m = 5 off the diagonal, 6 on it)
    at the two smallest usable g agree within ``band``, or shrink toward 0
    at least linearly in g. Residuals under ``100 * est_error`` are flagged
    and skipped; with ``strict`` they raise :class:`PrecisionFloor`.
    """
    gs = check_g_grid(g_values)
    s = pinned_settings(model, gs, settings or SolverSettings(rtol=tol))
    numeric, est = numeric_on_grid(model, gs, s)
    return assemble_scan(gs, numeric, est, coeffs, band, strict)

"""Numerical W_n(t) from the interaction-picture recursion.

In the picture ``S = exp(-i Phi) W exp(i Phi)`` with ``Phi = diag(b t^2 / 2)``
the evolution is ``i dW/dt = g {At, W}`` with
``At_jk(t) = A_jk exp(i b_jk t^2 / 2)``. Expanding ``W = sum g^n W_n`` gives
``W_n(t) = -i int_0^t {At, W_(n-1)}``, and with ``M(t) = int_0^t At``

    W1 = -2i M,   W2 = -2 M^2,   W3 = 2i M^3 - 2i int_0^t M At M.

``M`` is known in closed form through Fresnel integrals, so W1 and the
symmetrized W2 are exact; W3 needs one oscillatory quadrature. The
"recursion" method instead integrates the raw recursion numerically and is
used to cross-check the symmetrization.

All quadratures run on Gauss panels uniform in ``u = s^2``, where the phases
are linear. Large-time limits use a smooth window average over ``u`` followed
by extrapolation in ``1/u``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre
from numpy.typing import ArrayLike, NDArray

from .errors import ConvergenceFailure, DomainError, NoConvergence, NotResonant
from .model import LambdaMatrix, MlzModel
from .specfun import phase_integral

__all__ = [
    "WMatrix",
    "w1_infinity",
    "w2_infinity",
    "w_n_finite",
    "pn_finite",
    "pn_limit",
    "wn_limit",
    "resonant_limit_check",
    "window_average",
]

_NODES = 12


@dataclass(frozen=True, eq=False)
class WMatrix:
    n: int
    order: int
    t: float  # math.inf for closed-form limits
    values: NDArray[np.complex128]

    def parity_defect(self) -> float:
        """``max |W - (-1)^order W^H|``: even orders are Hermitian, odd anti-Hermitian."""
        w = self.values
        return float(np.max(np.abs(w - (-1) ** self.order * w.conj().T)))


def _spectral_matrix(m: int) -> tuple[NDArray, NDArray, NDArray]:
    """Gauss-Legendre nodes, weights, and the matrix taking node values of f
    to ``int_{-1}^{x_i} f`` at every node."""
    x, w = legendre.leggauss(m)
    V = legendre.legvander(x, m - 1)
    anti = np.empty((m, m))
    for i in range(m):
        e = np.zeros(m)
        e[i] = 1.0
        anti[:, i] = legendre.legval(x, legendre.legint(e, lbnd=-1))
    return x, w, anti @ np.linalg.inv(V)


_GX, _GW, _GS = _spectral_matrix(_NODES)


@dataclass
class _Panels:
    """Gauss panels covering ``s in [0, sqrt(u_max)]``, uniform in ``u``."""

    s_end: NDArray  # (K+1,)
    s: NDArray  # (K, m)
    h: NDArray  # (K,) half widths in s

    @classmethod
    def build(cls, u_max: float, du: float) -> "_Panels":
        k = max(1, int(math.ceil(u_max / du)))
        s_end = np.sqrt(np.linspace(0.0, u_max, k + 1))
        lo, hi = s_end[:-1], s_end[1:]
        h = 0.5 * (hi - lo)
        s = (0.5 * (lo + hi))[:, None] + h[:, None] * _GX
        return cls(s_end, s, h)

    def cumulative(self, f: NDArray, at_nodes: bool = False):
        """Running integral of ``f`` (shape (K, m, ...)) from 0.

        Returns endpoint values (K+1, ...) and optionally node values.
        """
        hshape = (-1,) + (1,) * (f.ndim - 2)
        totals = np.einsum("j,kj...->k...", _GW, f) * self.h.reshape(hshape)
        ends = np.concatenate([np.zeros((1,) + f.shape[2:], dtype=f.dtype), np.cumsum(totals, axis=0)])
        if not at_nodes:
            return ends, None
        part = np.einsum("ij,kj...->ki...", _GS, f) * self.h.reshape((-1, 1) + (1,) * (f.ndim - 2))
        return ends, ends[:-1, None] + part


def _slope_diffs(model: MlzModel) -> NDArray:
    b = model.slopes
    return b[:, None] - b[None, :]


def _m_matrix(model: MlzModel, s: NDArray) -> NDArray[np.complex128]:
    """``M(s) = int_0^s At`` for any array of times, shape s.shape + (N, N)."""
    s = np.asarray(s, dtype=float)
    n = model.n
    bd = _slope_diffs(model)
    out = np.zeros(s.shape + (n, n), dtype=complex)
    for j in range(n):
        for k in range(n):
            if j != k and model.couplings[j, k] != 0:
                out[..., j, k] = model.couplings[j, k] * phase_integral(bd[j, k] / 2, s)
    return out


def _a_tilde(model: MlzModel, s: NDArray) -> NDArray[np.complex128]:
    bd = _slope_diffs(model)
    s2 = np.asarray(s, dtype=float)[..., None, None] ** 2
    return model.couplings * np.exp(0.5j * bd * s2)


def _default_du(model: MlzModel) -> float:
    spread = float(np.ptp(model.slopes))
    return 0.5 / spread


def _w_on_grid(model: MlzModel, panels: _Panels, method: str) -> list[NDArray]:
    """W0..W3 at every panel endpoint, each (K+1, N, N)."""
    n = model.n
    M_end = _m_matrix(model, panels.s_end)
    eye = np.broadcast_to(np.eye(n, dtype=complex), M_end.shape)
    w1 = -2j * M_end
    if method == "symmetrized":
        w2 = -2.0 * M_end @ M_end
        Mn = _m_matrix(model, panels.s)
        At = _a_tilde(model, panels.s)
        C, _ = panels.cumulative(Mn @ At @ Mn)
        w3 = 2j * (M_end @ M_end @ M_end) - 2j * C
    elif method == "recursion":
        At = _a_tilde(model, panels.s)
        w1n = -2j * _m_matrix(model, panels.s)
        w2, w2n = panels.cumulative(-1j * (At @ w1n + w1n @ At), at_nodes=True)
        w3, _ = panels.cumulative(-1j * (At @ w2n + w2n @ At))
    else:
        raise ValueError(f"unknown method {method!r}; use 'symmetrized' or 'recursion'")
    return [eye.copy(), w1, w2, w3]


def w1_infinity(lam: LambdaMatrix | ArrayLike, slopes: ArrayLike | None = None) -> WMatrix:
    """``W1(inf)``; entry (j,k) with ``b_j > b_k`` is ``-i sqrt2 lambda_jk e^{i pi/4}``.

    Without ``slopes`` the levels are taken to be in descending-slope order.
    """
    m = _m_infinity(lam, slopes)
    return WMatrix(m.shape[0], 1, math.inf, -2j * m)


def w2_infinity(lam: LambdaMatrix | ArrayLike, slopes: ArrayLike | None = None) -> WMatrix:
    """``W2(inf) = -2 M(inf)^2``. Only the slope signs matter."""
    m = _m_infinity(lam, slopes)
    return WMatrix(m.shape[0], 2, math.inf, -2.0 * m @ m)


def _m_infinity(lam, slopes) -> NDArray[np.complex128]:
    L = lam.values if isinstance(lam, LambdaMatrix) else np.asarray(lam, dtype=float)
    n = L.shape[0]
    if slopes is None:
        sign = np.sign(np.arange(n)[None, :] - np.arange(n)[:, None])
    else:
        b = np.asarray(slopes, dtype=float)
        sign = np.sign(b[:, None] - b[None, :])
    # M_jk(inf) = (lambda_jk / sqrt 2) exp(i pi sgn(b_jk) / 4)
    return L / math.sqrt(2) * np.exp(0.25j * math.pi * sign) * (sign != 0)


def _check_t(t: float, tol: float) -> None:
    if not (t >= 0 and math.isfinite(t)):
        raise DomainError(f"t must be finite and >= 0, got {t!r}")
    if not tol > 0:
        raise DomainError("tol must be positive")


def _converged_w(model: MlzModel, t: float, tol: float, method: str, max_panels: int) -> list[NDArray]:
    """W0..W3 at time t, refining the panel width until W3 changes < tol."""
    u = t * t
    du = min(_default_du(model), max(u, 1e-300))
    prev = None
    while True:
        panels = _Panels.build(u, du)
        ws = [w[-1] for w in _w_on_grid(model, panels, method)]
        if prev is not None:
            change = max(float(np.max(np.abs(a - b))) for a, b in zip(ws[2:], prev[2:]))
            if change < tol:
                return ws
        if len(panels.h) * 2 > max_panels:
            raise ConvergenceFailure(f"W quadrature at t={t:g} did not reach tol={tol:g}")
        prev = ws
        du /= 2


def w_n_finite(
    model: MlzModel, n: int, t: float, tol: float = 1e-10, method: str = "symmetrized", max_panels: int = 2_000_000
) -> WMatrix:
    """``W_n(t)`` for ``n`` in 0..3, accurate to about ``tol`` per entry."""
    if n not in (0, 1, 2, 3):
        raise DomainError(f"W_n is available for n = 0..3, got {n}")
    _check_t(t, tol)
    if n <= 1 or (n == 2 and method == "symmetrized"):
        M = _m_matrix(model, np.array(t))
        w = [np.eye(model.n, dtype=complex), -2j * M, -2.0 * M @ M][n]
        return WMatrix(model.n, n, float(t), w)
    ws = _converged_w(model, t, tol, method, max_panels)
    return WMatrix(model.n, n, float(t), ws[n])


def _pn_from_w(ws: list[NDArray], n: int) -> NDArray[np.float64]:
    """Order-n probability coefficients from W0..W3 (any leading shape)."""
    if n == 4:
        # needs W4 on the diagonal; recovered from zero row sums instead
        p = 2 * np.real(ws[1] * ws[3].conj()) + np.abs(ws[2]) ** 2
        n_lev = p.shape[-1]
        idx = np.arange(n_lev)
        p[..., idx, idx] = 0.0
        p[..., idx, idx] = -p.sum(axis=-1)
        return p
    total = sum(ws[m] * ws[n - m].conj() for m in range(n + 1))
    return np.real(total)


def pn_finite(model: MlzModel, n: int, t: float, tol: float = 1e-10, method: str = "symmetrized") -> NDArray[np.float64]:
    """Coefficient of ``g^n`` in ``P_jk(t) = |W_jk(t)|^2``, for n in 1..4."""
    if n not in (1, 2, 3, 4):
        raise DomainError(f"P_n is available for n = 1..4, got {n}")
    _check_t(t, tol)
    if n <= 2:
        M = _m_matrix(model, np.array(t))
        ws = [np.eye(model.n, dtype=complex), -2j * M, -2.0 * M @ M]
    else:
        ws = _converged_w(model, t, tol, method, 2_000_000)
    return _pn_from_w(ws, n)


def _bump(x: NDArray) -> NDArray:
    w = np.zeros_like(x)
    m = (x > 0) & (x < 1)
    w[m] = np.exp(-1.0 / (x[m] * (1 - x[m])))
    return w


def window_average(u: NDArray, values: NDArray, u0: float, width: float) -> NDArray:
    """Smooth bump-weighted average of ``values`` over ``u in [u0, u0 + width]``."""
    w = _bump((np.asarray(u) - u0) / width)
    if not np.any(w > 0):
        raise DomainError("averaging window contains no samples")
    return np.tensordot(w, values, axes=(0, 0)) / w.sum()


def _extrapolate(u: NDArray, values: NDArray, starts, width: float) -> NDArray:
    """Fit window averages to ``v_inf + c <1/u>`` and return ``v_inf``.

    Oscillating terms are suppressed by the smooth window; what survives is a
    drift ``c / u`` from products of conjugate tails. Using the window average
    of ``1/u`` itself (rather than ``1/u0``) makes the elimination exact for
    that drift.
    """
    avg = np.array([window_average(u, values, u0, width) for u0 in starts])
    inv = np.array([window_average(u, 1.0 / np.maximum(u, 1e-300), u0, width) for u0 in starts])
    X = np.column_stack([np.ones_like(inv), inv])
    flat = avg.reshape(len(starts), -1)
    coef, *_ = np.linalg.lstsq(X, flat, rcond=None)
    return coef[0].reshape(avg.shape[1:])


def _window_width(model: MlzModel, periods: int = 32) -> float:
    bd = np.abs(_slope_diffs(model))
    wmin = float(np.min(bd[bd > 0])) / 2  # phases are b_jk u / 2
    return periods * 2 * math.pi / wmin


def pn_limit(model: MlzModel, n: int, u0: float = 1600.0, method: str = "symmetrized") -> NDArray[np.float64]:
    """``lim_{t->inf} P_n(t)`` by windowed averages at ``u0`` and ``4 u0`` and
    Richardson extrapolation in ``1/u``."""
    L = _window_width(model)
    panels = _Panels.build(4 * u0 + L, _default_du(model) / 2)
    p = _pn_from_w(_w_on_grid(model, panels, method), n)
    return _extrapolate(panels.s_end**2, p, [u0, 4 * u0], L)


def wn_limit(model: MlzModel, n: int, u0: float = 1600.0) -> WMatrix:
    """``lim_{t->inf} W_n(t)`` for n = 1, 2 (or 3 on models without resonant
    terms), by the same windowed Richardson scheme as :func:`pn_limit`."""
    if n not in (1, 2, 3):
        raise DomainError(f"W_n limits are available for n = 1..3, got {n}")
    L = _window_width(model)
    panels = _Panels.build(4 * u0 + L, _default_du(model) / 2)
    w = _w_on_grid(model, panels, "symmetrized")[n]
    return WMatrix(model.n, n, math.inf, _extrapolate(panels.s_end**2, w, [u0, 4 * u0], L))


def _r_curve(model: MlzModel, j: int, k: int, l: int, p: int, u_max: float):
    """``R(u) = 8 Re(conj(M_jk) int_0^t At_lp M_jl M_pk)`` at panel endpoints."""
    b, A = model.slopes, model.couplings
    panels = _Panels.build(u_max, 0.25 / float(np.ptp(b)))

    def m(a, c, s):
        if a == c or A[a, c] == 0:
            return np.zeros_like(s, dtype=complex)
        return A[a, c] * phase_integral((b[a] - b[c]) / 2, s)

    s = panels.s
    f = A[l, p] * np.exp(0.5j * (b[l] - b[p]) * s * s) * m(j, l, s) * m(p, k, s)
    I, _ = panels.cumulative(f)
    R = 8 * np.real(np.conj(m(j, k, panels.s_end)) * I)
    return panels.s_end**2, R


def resonant_limit_check(
    model: MlzModel,
    j: int,
    k: int,
    l: int,
    p: int,
    t_grid: ArrayLike | None = None,
) -> float:
    """Large-time limit of the resonant fourth-order combination R.

    Window averages of ``R`` at ``u = t^2`` for each grid time are fitted as
    ``R_inf + c / u`` by least squares; the intercept is returned. Indices are
    0-based and refer to the model's own labelling.
    """
    if not (p == j or l == k):
        raise NotResonant(f"(j,k,l,p)=({j},{k},{l},{p}) is not resonant: need p == j or l == k")
    if t_grid is None:
        t_grid = np.sqrt([400.0, 800.0, 1600.0, 3200.0, 6400.0])
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size < 2 or np.any(np.diff(t_grid) <= 0):
        raise DomainError("t_grid must hold at least two increasing times")
    width = _window_width(model)
    u_grid = t_grid**2
    u, R = _r_curve(model, j, k, l, p, float(u_grid[-1]) + width)
    avg = np.array([window_average(u, R, u0, width) for u0 in u_grid])
    limit = float(_extrapolate(u, R, u_grid, width))
    # the windowed values must settle: late spread below early spread
    steps = np.abs(np.diff(avg))
    if steps.size >= 2 and steps[-1] > steps[0] and steps[-1] > 1e-12:
        raise NoConvergence(f"R(t) window averages do not settle: steps {steps.tolist()}")
    return limit

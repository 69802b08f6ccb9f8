"""Perturbative transition probabilities through fourth order in g.

Coefficients are functions of the lambda-matrix only and are stored at
``g = 1``; :func:`evaluate_at` puts ``g`` back. The ``*_offdiag`` functions
and :func:`series_matrix` use the descending-slope labelling (level 0 has the
largest slope). :func:`series_coefficients` accepts a model in any level order.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .model import LambdaMatrix, MlzModel, lambda_matrix, reorder_descending, unsort_matrix

__all__ = [
    "SeriesCoefficients",
    "p2_offdiag",
    "p3_offdiag",
    "p4_offdiag",
    "series_matrix",
    "series_coefficients",
    "evaluate_at",
    "be_formula",
    "lz_exact",
]


@dataclass(frozen=True, eq=False)
class SeriesCoefficients:
    """``P(g) = I + p2 g^2 + p3 g^3 + p4 g^4 + O(g^5)``."""

    n: int
    p2: NDArray[np.float64]
    p3: NDArray[np.float64]
    p4: NDArray[np.float64]

    def by_order(self) -> dict[int, NDArray[np.float64]]:
        return {2: self.p2, 3: self.p3, 4: self.p4}

    def permuted(self, order: NDArray[np.intp]) -> "SeriesCoefficients":
        """Coefficients of the model whose level ``i`` is this model's ``order[i]``."""
        ix = np.ix_(order, order)
        return SeriesCoefficients(self.n, self.p2[ix], self.p3[ix], self.p4[ix])


def _lam(lam: LambdaMatrix | ArrayLike) -> NDArray:
    """Float array, or an object array left as is (e.g. sympy symbols)."""
    if isinstance(lam, LambdaMatrix):
        return lam.values
    arr = np.asarray(lam)
    return arr if arr.dtype == object else arr.astype(float)


def _check_pair(L: NDArray, j: int, k: int) -> None:
    n = L.shape[0]
    if not (0 <= j < k < n):
        raise IndexError(f"need 0 <= j < k < {n}, got j={j}, k={k}")


def _split_sums(L: NDArray, j: int, k: int) -> tuple[float, float]:
    """Interior and exterior sums of ``lambda_jl lambda_lk``."""
    n = L.shape[0]
    inner = sum(L[j, l] * L[l, k] for l in range(n) if j < l < k)
    outer = sum(L[j, l] * L[l, k] for l in range(n) if l < j or l > k)
    return inner, outer


def p2_offdiag(lam, j: int, k: int) -> float:
    L = _lam(lam)
    _check_pair(L, j, k)
    return 2.0 * L[j, k] ** 2


def p3_offdiag(lam, j: int, k: int) -> float:
    L = _lam(lam)
    _check_pair(L, j, k)
    inner, outer = _split_sums(L, j, k)
    return 2.0 * L[j, k] * (inner - outer)


def _pattern_weight(j: int, k: int, l: int, p: int) -> int:
    if p < j < l < k or j < p < k < l:
        return 2
    if j < p < l < k:
        return -1
    if j < l < k < p or l < j < p < k or p < j < k < l:
        return 1
    return 0


def p4_offdiag(lam, j: int, k: int) -> float:
    L = _lam(lam)
    _check_pair(L, j, k)
    n = L.shape[0]
    inner, outer = _split_sums(L, j, k)
    ljk2 = L[j, k] ** 2
    one = (
        sum(L[j, l] ** 2 for l in range(n) if l < k)
        + 3 * sum(L[j, l] ** 2 for l in range(n) if l > k)
        + sum(L[l, k] ** 2 for l in range(n) if l > j)
        + 3 * sum(L[l, k] ** 2 for l in range(n) if l < j)
        + 2 * ljk2
    )
    two = 0
    for l in range(n):
        for p in range(n):
            w = _pattern_weight(j, k, l, p)
            if w:
                two += w * L[j, l] * L[l, p] * L[p, k]
    return outer**2 + inner**2 - ljk2 * one - 2 * L[j, k] * two


def series_matrix(lam) -> SeriesCoefficients:
    """Full coefficient matrices in descending-slope labelling."""
    L = _lam(lam)
    n = L.shape[0]
    p2, p3, p4 = (np.zeros((n, n), dtype=L.dtype) for _ in range(3))
    for j in range(n):
        for k in range(j + 1, n):
            p2[j, k] = p2[k, j] = p2_offdiag(L, j, k)
            p3[j, k] = p3_offdiag(L, j, k)
            p3[k, j] = -p3[j, k]
            p4[j, k] = p4[k, j] = p4_offdiag(L, j, k)
    for j in range(n):
        p2[j, j] = -p2[j].sum()
        p4[j, j] = -p4[j].sum()
    return SeriesCoefficients(n, p2, p3, p4)


def series_coefficients(model: MlzModel) -> SeriesCoefficients:
    """Coefficients for a model in its own level order."""
    srt, order = reorder_descending(model)
    c = series_matrix(lambda_matrix(srt))
    return SeriesCoefficients(
        c.n, unsort_matrix(c.p2, order), unsort_matrix(c.p3, order), unsort_matrix(c.p4, order)
    )


def evaluate_at(coeffs: SeriesCoefficients, g: float) -> NDArray[np.float64]:
    """Truncated series at ``g``. Not clamped: large ``g`` can leave [0, 1]."""
    g2 = g * g
    return np.eye(coeffs.n) + coeffs.p2 * g2 + coeffs.p3 * (g2 * g) + coeffs.p4 * (g2 * g2)


def be_formula(model: MlzModel) -> tuple[Callable[[float], float], Callable[[float], float]]:
    """Exact survival probabilities of the largest- and smallest-slope levels."""
    srt, _ = reorder_descending(model)
    L = lambda_matrix(srt).values
    top = float(np.sum(L[0] ** 2))
    bottom = float(np.sum(L[:, -1] ** 2))

    def p_top(g: float) -> float:
        return math.exp(-2 * g * g * top)

    def p_bottom(g: float) -> float:
        return math.exp(-2 * g * g * bottom)

    return p_top, p_bottom


def lz_exact(lambda12: float, g: float) -> NDArray[np.float64]:
    """Two-level Landau-Zener transition matrix."""
    x = -2 * (g * lambda12) ** 2
    stay, flip = math.exp(x), -math.expm1(x)
    return np.array([[stay, flip], [flip, stay]])

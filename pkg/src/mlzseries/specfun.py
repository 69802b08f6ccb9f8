"""Special functions behind the closed-form coefficients.

Fresnel integrals, the branch-fixed square root ``sqrt(-i b)``, a principal
arctangent with an explicit rule for points on its cuts, the off-resonant
triple integral ``Q`` (closed form and an independent quadrature), and the
finite resonant limit ``R``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath
import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import fresnel as _scipy_fresnel

from .errors import (
    BranchPointError,
    ConvergenceFailure,
    DomainError,
    NotResonant,
    ResonantInput,
)
from .model import LambdaMatrix

__all__ = [
    "fresnel_c",
    "fresnel_s",
    "phase_integral",
    "phase_integral_limit",
    "branch_sqrt",
    "principal_arctan",
    "QTriple",
    "q_closed_form",
    "q_quadrature",
    "resonant_r",
]

_SQRT_PI = math.sqrt(math.pi)


def _check_nonneg(x: ArrayLike) -> NDArray:
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise DomainError("Fresnel integrals are defined here for x >= 0 only")
    return x


def _scalar_or_array(v: NDArray):
    return float(v) if v.ndim == 0 else v


def fresnel_c(x: ArrayLike):
    """``C(x) = int_0^x cos(pi t^2 / 2) dt`` for ``x >= 0``."""
    s, c = _scipy_fresnel(_check_nonneg(x))
    return _scalar_or_array(np.asarray(c))


def fresnel_s(x: ArrayLike):
    """``S(x) = int_0^x sin(pi t^2 / 2) dt`` for ``x >= 0``."""
    s, c = _scipy_fresnel(_check_nonneg(x))
    return _scalar_or_array(np.asarray(s))


def phase_integral(w: float, s: ArrayLike) -> NDArray[np.complex128]:
    """``int_0^s exp(i w u^2) du`` for real ``w != 0`` and ``s >= 0``."""
    s = np.asarray(s, dtype=float)
    aw = abs(w)
    x = s * math.sqrt(2 * aw / math.pi)
    fs, fc = _scipy_fresnel(x)
    return math.sqrt(math.pi / (2 * aw)) * (fc + 1j * math.copysign(1.0, w) * fs)


def phase_integral_limit(w: float) -> complex:
    """``int_0^inf exp(i w u^2) du = sqrt(pi / (4|w|)) exp(i pi sgn(w) / 4)``."""
    r = math.sqrt(math.pi / (8 * abs(w)))
    return complex(r, math.copysign(r, w))


def branch_sqrt(b: float) -> complex:
    """``sqrt(-i b) = sqrt|b| exp(-i pi sgn(b) / 4)``, cut just below the negative axis."""
    b = float(b)
    if b == 0 or not math.isfinite(b):
        raise DomainError(f"branch_sqrt needs a finite nonzero argument, got {b!r}")
    r = math.sqrt(abs(b) / 2)
    return complex(r, -math.copysign(r, b))


def principal_arctan(z: complex) -> complex:
    """Principal arctangent, cuts on the imaginary axis beyond ``+-i``.

    A point exactly on a cut takes the counterclockwise-continuous value, so
    ``Re Arctan(iy)`` is ``+pi/2`` for ``y > 1`` and ``-pi/2`` for ``y < -1``.
    """
    z = complex(z)
    x, y = z.real, z.imag
    if x == 0 and abs(y) == 1:
        raise BranchPointError(f"Arctan has a branch point at {z!r}")
    if x == 0 and abs(y) > 1:
        re = math.copysign(math.pi / 2, y)
        # (1/4) log(((y+1)/(y-1))^2) == atanh(1/y) for |y| > 1
        return complex(re, math.atanh(1.0 / y))
    return complex(np.arctan(z))


@dataclass(frozen=True)
class QTriple:
    """Parameters of ``Q = int_0^inf e^{i a s^2} F_b(s) F_c(s) ds``.

    ``alpha = b_lp / 2``, ``beta = b_jl / 2``, ``gamma = b_pk / 2``. The
    ``resonant`` flag is set by an exact test, or by index coincidence when
    built with :meth:`from_indices`.
    """

    alpha: float
    beta: float
    gamma: float
    resonant: bool = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        a, b, c = float(self.alpha), float(self.beta), float(self.gamma)
        if not all(math.isfinite(v) for v in (a, b, c)):
            raise DomainError("QTriple entries must be finite")
        if a == 0 or b == 0 or c == 0:
            raise DomainError(f"QTriple entries must be nonzero, got ({a!r}, {b!r}, {c!r})")
        if not a + b + c > 0:
            raise DomainError(f"QTriple needs alpha + beta + gamma > 0, got {a + b + c!r}")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)
        object.__setattr__(self, "gamma", c)
        if self.resonant is None:
            object.__setattr__(self, "resonant", a + b == 0 or a + c == 0)

    @property
    def omega(self) -> float:
        return self.alpha + self.beta + self.gamma

    @classmethod
    def from_indices(cls, slopes: ArrayLike, j: int, k: int, l: int, p: int) -> "QTriple":
        b = np.asarray(slopes, dtype=float)
        return cls(
            (b[l] - b[p]) / 2,
            (b[j] - b[l]) / 2,
            (b[p] - b[k]) / 2,
            resonant=(p == j or l == k),
        )


def _sgn(x: float) -> int:
    return 1 if x > 0 else -1


def q_closed_form(t: QTriple) -> complex:
    """Closed form of the off-resonant ``Q`` integral."""
    if t.resonant:
        raise ResonantInput(
            "Q diverges when alpha + beta = 0 or alpha + gamma = 0 (resonance condition); "
            "use resonant_r for the finite physical combination"
        )
    a, b, c = t.alpha, t.beta, t.gamma
    om = t.omega
    pre = _SQRT_PI / (4 * branch_sqrt(a) * branch_sqrt(b) * branch_sqrt(c))
    # The arctan argument z has z^2 = b c / (a om) real. Its phase is an exact
    # multiple of pi/2; building it from the modulus keeps it on the axis
    # instead of a rounding error off the cut.
    mod = math.sqrt(abs(b * c / (a * om)))
    m = -(_sgn(b) + _sgn(c) - _sgn(a) - 1) // 2
    z = mod * (1, 1j, -1, -1j)[m % 4]
    theta = math.pi if (a < 0 and a + b > 0 and a + c > 0) else 0.0
    return complex(pre * (theta + principal_arctan(z)))


# ---------------------------------------------------------------------------
# quadrature oracle

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def _tail_moment(om: float, m: int, T: float) -> complex:
    """``int_T^inf exp(i om s^2) s^-m ds = T^(1-m)/2 E_{(m+1)/2}(-i om T^2)``."""
    return complex(0.5 * T ** (1 - m) * mpmath.expint((m + 1) / 2, -1j * om * T * T))


def _asym_terms(w: float) -> list[tuple[int, complex]]:
    # F_w(s) = F_w(inf) - e^{i w s^2} (i/(2ws) + 1/(4w^2 s^3) - 3i/(8w^3 s^5) + ...)
    return [(1, 0.5j / w), (3, 0.25 / (w * w)), (5, -0.375j / w**3)]


def _q_truncated(a: float, b: float, c: float, U: float) -> complex:
    """Gauss panels on ``s in [0, sqrt U]`` plus an asymptotic tail beyond."""
    fmax = max(abs(a), abs(b), abs(c), abs(a + b), abs(a + c), abs(a + b + c))
    du = 0.5 / fmax
    k = int(math.ceil(U / du))
    sb = np.sqrt(np.linspace(0.0, U, k + 1))
    lo, hi = sb[:-1, None], sb[1:, None]
    s = 0.5 * (lo + hi) + 0.5 * (hi - lo) * _GL_X
    ws = 0.5 * (hi - lo) * _GL_W
    f = np.exp(1j * a * s * s) * phase_integral(b, s) * phase_integral(c, s)
    head = complex(np.sum(f * ws))

    T = float(sb[-1])
    fb, fc = phase_integral_limit(b), phase_integral_limit(c)
    gb, gc = _asym_terms(b), _asym_terms(c)
    tail = fb * fc * _tail_moment(a, 0, T)
    for m, coef in gb:
        tail -= fc * coef * _tail_moment(a + b, m, T)
    for m, coef in gc:
        tail -= fb * coef * _tail_moment(a + c, m, T)
    for m1, c1 in gb:
        for m2, c2 in gc:
            if m1 + m2 <= 6:
                tail += c1 * c2 * _tail_moment(a + b + c, m1 + m2, T)
    return head + tail


def q_quadrature(t: QTriple, tol: float = 1e-8, max_points: int = 4_000_000) -> complex:
    """Evaluate ``Q`` numerically, independent of the closed form.

    The outer integral runs on Gauss panels uniform in ``u = s^2`` (so each
    panel spans a fixed fraction of a local period). Beyond the cutoff the
    inner integrals are replaced by their large-``s`` expansions and the
    remaining oscillatory moments are integrated exactly with generalized
    exponential integrals. The cutoff doubles until two estimates agree to
    ``tol``.
    """
    if t.resonant:
        raise ResonantInput("Q diverges under the resonance condition (alpha + beta = 0 or alpha + gamma = 0)")
    if not tol > 0:
        raise DomainError("tol must be positive")
    a, b, c = t.alpha, *sorted((t.beta, t.gamma))  # beta <-> gamma gives bit-identical results
    fmin = min(abs(a), abs(b), abs(c), abs(a + b), abs(a + c), t.omega)
    fmax = max(abs(a), abs(b), abs(c), abs(a + b), abs(a + c), t.omega)
    U = 40.0 / fmin
    prev = _q_truncated(a, b, c, U)
    change = math.inf
    while True:
        U *= 2
        if U * 2 * fmax * len(_GL_X) > max_points:
            raise ConvergenceFailure(
                f"Q quadrature did not reach tol={tol:g} within {max_points} points "
                f"(last change {change:.3g})"
            )
        cur = _q_truncated(a, b, c, U)
        change = abs(cur - prev)
        if change < tol:
            return cur
        prev = cur


# ---------------------------------------------------------------------------
# resonant limit


def resonant_r(lam: LambdaMatrix | ArrayLike, slopes: ArrayLike, j: int, k: int, l: int, p: int) -> float:
    """Finite limit ``R`` of a resonant fourth-order term (0-based indices)."""
    L = lam.values if isinstance(lam, LambdaMatrix) else np.asarray(lam, dtype=float)
    b = np.asarray(slopes, dtype=float)
    if p == j and l == k:
        return 0.0
    if p == j:
        return float(np.sign(b[l] - b[k]) * L[j, k] ** 2 * L[j, l] ** 2)
    if l == k:
        return float(np.sign(b[j] - b[p]) * L[j, k] ** 2 * L[p, k] ** 2)
    raise NotResonant(f"(j,k,l,p)=({j},{k},{l},{p}) is not resonant: need p == j or l == k")

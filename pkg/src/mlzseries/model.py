"""One-crossing multistate Landau-Zener model instances.

A model is the Hamiltonian ``H(t) = diag(b_1 t, ..., b_N t) + g A`` with
constant real symmetric couplings ``A`` (zero diagonal) and distinct slopes
``b_j``. Levels are stored in the order the user gave them; consumers that
need the descending-slope labelling call :func:`reorder_descending` and map
their results back.

Slopes are compared exactly. Near-degenerate slopes are accepted, but every
``lambda_jk`` grows like ``|b_j - b_k|**-0.5`` as the two slopes approach each
other, and the perturbative coefficients grow with it.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import (
    AsymmetricCoupling,
    DimensionMismatch,
    DuplicateSlope,
    ModelError,
    NonzeroDiagonal,
    ParseError,
)

__all__ = [
    "MlzModel",
    "LambdaMatrix",
    "new_model",
    "reorder_descending",
    "lambda_matrix",
    "parse_model_file",
    "serialize_model",
    "load_model",
    "couplings_from_upper",
    "upper_triangle",
    "model_hash",
]


def _frozen(a: NDArray) -> NDArray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MlzModel:
    """Validated one-crossing MLZ model. Build it with :func:`new_model`."""

    slopes: NDArray[np.float64]
    couplings: NDArray[np.float64]
    g: float = 1.0
    label: str = ""

    @property
    def n(self) -> int:
        return len(self.slopes)

    @property
    def is_descending(self) -> bool:
        return bool(np.all(np.diff(self.slopes) < 0))

    def hamiltonian(self, t: float, g: float | None = None) -> NDArray[np.float64]:
        g = self.g if g is None else g
        return np.diag(self.slopes * t) + g * self.couplings

    def with_g(self, g: float) -> "MlzModel":
        return MlzModel(self.slopes, self.couplings, float(g), self.label)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MlzModel):
            return NotImplemented
        return (
            np.array_equal(self.slopes, other.slopes)
            and np.array_equal(self.couplings, other.couplings)
            and self.g == other.g
            and self.label == other.label
        )

    def __hash__(self) -> int:
        return hash((self.slopes.tobytes(), self.couplings.tobytes(), self.g, self.label))

    def __repr__(self) -> str:
        return (
            f"MlzModel(n={self.n}, slopes={self.slopes.tolist()}, "
            f"couplings={upper_triangle(self.couplings).tolist()}, g={self.g!r}, label={self.label!r})"
        )


@dataclass(frozen=True, eq=False)
class LambdaMatrix:
    """Dimensionless couplings ``lambda_jk = A_jk sqrt(pi / |b_j - b_k|)``."""

    values: NDArray[np.float64] = field(repr=True)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, jk):
        return self.values[jk]


def new_model(
    slopes: ArrayLike, couplings: ArrayLike, g: float = 1.0, label: str = ""
) -> MlzModel:
    """Validate inputs and build a model. Level order is kept as given."""
    b = np.asarray(slopes, dtype=float)
    a = np.asarray(couplings, dtype=float)
    if b.ndim != 1:
        raise DimensionMismatch(f"slopes must be a flat list, got shape {b.shape}")
    n = b.size
    if n < 2:
        raise ModelError(f"a model needs at least 2 levels, got {n}")
    if a.shape != (n, n):
        raise DimensionMismatch(f"couplings must be {n}x{n} to match {n} slopes, got shape {a.shape}")
    if not (np.all(np.isfinite(b)) and np.all(np.isfinite(a)) and math.isfinite(g)):
        raise ModelError("slopes, couplings and g must be finite")
    for j in range(n):
        for k in range(j + 1, n):
            if b[j] == b[k]:
                raise DuplicateSlope(f"levels {j + 1} and {k + 1} share slope {b[j]!r}")
    if not np.array_equal(a, a.T):
        j, k = np.argwhere(a != a.T)[0]
        raise AsymmetricCoupling(f"A[{j + 1},{k + 1}]={a[j, k]!r} differs from A[{k + 1},{j + 1}]={a[k, j]!r}")
    if np.any(np.diag(a) != 0):
        j = int(np.flatnonzero(np.diag(a))[0])
        raise NonzeroDiagonal(f"A[{j + 1},{j + 1}]={a[j, j]!r}; diagonal couplings must be zero")
    return MlzModel(_frozen(b), _frozen(a), float(g), str(label))


def reorder_descending(model: MlzModel) -> tuple[MlzModel, NDArray[np.intp]]:
    """Relabel levels so slopes strictly decrease.

    Returns the relabelled model and ``order``, where sorted level ``i`` is
    original level ``order[i]``. Quantities computed on the sorted model map
    back with ``X_orig[np.ix_(order, order)] = X_sorted``.
    """
    order = np.argsort(-model.slopes, kind="stable")
    b = model.slopes[order]
    if np.any(np.diff(b) == 0):
        raise DuplicateSlope("two levels share a slope")
    a = model.couplings[np.ix_(order, order)]
    return MlzModel(_frozen(b), _frozen(a), model.g, model.label), order


def unsort_matrix(x: NDArray, order: NDArray[np.intp]) -> NDArray:
    """Map a matrix computed in sorted labelling back to the original labels."""
    out = np.empty_like(x)
    out[np.ix_(order, order)] = x
    return out


def lambda_matrix(model: MlzModel) -> LambdaMatrix:
    b = model.slopes
    diff = np.abs(b[:, None] - b[None, :])
    np.fill_diagonal(diff, 1.0)
    lam = model.couplings * np.sqrt(math.pi / diff)
    np.fill_diagonal(lam, 0.0)
    # |b_j - b_k| is symmetric bit-for-bit, so lam is too
    return LambdaMatrix(_frozen(lam))


def upper_triangle(a: NDArray) -> NDArray:
    return a[np.triu_indices(a.shape[0], 1)]


def couplings_from_upper(n: int, values: ArrayLike) -> NDArray[np.float64]:
    """Symmetric zero-diagonal matrix from row-major ``(j, k)``, ``j < k`` entries."""
    v = np.asarray(values, dtype=float)
    need = n * (n - 1) // 2
    if v.shape != (need,):
        raise DimensionMismatch(f"{n} levels need {need} upper-triangle couplings, got {v.size}")
    a = np.zeros((n, n))
    a[np.triu_indices(n, 1)] = v
    return a + a.T


# ---------------------------------------------------------------------------
# model file format (docs/model-format.md)

_KEYS = ("label", "n", "slopes", "couplings", "g")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_NUMBER = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")


class _Reader:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def where(self, pos: int | None = None) -> tuple[int, int]:
        pos = self.pos if pos is None else pos
        line = self.text.count("\n", 0, pos) + 1
        col = pos - (self.text.rfind("\n", 0, pos) + 1) + 1
        return line, col

    def fail(self, msg: str, pos: int | None = None):
        raise ParseError(msg, *self.where(pos))

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def skip_inline(self) -> None:
        """Skip spaces, tabs and a trailing comment, stopping at newline."""
        t = self.text
        while self.pos < len(t):
            c = t[self.pos]
            if c in " \t\r":
                self.pos += 1
            elif c == "#":
                while self.pos < len(t) and t[self.pos] != "\n":
                    self.pos += 1
            else:
                break

    def skip_all(self) -> None:
        while True:
            self.skip_inline()
            if self.peek() == "\n":
                self.pos += 1
            else:
                return

    def number(self) -> float:
        m = _NUMBER.match(self.text, self.pos)
        if not m:
            self.fail("expected a number")
        self.pos = m.end()
        return float(m.group())

    def string(self) -> str:
        start = self.pos
        i = self.pos + 1
        t = self.text
        while i < len(t) and t[i] != '"':
            if t[i] == "\n":
                break
            i += 2 if t[i] == "\\" else 1
        if i >= len(t) or t[i] != '"':
            self.fail("unterminated string", start)
        try:
            value = json.loads(t[start : i + 1])
        except json.JSONDecodeError as exc:
            self.fail(f"bad string escape ({exc.msg})", start)
        self.pos = i + 1
        return value

    def array(self) -> list[float]:
        self.pos += 1  # '['
        items: list[float] = []
        while True:
            self.skip_all()
            if self.peek() == "]":
                self.pos += 1
                return items
            if not self.peek():
                self.fail("unterminated list")
            items.append(self.number())
            self.skip_all()
            c = self.peek()
            if c == ",":
                self.pos += 1
            elif c != "]":
                self.fail("expected ',' or ']' in list")

    def value(self):
        c = self.peek()
        if c == '"':
            return self.string()
        if c == "[":
            return self.array()
        return self.number()


def _parse_entries(text: str) -> dict[str, tuple[object, int]]:
    r = _Reader(text)
    entries: dict[str, tuple[object, int]] = {}
    while True:
        r.skip_all()
        if not r.peek():
            return entries
        key_pos = r.pos
        m = _IDENT.match(text, r.pos)
        if not m:
            r.fail("expected a key")
        key = m.group()
        if key not in _KEYS:
            r.fail(f"unknown key {key!r}")
        if key in entries:
            r.fail(f"duplicate key {key!r}")
        r.pos = m.end()
        r.skip_inline()
        if r.peek() != "=":
            r.fail("expected '='")
        r.pos += 1
        r.skip_inline()
        entries[key] = (r.value(), key_pos)
        r.skip_inline()
        if r.peek() not in ("\n", ""):
            r.fail("unexpected text after value")


def parse_model_file(text: str) -> MlzModel:
    """Parse the key-value model format into a validated model."""
    entries = _parse_entries(text)
    reader = _Reader(text)

    def get(key, kind):
        if key not in entries:
            return None
        value, pos = entries[key]
        ok = {
            "list": isinstance(value, list),
            "str": isinstance(value, str),
            "num": isinstance(value, float),
        }[kind]
        if not ok:
            reader.fail(f"{key!r} has the wrong type", pos)
        return value

    for key in ("n", "slopes", "couplings"):
        if key not in entries:
            raise ParseError(f"missing required key {key!r}", reader.where(len(text))[0], 1)
    n_val = get("n", "num")
    n_pos = entries["n"][1]
    if n_val != int(n_val):
        reader.fail("'n' must be an integer", n_pos)
    n = int(n_val)
    slopes = get("slopes", "list")
    if len(slopes) != n:
        raise DimensionMismatch(f"n = {n} but {len(slopes)} slopes given")
    couplings = couplings_from_upper(n, get("couplings", "list")) if n >= 2 else np.zeros((n, n))
    g = get("g", "num")
    label = get("label", "str")
    return new_model(slopes, couplings, 1.0 if g is None else g, label or "")


def _fmt(x: float) -> str:
    return repr(float(x))


def serialize_model(model: MlzModel) -> str:
    """Canonical text form; ``parse_model_file`` inverts it exactly."""
    lines = []
    if model.label:
        lines.append(f"label = {json.dumps(model.label, ensure_ascii=False)}")
    lines.append(f"n = {model.n}")
    lines.append("slopes = [" + ", ".join(_fmt(x) for x in model.slopes) + "]")
    lines.append("couplings = [" + ", ".join(_fmt(x) for x in upper_triangle(model.couplings)) + "]")
    lines.append(f"g = {_fmt(model.g)}")
    return "\n".join(lines) + "\n"


def load_model(path) -> MlzModel:
    with open(path, encoding="utf-8") as fh:
        return parse_model_file(fh.read())


def model_hash(model: MlzModel) -> str:
    return hashlib.sha256(serialize_model(model).encode("utf-8")).hexdigest()

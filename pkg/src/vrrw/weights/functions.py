"""Weight sequences w(n) and their text grammar.

A weight sequence is a positive sequence ``w(0), w(1), ...`` extended to the
non-negative reals by ``w(t) = w(floor(t))``.  Each family below knows how
to evaluate itself (vectorised), how to integrate the continuous version of
``1/w`` where that is available in closed form (used for Euler-Maclaurin
tails of the prefix sums), and how to describe itself to the compiled
simulation kernels.

Grammar (one token, no spaces)::

    const:<v>                 w(n) = v
    linear:<slope>,<offset>   w(n) = slope*n + offset
    poly:<p>,<offset>         w(n) = (n + offset)**p
    nlogn:<offset>            w(n) = (n + offset) * log(n + offset + 1)
    nloglog:<c>,<offset>      w(n) = c * (n + offset) * log(log(n + offset))
    factorial-step            w(x) = (m!)**2 on [((m-1)!)**2, (m!)**2)
    table:<path>              one positive decimal per line, constant tail

Any of these may carry a trailing ``*<lambda>`` which multiplies the whole
sequence by ``lambda`` (the walk law is unchanged, the W-scale is not).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import ClassVar

import numpy as np
from scipy.special import exp1, expi

__all__ = [
    "ParseError",
    "WeightFunction",
    "Constant",
    "Linear",
    "Poly",
    "NLogN",
    "NLogLogN",
    "FactorialStep",
    "Table",
    "eval_w",
    "parse_weight_spec",
    "format_weight_spec",
]

# kernel codes understood by the numba evaluators in vrrw._kernels
KIND_CONST, KIND_LINEAR, KIND_POLY, KIND_NLOGN, KIND_NLOGLOG, KIND_FACTORIAL, KIND_TABLE = range(7)

# (m!)**2 for m = 0..20; (20!)**2 ~ 5.9e36 is beyond any reachable local time
_FACTORIAL_SQUARES = np.array([float(math.factorial(m)) ** 2 for m in range(21)])


class ParseError(ValueError):
    """Malformed weight spec.  ``position`` is the 0-based character offset."""

    def __init__(self, text: str, position: int, expected: str):
        self.text = text
        self.position = position
        self.expected = expected
        super().__init__(f"{text!r}: at position {position}: expected {expected}")


def _fmt(x: float) -> str:
    r = repr(float(x))
    return r[:-2] if r.endswith(".0") else r


@dataclass(frozen=True)
class WeightFunction:
    """Base class.  Subclasses set ``code``/``name`` and implement ``_raw``."""

    code: ClassVar[int] = -1
    name: ClassVar[str] = ""

    scale: float = field(default=1.0, kw_only=True)

    # -- evaluation -------------------------------------------------------
    def _raw(self, n: np.ndarray) -> np.ndarray:  # n: float array of integers
        raise NotImplementedError

    def __call__(self, t):
        """w(floor(t)); accepts scalars or arrays."""
        arr = np.floor(np.asarray(t, dtype=float))
        if np.any(arr < 0):
            raise ValueError("weight functions are defined on t >= 0")
        out = self.scale * self._raw(arr)
        return float(out) if np.ndim(out) == 0 else out

    def continuous(self, x):
        """Smooth version of w used for tail integrals (no floor)."""
        return self.scale * self._raw(np.asarray(x, dtype=float))

    # -- analytic facts ---------------------------------------------------
    @property
    def sum_diverges(self) -> bool:
        """Whether sum 1/w(n) is infinite (W unbounded)."""
        return True

    @property
    def square_sum_finite(self) -> bool:
        """Whether sum 1/w(n)**2 is finite."""
        return True

    def antiderivative(self, x):
        """Closed-form primitive of 1/continuous(x), or None if unavailable."""
        return None

    def exact_prefix(self, k):
        """Exact sum_{j<k} 1/w(j) where a closed form exists, else None."""
        return None

    def jump_points(self, lo: float, hi: float):
        """Sparse jump locations of w in [lo, hi], or None when w jumps at every integer."""
        return None

    def is_nondecreasing(self, probe: int = 1 << 20) -> bool:
        """Check w(n+1) >= w(n) numerically for n < probe."""
        v = self(np.arange(probe + 1, dtype=float))
        return bool(np.all(np.diff(v) >= 0))

    # -- plumbing ---------------------------------------------------------
    def kernel_params(self):
        """(kind, a, b, scale, aux) as consumed by the compiled evaluators."""
        raise NotImplementedError

    def scaled(self, lam: float) -> "WeightFunction":
        from dataclasses import replace

        return replace(self, scale=self.scale * float(lam))

    def _body(self) -> str:
        raise NotImplementedError

    @property
    def spec(self) -> str:
        """Canonical grammar string."""
        body = self._body()
        return body if self.scale == 1.0 else f"{body}*{_fmt(self.scale)}"

    def __str__(self) -> str:
        return self.spec


@dataclass(frozen=True)
class Constant(WeightFunction):
    code: ClassVar[int] = KIND_CONST
    name: ClassVar[str] = "const"
    value: float = 1.0

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError("const weight must be positive")

    def _raw(self, n):
        return np.full_like(n, self.value, dtype=float)

    @property
    def square_sum_finite(self):
        return False

    def antiderivative(self, x):
        return np.asarray(x, dtype=float) / (self.scale * self.value)

    def exact_prefix(self, k):
        return np.asarray(k, dtype=float) / (self.scale * self.value)

    def jump_points(self, lo, hi):
        return np.empty(0)

    def is_nondecreasing(self, probe=0):
        return True

    def kernel_params(self):
        return KIND_CONST, self.value, 0.0, self.scale, np.zeros(1)

    def _body(self):
        return f"const:{_fmt(self.value)}"


@dataclass(frozen=True)
class Linear(WeightFunction):
    code: ClassVar[int] = KIND_LINEAR
    name: ClassVar[str] = "linear"
    slope: float = 1.0
    offset: float = 1.0

    def __post_init__(self):
        if self.slope < 0 or not self.offset > 0:
            raise ValueError("linear weight needs slope >= 0 and offset > 0")

    def _raw(self, n):
        return self.slope * n + self.offset

    @property
    def square_sum_finite(self):
        return self.slope > 0

    def antiderivative(self, x):
        x = np.asarray(x, dtype=float)
        if self.slope == 0:
            return x / (self.scale * self.offset)
        return np.log(self.slope * x + self.offset) / (self.scale * self.slope)

    def is_nondecreasing(self, probe=0):
        return True

    def kernel_params(self):
        return KIND_LINEAR, self.slope, self.offset, self.scale, np.zeros(1)

    def _body(self):
        return f"linear:{_fmt(self.slope)},{_fmt(self.offset)}"


@dataclass(frozen=True)
class Poly(WeightFunction):
    code: ClassVar[int] = KIND_POLY
    name: ClassVar[str] = "poly"
    exponent: float = 1.0
    offset: float = 1.0

    def __post_init__(self):
        if not self.offset > 0:
            raise ValueError("poly weight needs offset > 0")

    def _raw(self, n):
        return (n + self.offset) ** self.exponent

    @property
    def sum_diverges(self):
        return self.exponent <= 1

    @property
    def square_sum_finite(self):
        return self.exponent > 0.5

    def antiderivative(self, x):
        x = np.asarray(x, dtype=float) + self.offset
        p = self.exponent
        if p == 1:
            return np.log(x) / self.scale
        return x ** (1.0 - p) / ((1.0 - p) * self.scale)

    def is_nondecreasing(self, probe=0):
        return self.exponent >= 0

    def kernel_params(self):
        return KIND_POLY, self.exponent, self.offset, self.scale, np.zeros(1)

    def _body(self):
        return f"poly:{_fmt(self.exponent)},{_fmt(self.offset)}"


@dataclass(frozen=True)
class NLogN(WeightFunction):
    code: ClassVar[int] = KIND_NLOGN
    name: ClassVar[str] = "nlogn"
    offset: float = 1.0

    def __post_init__(self):
        if not self.offset > 0:
            raise ValueError("nlogn weight needs offset > 0")

    def _raw(self, n):
        return (n + self.offset) * np.log(n + self.offset + 1.0)

    def antiderivative(self, x):
        # with s = log(x + o + 1):  d/dx [log s - sum_m E1(m s)] = 1 / ((x + o) s)
        s = np.log(np.asarray(x, dtype=float) + self.offset + 1.0)
        tail = exp1(s) + exp1(2 * s) + exp1(3 * s) + exp1(4 * s)
        return (np.log(s) - tail) / self.scale

    def is_nondecreasing(self, probe=0):
        return True

    def kernel_params(self):
        return KIND_NLOGN, self.offset, 0.0, self.scale, np.zeros(1)

    def _body(self):
        return f"nlogn:{_fmt(self.offset)}"


@dataclass(frozen=True)
class NLogLogN(WeightFunction):
    code: ClassVar[int] = KIND_NLOGLOG
    name: ClassVar[str] = "nloglog"
    coef: float = 1.0
    offset: float = 3.0

    def __post_init__(self):
        if not self.coef > 0 or not self.offset > math.e:
            raise ValueError("nloglog weight needs c > 0 and offset > e")

    def _raw(self, n):
        return self.coef * (n + self.offset) * np.log(np.log(n + self.offset))

    def antiderivative(self, x):
        # li(log(x + o)) = Ei(log log(x + o))
        return expi(np.log(np.log(np.asarray(x, dtype=float) + self.offset))) / (
            self.coef * self.scale
        )

    def is_nondecreasing(self, probe=0):
        return True

    def kernel_params(self):
        return KIND_NLOGLOG, self.coef, self.offset, self.scale, np.zeros(1)

    def _body(self):
        return f"nloglog:{_fmt(self.coef)},{_fmt(self.offset)}"


@dataclass(frozen=True)
class FactorialStep(WeightFunction):
    """w(x) = (m!)**2 for x in [((m-1)!)**2, (m!)**2); w(0) = 1."""

    code: ClassVar[int] = KIND_FACTORIAL
    name: ClassVar[str] = "factorial-step"

    def _raw(self, n):
        # index of the first (m!)**2 strictly greater than n
        m = np.searchsorted(_FACTORIAL_SQUARES, n, side="right")
        return _FACTORIAL_SQUARES[np.minimum(m, len(_FACTORIAL_SQUARES) - 1)]

    def continuous(self, x):
        return self.scale * self._raw(np.floor(np.asarray(x, dtype=float)))

    def exact_prefix(self, k):
        k = np.asarray(k, dtype=float)
        out = np.zeros_like(k)
        lo = 0.0
        for m in range(1, len(_FACTORIAL_SQUARES)):
            hi = _FACTORIAL_SQUARES[m]
            v = _FACTORIAL_SQUARES[m]
            out += np.clip(k - lo, 0.0, hi - lo) / v
            lo = hi
        return out / self.scale

    def jump_points(self, lo, hi):
        pts = _FACTORIAL_SQUARES[1:]
        return pts[(pts >= lo) & (pts <= hi)]

    def is_nondecreasing(self, probe=0):
        return True

    def kernel_params(self):
        return KIND_FACTORIAL, 0.0, 0.0, self.scale, _FACTORIAL_SQUARES.copy()

    def _body(self):
        return "factorial-step"


@dataclass(frozen=True)
class Table(WeightFunction):
    """Finite list of weights, extended by its last value."""

    code: ClassVar[int] = KIND_TABLE
    name: ClassVar[str] = "table"
    values: tuple = (1.0,)
    path: str | None = None

    def __post_init__(self):
        if len(self.values) == 0 or min(self.values) <= 0:
            raise ValueError("table weights must be a non-empty list of positive numbers")

    @classmethod
    def from_file(cls, path, scale: float = 1.0) -> "Table":
        vals = [float(line) for line in Path(path).read_text().split() if line.strip()]
        return cls(values=tuple(vals), path=str(path), scale=scale)

    def _raw(self, n):
        arr = np.asarray(self.values, dtype=float)
        return arr[np.minimum(n, len(arr) - 1).astype(np.int64)]

    @property
    def square_sum_finite(self):
        return False

    def exact_prefix(self, k):
        arr = np.asarray(self.values, dtype=float)
        cum = np.concatenate([[0.0], np.cumsum(1.0 / arr)])
        k = np.asarray(k, dtype=float)
        head = cum[np.minimum(k, len(arr)).astype(np.int64)]
        return (head + np.maximum(k - len(arr), 0.0) / arr[-1]) / self.scale

    def jump_points(self, lo, hi):
        arr = np.asarray(self.values, dtype=float)
        idx = np.nonzero(np.diff(arr))[0] + 1.0
        return idx[(idx >= lo) & (idx <= hi)]

    def is_nondecreasing(self, probe=0):
        return bool(np.all(np.diff(np.asarray(self.values)) >= 0))

    @property
    def min_weight(self) -> float:
        return min(self.values) * self.scale

    def kernel_params(self):
        return KIND_TABLE, 0.0, 0.0, self.scale, np.asarray(self.values, dtype=float)

    def _body(self):
        return f"table:{self.path}" if self.path else "table:<inline>"


def eval_w(wf: WeightFunction, t: float) -> float:
    """w(floor(t)) for a scalar t >= 0."""
    if t < 0:
        raise ValueError("t must be non-negative")
    return wf(t)


# ---------------------------------------------------------------------------
# grammar

_NUM = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_ARITY = {"const": 1, "linear": 2, "poly": 2, "nlogn": 1, "nloglog": 2}


def _numbers(text: str, pos: int, count: int) -> list[float]:
    out = []
    for i in range(count):
        m = _NUM.match(text, pos)
        if not m:
            raise ParseError(text, pos, "a number")
        out.append(float(m.group()))
        pos = m.end()
        if i < count - 1:
            if pos >= len(text) or text[pos] != ",":
                raise ParseError(text, pos, "','")
            pos += 1
    if pos != len(text):
        raise ParseError(text, pos, "end of spec")
    return out


def parse_weight_spec(text: str) -> WeightFunction:
    """Parse the weight grammar into a :class:`WeightFunction`.

    >>> parse_weight_spec("linear:1,1")(3)
    4.0
    """
    s = text.strip()
    scale = 1.0
    star = s.rfind("*")
    if star >= 0:
        m = _NUM.fullmatch(s, star + 1)
        if not m:
            raise ParseError(text, star + 1, "a number after '*'")
        scale = float(m.group())
        if not scale > 0:
            raise ParseError(text, star + 1, "a positive scale")
        s = s[:star]
    if s == "factorial-step":
        return FactorialStep(scale=scale)
    colon = s.find(":")
    if colon < 0:
        raise ParseError(text, len(s), "':' after family name")
    fam = s[:colon]
    if fam == "table":
        path = s[colon + 1 :]
        if not path:
            raise ParseError(text, colon + 1, "a file path")
        try:
            return Table.from_file(path, scale=scale)
        except OSError as exc:
            raise ParseError(text, colon + 1, f"a readable file ({exc.strerror})") from None
        except ValueError:
            raise ParseError(text, colon + 1, "a file of positive decimals") from None
    if fam not in _ARITY:
        raise ParseError(text, 0, "one of const, linear, poly, nlogn, nloglog, factorial-step, table")
    args = _numbers(s, colon + 1, _ARITY[fam])
    ctor = {
        "const": lambda a: Constant(value=a[0], scale=scale),
        "linear": lambda a: Linear(slope=a[0], offset=a[1], scale=scale),
        "poly": lambda a: Poly(exponent=a[0], offset=a[1], scale=scale),
        "nlogn": lambda a: NLogN(offset=a[0], scale=scale),
        "nloglog": lambda a: NLogLogN(coef=a[0], offset=a[1], scale=scale),
    }[fam]
    try:
        return ctor(args)
    except ValueError as exc:
        raise ParseError(text, colon + 1, f"valid parameters ({exc})") from None


def format_weight_spec(wf: WeightFunction) -> str:
    return wf.spec

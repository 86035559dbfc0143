"""Prefix sums of 1/w and the piecewise-linear scale function W.

``W(t) = S_floor(t) + (t - floor(t)) / w(floor(t))`` with
``S_k = sum_{j<k} 1/w(j)``.  The table of ``S_k`` is built lazily in chunks
with Neumaier summation.  Past the memory budget the prefix sums come from
the family's closed form when it has one, otherwise from an
Euler-Maclaurin expansion of the continuous weight anchored at the end of
the table (error far below double rounding once the anchor is >= 2**16).
"""

from __future__ import annotations

import threading

import numpy as np

from .._numeric import compensated_cumsum
from .functions import WeightFunction

__all__ = ["OutOfRange", "ResourceError", "WCache", "get_cache", "big_w", "big_w_inv", "shift_u"]

_MIN_ANCHOR = 1 << 16
_EXACT_INT = float(1 << 52)
_T_CEIL = 1e306


class OutOfRange(ValueError):
    """y is not in the range of W: sum 1/w(n) converges and y >= W(infinity)."""


class ResourceError(MemoryError):
    """A table would exceed its configured budget and no tail formula exists."""


class WCache:
    """Growable compensated prefix-sum table for one weight function.

    Reads of published entries are lock-free; extension is serialized.
    """

    def __init__(self, wf: WeightFunction, budget: int = 1 << 23, chunk: int = 1 << 20):
        self.wf = wf
        self.budget = int(budget)
        self.chunk = int(chunk)
        self._lock = threading.Lock()
        self._inv = np.empty(0)
        self._prefix = np.zeros(1)
        self._acc = (0.0, 0.0)
        self._sup = None

    # -- table ------------------------------------------------------------
    @property
    def length(self) -> int:
        """Number of published entries (high-water mark)."""
        return self._inv.shape[0]

    @property
    def inv_w(self) -> np.ndarray:
        """1/w(j) for j < length."""
        return self._inv

    @property
    def prefix(self) -> np.ndarray:
        """S_k for k <= length; S_0 = 0."""
        return self._prefix

    @property
    def bounded(self) -> bool:
        """True when W(infinity) is finite (the total-mass flag)."""
        return not self.wf.sum_diverges

    def ensure(self, n: int) -> bool:
        """Extend so that S_n is tabulated.  False if n is past the budget."""
        if n <= self.length:
            return True
        if n > self.budget:
            n_target = self.budget
        else:
            n_target = n
        with self._lock:
            L = self.length
            if n_target > L:
                new_len = min(self.budget, -(-n_target // self.chunk) * self.chunk)
                inv = 1.0 / self.wf(np.arange(L, new_len, dtype=float))
                pre = np.empty(new_len - L)
                s, c = compensated_cumsum(inv, self._acc[0], self._acc[1], pre)
                self._acc = (s, c)
                # publish whole arrays so concurrent readers never see a torn table
                self._inv = np.concatenate([self._inv, inv])
                self._prefix = np.concatenate([self._prefix, pre])
                self._sup = None
        return n <= self.length

    # -- prefix sums beyond the table --------------------------------------
    def _f(self, x):
        return 1.0 / self.wf.continuous(x)

    def _tail_prefix(self, k):
        """S at (possibly non-integer, possibly huge) k >= length."""
        exact = self.wf.exact_prefix(k)
        if exact is not None:
            return exact
        if self.length < _MIN_ANCHOR:
            self.ensure(_MIN_ANCHOR)
        K = float(self.length)
        F = self.wf.antiderivative
        if F(K) is None:
            raise ResourceError(f"{self.wf.spec}: argument beyond budget {self.budget} and no tail formula")
        k = np.asarray(k, dtype=float)
        fK = self._f(K)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            fk = self._f(k)
            dK = (self._f(K + 0.5) - self._f(K - 0.5))
            dk = (self._f(k + 0.5) - self._f(k - 0.5))
            dk = np.where(np.isfinite(dk), dk, 0.0)
            out = self._prefix[-1] + (F(k) - F(K)) + 0.5 * (fK - fk) + (dk - dK) / 12.0
        return out

    def prefix_at(self, k):
        """S_k for integer-valued k >= 0 (array or scalar)."""
        k = np.asarray(k, dtype=float)
        top = float(np.max(k)) if k.size else 0.0
        if top <= self.budget:
            self.ensure(int(top))
        inside = k <= self.length
        if np.all(inside):
            return self._prefix[k.astype(np.int64)]
        flat, inside = np.atleast_1d(k), np.atleast_1d(inside)
        out = np.empty_like(flat)
        out[inside] = self._prefix[flat[inside].astype(np.int64)]
        out[~inside] = self._tail_prefix(flat[~inside])
        return out.reshape(k.shape)

    def _inv_at(self, k):
        k = np.asarray(k, dtype=float)
        inside = k < self.length
        if np.all(inside):
            return self._inv[k.astype(np.int64)]
        flat, inside = np.atleast_1d(k), np.atleast_1d(inside)
        out = np.asarray(1.0 / self.wf(flat), dtype=float)
        out[inside] = self._inv[flat[inside].astype(np.int64)]
        return out.reshape(k.shape)

    @property
    def sup(self) -> float:
        """W(infinity): finite only for bounded W."""
        if not self.bounded:
            return np.inf
        if self._sup is None:
            self.ensure(max(self.budget // 8, _MIN_ANCHOR))
            exact = self.wf.exact_prefix(np.inf)
            if exact is not None:
                self._sup = float(exact)
            else:
                self._sup = float(self._tail_prefix(np.array([np.inf]))[0])
        return self._sup

    # -- W and its inverse -------------------------------------------------
    def big_w(self, t):
        """W(t) for t >= 0 (scalar or array)."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("W is defined on t >= 0")
        k = np.floor(t)
        with np.errstate(invalid="ignore"):
            out = self.prefix_at(k) + (t - k) * self._inv_at(k)
        out = np.where(np.isinf(t), self.sup, out)
        return float(out) if out.ndim == 0 else out

    def big_w_inv(self, y):
        """The unique t with W(t) = y.

        Raises OutOfRange when W is bounded and some y >= W(infinity).
        """
        y = np.asarray(y, dtype=float)
        if np.any(y < 0):
            raise ValueError("W^{-1} is defined on y >= 0")
        if self.bounded and np.any(y >= self.sup):
            raise OutOfRange(
                f"{self.wf.spec}: W is bounded by {self.sup:.12g} (sum of 1/w converges); "
                f"y = {float(np.max(y)):.12g} is not attained"
            )
        top = float(np.max(y)) if y.size else 0.0
        while top > self._prefix[-1] and self.length < self.budget:
            self.ensure(self.length + self.chunk)
        pre = self._prefix
        L = self.length
        flat = np.atleast_1d(y).ravel()
        out = np.empty_like(flat)
        inside = flat <= pre[-1]
        if np.any(inside):
            yi = flat[inside]
            k = np.searchsorted(pre, yi, side="right") - 1
            k = np.minimum(k, L - 1)
            out[inside] = k + (yi - pre[k]) / self._inv[k]
        if np.any(~inside):
            out[~inside] = self._solve_tail(flat[~inside])
        out = out.reshape(y.shape)
        return float(out) if out.ndim == 0 else out

    def _solve_tail(self, y):
        L = float(self.length)
        with np.errstate(over="ignore", invalid="ignore"):
            # bisection in log t between the table end and the float ceiling
            finite = self._tail_prefix(np.full_like(y, _T_CEIL)) >= y
            y_f = y[finite]
            lo_f = np.full_like(y_f, L)
            hi_f = np.full_like(y_f, _T_CEIL)
            for _ in range(80):
                mid = np.sqrt(lo_f) * np.sqrt(hi_f)
                below = self._tail_prefix(mid) < y_f
                lo_f = np.where(below, mid, lo_f)
                hi_f = np.where(below, hi_f, mid)
        t = 0.5 * (lo_f + hi_f)
        # exact piecewise-linear refinement where integers are representable
        small = t < _EXACT_INT
        if np.any(small):
            ts, ys = t[small], y_f[small]
            k = np.floor(ts)
            for _ in range(3):
                sk = self._tail_prefix(k)
                k = np.where(sk > ys, k - 1, k)
                sk1 = self._tail_prefix(k + 1)
                k = np.where(sk1 <= ys, k + 1, k)
            k = np.maximum(k, L)
            t[small] = k + (ys - self._tail_prefix(k)) * self.wf(k)
        out = np.full_like(y, np.inf)
        out[finite] = t
        return out

    def shift_u(self, x, alpha):
        """u(x, alpha) = W^{-1}(W(x) + alpha)."""
        alpha = np.asarray(alpha, dtype=float)
        if np.any(alpha < 0):
            raise ValueError("alpha must be non-negative")
        wx = self.big_w(x)
        res = self.big_w_inv(wx + alpha)
        # exact identity at alpha = 0 (avoid interpolation round-off)
        res = np.where(alpha == 0, np.asarray(x, dtype=float), res)
        return float(res) if np.ndim(res) == 0 else res


_REGISTRY: dict = {}
_REGISTRY_LOCK = threading.Lock()


def get_cache(wf: WeightFunction, budget: int | None = None) -> WCache:
    """Process-wide shared cache for ``wf`` (one per weight function)."""
    with _REGISTRY_LOCK:
        cache = _REGISTRY.get(wf)
        if cache is None:
            cache = WCache(wf) if budget is None else WCache(wf, budget=budget)
            _REGISTRY[wf] = cache
        return cache


def big_w(wf, cache, t):
    return (cache or get_cache(wf)).big_w(t)


def big_w_inv(wf, cache, y):
    return (cache or get_cache(wf)).big_w_inv(y)


def shift_u(wf, cache, x, alpha):
    return (cache or get_cache(wf)).shift_u(x, alpha)

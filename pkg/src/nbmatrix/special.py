"""Log-space special functions and the unsigned-Stirling-number table.

Everything downstream works in natural logs.  The one genuinely delicate
primitive is ``|s(n, l)|``, the unsigned Stirling numbers of the first kind:
the integer recurrence ``|s(n,l)| = (n-1)|s(n-1,l)| + |s(n-1,l-1)|``
overflows doubles near ``n = 170``, so we tabulate

    g(n, l) = ln|s(n, l)| - ln(n!)

row by row with a stable log-space recursion instead.
"""
from __future__ import annotations

import math
import threading

import numpy as np
from scipy.special import gammaln, polygamma, psi

__all__ = [
    "digamma",
    "trigamma",
    "tetragamma",
    "log_gamma",
    "StirlingTable",
    "stirling_log_ratio",
    "stirling_log_ratio_row",
    "stirling_log_ratio_many",
]


def digamma(x):
    """First log-gamma derivative, elementwise."""
    return psi(x)


def trigamma(x):
    """Second log-gamma derivative, elementwise."""
    return polygamma(1, x)


def tetragamma(x):
    """Third log-gamma derivative, elementwise."""
    return polygamma(2, x)


def log_gamma(x):
    """Natural log of the gamma function, elementwise."""
    return gammaln(x)


class StirlingTable:
    """Triangular table of ``g(n, l) = ln|s(n, l)| - ln(n!)``, 1 <= l <= n.

    Rows are computed on demand and are immutable once built; growth is
    serialized with a lock so one table instance can be shared by many
    threads.  Row ``n`` is derived from row ``n - 1`` via

        g(n, 1) = ln((n-1)/n) + g(n-1, 1)
        g(n, n) = g(n-1, n-1) - ln(n)
        g(n, l) = ln((n-1)/n)
                  + logaddexp(g(n-1, l), g(n-1, l-1) - ln(n-1))

    which is the overflow-free form of the integer recurrence.
    """

    def __init__(self, max_n: int = 64):
        self._lock = threading.Lock()
        first = np.zeros(1)
        first.setflags(write=False)
        self._rows = [first]  # row index n-1 holds g(n, 1..n)
        self._flat = None  # cached concatenation for vectorized gathers
        if max_n > 1:
            with self._lock:
                self._grow(max_n)

    @property
    def max_n(self) -> int:
        return len(self._rows)

    def _grow(self, up_to: int) -> None:
        # caller holds the lock
        rows = self._rows
        while len(rows) < up_to:
            n = len(rows) + 1
            prev = rows[-1]
            row = np.empty(n)
            shift = math.log(n - 1) - math.log(n)
            row[0] = shift + prev[0]
            if n > 2:
                row[1 : n - 1] = shift + np.logaddexp(
                    prev[1 : n - 1], prev[0 : n - 2] - math.log(n - 1)
                )
            row[n - 1] = prev[n - 2] - math.log(n)
            row.setflags(write=False)
            rows.append(row)
        self._flat = None

    def row(self, n: int) -> np.ndarray:
        """Return the read-only array ``[g(n, 1), ..., g(n, n)]``."""
        if n < 1:
            raise ValueError(f"Stirling row index must be >= 1, got {n}")
        if n > len(self._rows):
            with self._lock:
                self._grow(n)
        return self._rows[n - 1]

    def g(self, n: int, l: int) -> float:
        """``ln|s(n, l)| - ln(n!)``; ``-inf`` for l = 0 with n >= 1."""
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        if l == 0:
            return -math.inf
        if not 1 <= l <= n:
            raise ValueError(f"l must lie in [1, {n}], got {l}")
        return float(self.row(n)[l - 1])

    def gather(self, ns, ls) -> np.ndarray:
        """Vectorized ``g(n, l)`` lookup over paired index arrays.

        Pairs with l = 0 map to ``-inf``; any other pair outside the
        triangle raises.  Rows are concatenated once and cached so repeated
        bulk lookups (one per Gibbs iteration) stay cheap.
        """
        ns = np.asarray(ns, dtype=np.int64)
        ls = np.asarray(ls, dtype=np.int64)
        if ns.size == 0:
            return np.zeros(0)
        if np.any(ns < 1) or np.any(ls < 0) or np.any(ls > ns):
            raise ValueError("need 0 <= l <= n and n >= 1 for every pair")
        max_n = int(ns.max())
        with self._lock:
            self._grow(max_n)
            if self._flat is None or self._flat.size < max_n * (max_n + 1) // 2:
                self._flat = np.concatenate(self._rows)
            flat = self._flat
        out = np.full(ns.shape, -np.inf)
        ok = ls >= 1
        idx = (ns[ok] - 1) * ns[ok] // 2 + ls[ok] - 1
        out[ok] = flat[idx]
        return out


_DEFAULT_TABLE = StirlingTable()


def stirling_log_ratio(n: int, l: int) -> float:
    """``ln|s(n, l)| - ln(n!)`` from the process-wide memoized table."""
    return _DEFAULT_TABLE.g(n, l)


def stirling_log_ratio_row(n: int) -> np.ndarray:
    """Full row ``g(n, 1..n)`` from the process-wide memoized table."""
    return _DEFAULT_TABLE.row(n)


def stirling_log_ratio_many(ns, ls) -> np.ndarray:
    """Vectorized ``g(n, l)`` over paired arrays, from the shared table."""
    return _DEFAULT_TABLE.gather(ns, ls)

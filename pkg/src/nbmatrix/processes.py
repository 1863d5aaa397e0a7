"""The three random-count-matrix priors.

Each prior assigns a probability to an unordered J x K count matrix (with a
random number of nonzero columns), and admits two equivalent constructions:

* column-wise: a Poisson number of iid column vectors drawn at once;
* sequential: rows added one at a time, each row extending the existing
  columns and bringing a Poisson number of brand-new columns.

The gamma-Poisson prior is parameterized by mass and concentration alone;
the gamma-negative-binomial prior adds one probability parameter per row
(and is only tractable jointly with a latent table-count matrix); the
beta-negative-binomial prior adds one dispersion parameter per row.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np
from scipy.special import gammaln

from .distributions import (
    Digamma,
    bnb_log_pmf,
    digamma_log_pmf,
    log_series_log_pmf,
    nb_log_pmf,
    poisson_log_pmf,
    sumlog_log_pmf,
)
from .matrix import AugmentedMatrix, CountMatrix
from .special import digamma, stirling_log_ratio_many

__all__ = [
    "NbpParams",
    "GnbpParams",
    "BnbpParams",
    "ProcessParams",
    "MatrixDraw",
    "RowDraw",
    "log_pmf",
    "simulate_columnwise",
    "simulate_sequential",
    "sample_next_row",
    "row_increment_log_pmf",
    "new_column_rate",
    "column_count_rate",
]


def _check_positive(name, value):
    if not value > 0.0:
        raise ValueError(f"{name} must be > 0, got {value}")


# probabilities computed from parameters can round to 1.0 in extreme corners
# (e.g. concentration near float tiny); keep them drawable
_P_MAX = 1.0 - 1e-12


def _safe_p(p: float) -> float:
    return min(max(float(p), 1e-300), _P_MAX)


@dataclass(frozen=True)
class NbpParams:
    """Gamma-Poisson prior: mass gamma0 and concentration c."""

    gamma0: float
    c: float

    kind = "nbp"

    def __post_init__(self):
        _check_positive("gamma0", self.gamma0)
        _check_positive("c", self.c)

    def check_rows(self, J: int) -> None:
        pass  # no per-row parameters


@dataclass(frozen=True)
class GnbpParams:
    """Gamma-negative-binomial prior with one probability parameter per row."""

    gamma0: float
    c: float
    p: tuple

    kind = "gnbp"

    def __post_init__(self):
        _check_positive("gamma0", self.gamma0)
        _check_positive("c", self.c)
        object.__setattr__(self, "p", tuple(float(x) for x in self.p))
        if not all(0.0 < x < 1.0 for x in self.p):
            raise ValueError("all row probabilities must lie in (0, 1)")

    def q(self) -> np.ndarray:
        """Per-row exponential tilts q_j = -ln(1 - p_j)."""
        return -np.log1p(-np.asarray(self.p))

    def check_rows(self, J: int) -> None:
        if len(self.p) != J:
            raise ValueError(f"need {J} row probabilities, got {len(self.p)}")


@dataclass(frozen=True)
class BnbpParams:
    """Beta-negative-binomial prior with one dispersion parameter per row."""

    gamma0: float
    c: float
    r: tuple

    kind = "bnbp"

    def __post_init__(self):
        _check_positive("gamma0", self.gamma0)
        _check_positive("c", self.c)
        object.__setattr__(self, "r", tuple(float(x) for x in self.r))
        if not all(x > 0.0 for x in self.r):
            raise ValueError("all row dispersions must be > 0")

    def r_arr(self) -> np.ndarray:
        return np.asarray(self.r)

    def check_rows(self, J: int) -> None:
        if len(self.r) != J:
            raise ValueError(f"need {J} row dispersions, got {len(self.r)}")


ProcessParams = Union[NbpParams, GnbpParams, BnbpParams]


class MatrixDraw(NamedTuple):
    matrix: CountMatrix
    aux: Optional[AugmentedMatrix]
    kplus: Optional[tuple]  # per-row new-column counts (sequential only)


class RowDraw(NamedTuple):
    existing: np.ndarray  # counts over the K existing columns
    new_counts: np.ndarray  # one positive count per new column
    existing_tables: Optional[np.ndarray]
    new_tables: Optional[np.ndarray]


# ---------------------------------------------------------------------------
# exact log-PMFs
# ---------------------------------------------------------------------------

def column_count_rate(params: ProcessParams, J: int) -> float:
    """Poisson rate of the number of columns after J rows."""
    g0, c = params.gamma0, params.c
    if isinstance(params, NbpParams):
        return g0 * (math.log(J + c) - math.log(c))
    if isinstance(params, GnbpParams):
        params.check_rows(J)
        q_dot = float(params.q().sum())
        return g0 * (math.log(c + q_dot) - math.log(c))
    params.check_rows(J)
    r_dot = float(params.r_arr().sum())
    return g0 * float(digamma(c + r_dot) - digamma(c))


def log_pmf(
    params: ProcessParams,
    matrix: CountMatrix,
    aux: Optional[AugmentedMatrix] = None,
) -> float:
    """Natural log of the unordered-matrix probability (1/K! included).

    The gamma-negative-binomial prior is only evaluated jointly with its
    table-count matrix, so ``aux`` is mandatory there and rejected for the
    other two kinds.
    """
    J, K = matrix.J, matrix.K
    params.check_rows(J)
    g0, c = params.gamma0, params.c

    if isinstance(params, NbpParams):
        if aux is not None:
            raise ValueError("gamma-Poisson prior takes no table counts")
        out = K * math.log(g0) - column_count_rate(params, J) - gammaln(K + 1.0)
        out += float((gammaln(matrix.col_sums) - matrix.col_sums * math.log(J + c)).sum())
        out -= float(gammaln(matrix.vals + 1.0).sum())
        return out

    if isinstance(params, GnbpParams):
        if aux is None:
            raise ValueError("joint evaluation requires the table-count matrix")
        if aux.base is not matrix and aux.base != matrix:
            raise ValueError("table counts do not belong to this matrix")
        q_dot = float(params.q().sum())
        lsum = aux.l_col_sums
        out = K * math.log(g0) - column_count_rate(params, J) - gammaln(K + 1.0)
        out += float((gammaln(lsum) - lsum * math.log(c + q_dot)).sum())
        log_p_row = np.log(np.asarray(params.p))[matrix.rows]
        out += float(stirling_log_ratio_many(matrix.vals, aux.tables).sum())
        out += float((matrix.vals * log_p_row).sum())
        return out

    if aux is not None:
        raise ValueError("beta-negative-binomial prior takes no table counts")
    r = params.r_arr()
    r_dot = float(r.sum())
    out = K * math.log(g0) - column_count_rate(params, J) - gammaln(K + 1.0)
    out += float(
        (
            gammaln(matrix.col_sums)
            + gammaln(c + r_dot)
            - gammaln(c + matrix.col_sums + r_dot)
        ).sum()
    )
    r_row = r[matrix.rows]
    out += float(
        (gammaln(matrix.vals + r_row) - gammaln(matrix.vals + 1.0) - gammaln(r_row)).sum()
    )
    return out


# ---------------------------------------------------------------------------
# column-wise simulation
# ---------------------------------------------------------------------------

def _fresh_labels(start: int, count: int) -> list:
    return [f"f{start + i:06d}" for i in range(count)]


def _assemble(J, entries, K, labels, tables=None):
    """Build a (matrix, optional augmentation) pair from (row, col, n) entries."""
    rows = np.asarray([e[0] for e in entries], dtype=np.int64)
    cols = np.asarray([e[1] for e in entries], dtype=np.int64)
    ns = np.asarray([e[2] for e in entries], dtype=np.int64)
    # pre-sort so the augmentation stays aligned with the matrix's entry order
    order = np.lexsort((rows, cols))
    base = CountMatrix(J, rows[order], cols[order], ns[order], K=K, labels=labels)
    if tables is None:
        return base, None
    ls = np.asarray(tables, dtype=np.int64)
    return base, AugmentedMatrix(base, ls[order])


def simulate_columnwise(
    params: ProcessParams, J: int, rng: np.random.Generator
) -> MatrixDraw:
    """Draw the whole matrix as a Poisson number of iid columns."""
    params.check_rows(J)
    g0, c = params.gamma0, params.c
    K = int(rng.poisson(column_count_rate(params, J)))
    labels = _fresh_labels(0, K)
    entries = []
    tables = [] if isinstance(params, GnbpParams) else None

    if isinstance(params, NbpParams):
        for k in range(K):
            n_dot = int(rng.logseries(_safe_p(J / (J + c))))
            counts = rng.multinomial(n_dot, np.full(J, 1.0 / J))
            for j in np.nonzero(counts)[0]:
                entries.append((int(j), k, int(counts[j])))
        base, _ = _assemble(J, entries, K, labels)
        return MatrixDraw(base, None, None)

    if isinstance(params, GnbpParams):
        q = params.q()
        q_dot = float(q.sum())
        p_arr = np.asarray(params.p)
        for k in range(K):
            l_dot = int(rng.logseries(_safe_p(q_dot / (c + q_dot))))
            l_split = rng.multinomial(l_dot, q / q_dot)
            for j in np.nonzero(l_split)[0]:
                l_jk = int(l_split[j])
                n_jk = int(rng.logseries(p_arr[j], size=l_jk).sum())
                entries.append((int(j), k, n_jk))
                tables.append(l_jk)
        base, aug = _assemble(J, entries, K, labels, tables)
        return MatrixDraw(base, aug, None)

    r = params.r_arr()
    r_dot = float(r.sum())
    col_dist = Digamma(r_dot, c)
    for k in range(K):
        n_dot = col_dist.sample(rng)
        counts = _dirmult_counts(n_dot, r, rng)
        for j in np.nonzero(counts)[0]:
            entries.append((int(j), k, int(counts[j])))
    base, _ = _assemble(J, entries, K, labels)
    return MatrixDraw(base, None, None)


def _dirmult_counts(n, alphas, rng):
    from .distributions import _dirichlet_safe

    if n == 0:
        return np.zeros(alphas.size, dtype=np.int64)
    return rng.multinomial(n, _dirichlet_safe(alphas, rng))


# ---------------------------------------------------------------------------
# sequential (row-wise) simulation
# ---------------------------------------------------------------------------

def new_column_rate(params: ProcessParams, j: int) -> float:
    """Poisson rate of brand-new columns brought by row j+1 (j rows seen)."""
    g0, c = params.gamma0, params.c
    if isinstance(params, NbpParams):
        return g0 * (math.log(j + c + 1.0) - math.log(j + c))
    if isinstance(params, GnbpParams):
        q = params.q()
        q_pre = float(q[:j].sum())
        return g0 * (math.log(c + q_pre + q[j]) - math.log(c + q_pre))
    r = params.r_arr()
    r_pre = float(r[:j].sum())
    return g0 * float(digamma(c + r_pre + r[j]) - digamma(c + r_pre))


def sample_next_row(
    params: ProcessParams,
    col_sums: np.ndarray,
    j: int,
    rng: np.random.Generator,
) -> RowDraw:
    """Draw row j+1's extension of a j-row matrix.

    ``col_sums`` holds the running per-column totals the prediction rule
    conditions on: raw count sums for the gamma-Poisson and beta-negative-
    binomial priors, table-count sums for the gamma-negative-binomial prior.
    """
    col_sums = np.asarray(col_sums, dtype=np.int64)
    K = col_sums.size
    kplus = int(rng.poisson(new_column_rate(params, j)))
    c = params.c

    if isinstance(params, NbpParams):
        p = _safe_p(1.0 / (j + c + 1.0))
        existing = (
            rng.negative_binomial(col_sums, 1.0 - p) if K else np.zeros(0, np.int64)
        )
        new = rng.logseries(p, size=kplus) if kplus else np.zeros(0, np.int64)
        return RowDraw(existing.astype(np.int64), new.astype(np.int64), None, None)

    if isinstance(params, GnbpParams):
        q = params.q()
        q_pre, q_new = float(q[:j].sum()), float(q[j])
        p_new = params.p[j]
        p_tab = _safe_p(q_new / (c + q_pre + q_new))
        l_exist = (
            rng.negative_binomial(col_sums, 1.0 - p_tab) if K else np.zeros(0, np.int64)
        )
        existing = _sumlog_many(l_exist, p_new, rng)
        l_new = rng.logseries(p_tab, size=kplus) if kplus else np.zeros(0, np.int64)
        new = _sumlog_many(l_new, p_new, rng)
        return RowDraw(
            existing, new, l_exist.astype(np.int64), l_new.astype(np.int64)
        )

    r = params.r_arr()
    r_pre, r_new = float(r[:j].sum()), float(r[j])
    if K:
        p_cols = np.clip(rng.beta(col_sums, c + r_pre), 1e-15, 1.0 - 1e-15)
        existing = rng.negative_binomial(r_new, 1.0 - p_cols).astype(np.int64)
    else:
        existing = np.zeros(0, np.int64)
    new_dist = Digamma(r_new, c + r_pre)
    new = np.asarray([new_dist.sample(rng) for _ in range(kplus)], dtype=np.int64)
    return RowDraw(existing, new, None, None)


def _sumlog_many(ls: np.ndarray, p: float, rng) -> np.ndarray:
    """Sum-logarithmic draws for a whole vector of table counts at once."""
    ls = np.asarray(ls, dtype=np.int64)
    out = np.zeros(ls.shape, dtype=np.int64)
    total = int(ls.sum())
    if total == 0:
        return out
    draws = rng.logseries(p, size=total)
    seg = np.repeat(np.arange(ls.size), ls)
    np.add.at(out, seg, draws)
    return out


def simulate_sequential(
    params: ProcessParams,
    J: int,
    rng: np.random.Generator,
    ordering: str = "append-right",
) -> MatrixDraw:
    """Build the matrix one row at a time via the prediction rules.

    ``append-right`` keeps each row's new columns at the right edge and
    realizes the ordered-matrix law; ``random-insert`` spreads them uniformly
    among the order-preserving interleavings, which recovers the same
    column-iid law as :func:`simulate_columnwise`.
    """
    if ordering not in ("append-right", "random-insert"):
        raise ValueError(f"unknown ordering {ordering!r}")
    params.check_rows(J)
    gnbp = isinstance(params, GnbpParams)
    tracked = "tables" if gnbp else "counts"

    columns = []  # per column: dict with entries [(row, n [, l])], sums
    kplus_record = []
    next_label = 0
    for j in range(J):
        sums = np.asarray(
            [col["track"] for col in columns], dtype=np.int64
        )
        draw = sample_next_row(params, sums, j, rng)
        for idx, col in enumerate(columns):
            n = int(draw.existing[idx])
            if n == 0:
                continue
            if gnbp:
                l = int(draw.existing_tables[idx])
                col["entries"].append((j, n, l))
                col["track"] += l
            else:
                col["entries"].append((j, n))
                col["track"] += n
        fresh = []
        for i, n in enumerate(draw.new_counts):
            n = int(n)
            if gnbp:
                l = int(draw.new_tables[i])
                fresh.append({"entries": [(j, n, l)], "track": l, "label": next_label})
            else:
                fresh.append({"entries": [(j, n)], "track": n, "label": next_label})
            next_label += 1
        kplus_record.append(len(fresh))
        if ordering == "append-right" or not fresh:
            columns.extend(fresh)
        else:
            total = len(columns) + len(fresh)
            slots = np.sort(rng.choice(total, size=len(fresh), replace=False))
            merged, old_it, new_it = [], iter(columns), iter(fresh)
            slot_set = set(slots.tolist())
            for pos in range(total):
                merged.append(next(new_it) if pos in slot_set else next(old_it))
            columns = merged

    entries, tables = [], ([] if gnbp else None)
    labels = [f"f{col['label']:06d}" for col in columns]
    for k, col in enumerate(columns):
        for entry in col["entries"]:
            entries.append((entry[0], k, entry[1]))
            if gnbp:
                tables.append(entry[2])
    base, aug = _assemble(J, entries, len(columns), labels, tables)
    return MatrixDraw(base, aug, tuple(kplus_record))


# ---------------------------------------------------------------------------
# row-increment log probability
# ---------------------------------------------------------------------------

def _insertion_log_factor(K: int, kplus: int) -> float:
    """ln of K! K+! / (K + K+)!, the order-preserving-insertion correction."""
    return float(
        gammaln(K + 1.0) + gammaln(kplus + 1.0) - gammaln(K + kplus + 1.0)
    )


def row_increment_log_pmf(
    params: ProcessParams,
    existing: CountMatrix,
    new_row: Sequence[int],
    new_cols: Sequence[int],
    aux: Optional[AugmentedMatrix] = None,
    new_row_tables: Optional[Sequence[int]] = None,
    new_col_tables: Optional[Sequence[int]] = None,
) -> float:
    """Log probability of the matrix increment brought by one more row.

    ``new_row`` gives the counts the new row places at the existing columns
    (zeros allowed); ``new_cols`` the strictly positive counts of its fresh
    columns.  The gamma-negative-binomial prior additionally needs the new
    row's table counts at both.  Satisfies, exactly, the telescoping
    identity  increment = log_pmf(extended) - log_pmf(existing).
    """
    J, K = existing.J, existing.K
    params.check_rows(J + 1)
    new_row = np.asarray(new_row, dtype=np.int64)
    new_cols = np.asarray(new_cols, dtype=np.int64)
    if new_row.shape != (K,):
        raise ValueError(f"new_row must have length {K}")
    if np.any(new_cols < 1):
        raise ValueError("a declared new column must have a positive count")
    kplus = new_cols.size
    g0, c = params.gamma0, params.c
    out = _insertion_log_factor(K, kplus)
    out += float(poisson_log_pmf(kplus, new_column_rate(params, J)))

    if isinstance(params, NbpParams):
        p = 1.0 / (J + c + 1.0)
        if K:
            out += float(nb_log_pmf(new_row, existing.col_sums, p).sum())
        if kplus:
            out += float(log_series_log_pmf(new_cols, p).sum())
        return out

    if isinstance(params, GnbpParams):
        if aux is None or new_row_tables is None or new_col_tables is None:
            raise ValueError("table counts are required for this prior")
        if aux.base is not existing and aux.base != existing:
            raise ValueError("table counts do not belong to the existing matrix")
        new_row_tables = np.asarray(new_row_tables, dtype=np.int64)
        new_col_tables = np.asarray(new_col_tables, dtype=np.int64)
        if new_row_tables.shape != (K,) or new_col_tables.shape != (kplus,):
            raise ValueError("table-count vectors must match the count vectors")
        if np.any((new_row_tables == 0) != (new_row == 0)) or np.any(
            new_row_tables > new_row
        ):
            raise ValueError("need l = 0 iff n = 0 and l <= n at existing columns")
        if np.any(new_col_tables < 1) or np.any(new_col_tables > new_cols):
            raise ValueError("need 1 <= l <= n at new columns")
        q = params.q()
        q_pre, q_new = float(q[:J].sum()), float(q[J])
        p_new = params.p[J]
        p_tab = q_new / (c + q_pre + q_new)
        if K:
            out += float(nb_log_pmf(new_row_tables, aux.l_col_sums, p_tab).sum())
            for n, l in zip(new_row.tolist(), new_row_tables.tolist()):
                out += sumlog_log_pmf(n, l, p_new)
        for n, l in zip(new_cols.tolist(), new_col_tables.tolist()):
            out += float(log_series_log_pmf(l, p_tab))
            out += sumlog_log_pmf(n, l, p_new)
        return out

    if aux is not None or new_row_tables is not None or new_col_tables is not None:
        raise ValueError("this prior takes no table counts")
    r = params.r_arr()
    r_pre, r_new = float(r[:J].sum()), float(r[J])
    if K:
        out += float(bnb_log_pmf(new_row, r_new, existing.col_sums, c + r_pre).sum())
    if kplus:
        out += float(digamma_log_pmf(new_cols, r_new, c + r_pre).sum())
    return out

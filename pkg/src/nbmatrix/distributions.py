"""Count distributions the matrix priors are built from.

Each distribution is a small frozen dataclass with a validated constructor,
a ``log_pmf`` that returns ``-inf`` off-support, and a ``sample`` driven by
an explicit ``numpy.random.Generator``.  Mixture PMFs that involve Stirling
numbers (sum-logarithmic, gamma-negative-binomial, logarithmic-mixed forms)
are evaluated with log-sum-exp over the tabulated ``g(n, l)`` ratios.

The module-level functions at the bottom (``crt_sample``, ``logbeta_sample``
and the vectorized ``*_log_pmf`` helpers) are the hot-path forms used by the
Gibbs sweeps and the predictive scorer.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from .special import digamma, stirling_log_ratio_row, trigamma

__all__ = [
    "Logarithmic",
    "SumLogarithmic",
    "NegativeBinomial",
    "GammaNegBinomial",
    "BetaNegBinomial",
    "LogLogarithmic",
    "Digamma",
    "DirichletMultinomial",
    "Poisson",
    "crt_sample",
    "crt_sample_many",
    "logbeta_sample",
    "logbeta_mean",
    "logbeta_var",
]

_NEG_INF = -math.inf


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(msg)


def _neg_log1m(p: float) -> float:
    """q = -ln(1 - p), the exponential tilt shared by the log-series family."""
    return -math.log1p(-p)


# ---------------------------------------------------------------------------
# vectorized log-PMF kernels
# ---------------------------------------------------------------------------

def log_series_log_pmf(n, p: float):
    """Logarithmic series: f(n) = p^n / (n * q), n >= 1, q = -ln(1-p)."""
    n = np.asarray(n)
    out = np.where(n >= 1, n * math.log(p) - np.log(np.maximum(n, 1)), _NEG_INF)
    return out - math.log(_neg_log1m(p))


def nb_log_pmf(n, r, p):
    """Negative binomial: f(n) = Gamma(n+r)/(n! Gamma(r)) p^n (1-p)^r."""
    n = np.asarray(n, dtype=float)
    return (
        gammaln(n + r)
        - gammaln(n + 1.0)
        - gammaln(r)
        + n * math.log(p)
        + r * math.log1p(-p)
    )


def poisson_log_pmf(n, lam):
    n = np.asarray(n, dtype=float)
    if lam == 0.0:
        return np.where(n == 0, 0.0, _NEG_INF)
    return n * math.log(lam) - lam - gammaln(n + 1.0)


def sumlog_log_pmf(n: int, l: int, p: float) -> float:
    """Sum of ``l`` iid logarithmic draws: f(n) = p^n l! |s(n,l)| / (n! q^l)."""
    if l == 0:
        return 0.0 if n == 0 else _NEG_INF
    if n < l:
        return _NEG_INF
    g = stirling_log_ratio_row(n)[l - 1]
    return n * math.log(p) + gammaln(l + 1.0) + g - l * math.log(_neg_log1m(p))


def gnb_log_pmf(n: int, shape: float, c: float, p: float) -> float:
    """Gamma-mixed negative binomial: NB(r, p) with r ~ Gamma(shape, 1/c).

    Evaluated through its equivalent sum-logarithmic compound form,

        f(n) = sum_l  c^shape p^n |s(n,l)| Gamma(shape+l)
               / (Gamma(shape) n! (c+q)^(shape+l)),

    so that only Stirling log-ratios and gammaln enter.
    """
    if n < 0:
        return _NEG_INF
    q = _neg_log1m(p)
    base = shape * (math.log(c) - math.log(c + q))
    if n == 0:
        return base
    ls = np.arange(1, n + 1)
    terms = (
        stirling_log_ratio_row(n)
        + gammaln(shape + ls)
        - gammaln(shape)
        - ls * math.log(c + q)
    )
    return base + n * math.log(p) + logsumexp(terms)


def loglog_log_pmf(n: int, c: float, p: float) -> float:
    """Logarithmic-mixed sum-logarithmic: SumLog(l, p), l ~ Log(q/(c+q))."""
    if n < 1:
        return _NEG_INF
    q = _neg_log1m(p)
    ls = np.arange(1, n + 1)
    terms = stirling_log_ratio_row(n) + gammaln(ls) - ls * math.log(c + q)
    norm = math.log(math.log(c + q) - math.log(c))
    return n * math.log(p) + logsumexp(terms) - norm


def digamma_log_pmf(n, r, c):
    """Digamma distribution on n >= 1 (the e -> 0 limit of a truncated BNB)."""
    n = np.asarray(n, dtype=float)
    norm = math.log(float(digamma(c + r) - digamma(c)))
    out = (
        gammaln(r + n)
        + gammaln(c + r)
        - np.log(np.maximum(n, 1.0))
        - gammaln(c + n + r)
        - gammaln(r)
        - norm
    )
    return np.where(n >= 1, out, _NEG_INF)


def bnb_log_pmf(n, r, a, b):
    """Beta-negative binomial: NB(r, p) with p ~ Beta(a, b)."""
    n = np.asarray(n, dtype=float)
    return (
        gammaln(r + n)
        - gammaln(n + 1.0)
        - gammaln(r)
        + gammaln(b + r)
        + gammaln(a + n)
        + gammaln(a + b)
        - gammaln(a + b + r + n)
        - gammaln(a)
        - gammaln(b)
    )


# ---------------------------------------------------------------------------
# distribution objects
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Logarithmic:
    """Logarithmic series distribution on {1, 2, ...}."""

    p: float

    def __post_init__(self):
        _require(0.0 < self.p < 1.0, f"p must lie in (0, 1), got {self.p}")

    def log_pmf(self, n):
        return log_series_log_pmf(n, self.p)

    def sample(self, rng: np.random.Generator, size=None):
        return rng.logseries(self.p, size=size)

    def mean(self) -> float:
        q = _neg_log1m(self.p)
        return self.p / ((1.0 - self.p) * q)


@dataclass(frozen=True)
class SumLogarithmic:
    """Sum of ``l`` iid Logarithmic(p) draws; degenerate at 0 when l = 0."""

    l: int
    p: float

    def __post_init__(self):
        _require(self.l >= 0, f"l must be >= 0, got {self.l}")
        _require(0.0 < self.p < 1.0, f"p must lie in (0, 1), got {self.p}")

    def log_pmf(self, n: int) -> float:
        return sumlog_log_pmf(n, self.l, self.p)

    def sample(self, rng: np.random.Generator) -> int:
        if self.l == 0:
            return 0
        return int(rng.logseries(self.p, size=self.l).sum())


@dataclass(frozen=True)
class NegativeBinomial:
    """NB(r, p) with mean r p / (1 - p); r may be any positive real."""

    r: float
    p: float

    def __post_init__(self):
        _require(self.r > 0.0, f"r must be > 0, got {self.r}")
        _require(0.0 < self.p < 1.0, f"p must lie in (0, 1), got {self.p}")

    def log_pmf(self, n):
        n = np.asarray(n)
        return np.where(n >= 0, nb_log_pmf(np.maximum(n, 0), self.r, self.p), _NEG_INF)

    def sample(self, rng: np.random.Generator, size=None):
        # numpy's p is the complement of ours (success prob of the Bernoulli)
        return rng.negative_binomial(self.r, 1.0 - self.p, size=size)

    def mean(self) -> float:
        return self.r * self.p / (1.0 - self.p)


@dataclass(frozen=True)
class GammaNegBinomial:
    """NB(r, p) with gamma-mixed dispersion r ~ Gamma(shape, 1/c)."""

    shape: float
    c: float
    p: float

    def __post_init__(self):
        _require(self.shape > 0.0, f"shape must be > 0, got {self.shape}")
        _require(self.c > 0.0, f"c must be > 0, got {self.c}")
        _require(0.0 < self.p < 1.0, f"p must lie in (0, 1), got {self.p}")

    def log_pmf(self, n: int) -> float:
        return gnb_log_pmf(n, self.shape, self.c, self.p)

    def sample(self, rng: np.random.Generator, size=None):
        r = rng.gamma(self.shape, 1.0 / self.c, size=size)
        lam = rng.gamma(np.maximum(r, 1e-300), self.p / (1.0 - self.p))
        return rng.poisson(lam)

    def mean(self) -> float:
        return (self.shape / self.c) * self.p / (1.0 - self.p)


@dataclass(frozen=True)
class BetaNegBinomial:
    """NB(r, p) with beta-mixed probability p ~ Beta(a, b)."""

    r: float
    a: float
    b: float

    def __post_init__(self):
        _require(self.r > 0.0, f"r must be > 0, got {self.r}")
        _require(self.a > 0.0, f"a must be > 0, got {self.a}")
        _require(self.b > 0.0, f"b must be > 0, got {self.b}")

    def log_pmf(self, n):
        n = np.asarray(n)
        return np.where(
            n >= 0, bnb_log_pmf(np.maximum(n, 0), self.r, self.a, self.b), _NEG_INF
        )

    def sample(self, rng: np.random.Generator, size=None):
        p = rng.beta(self.a, self.b, size=size)
        p = np.clip(p, 1e-15, 1.0 - 1e-15)
        return rng.negative_binomial(self.r, 1.0 - p, size=size)

    def mean(self) -> float:
        _require(self.b > 1.0, "mean requires b > 1")
        return self.r * self.a / (self.b - 1.0)


@dataclass(frozen=True)
class LogLogarithmic:
    """SumLog(l, p) with l ~ Log(q / (c + q)); support {1, 2, ...}."""

    c: float
    p: float

    def __post_init__(self):
        _require(self.c > 0.0, f"c must be > 0, got {self.c}")
        _require(0.0 < self.p < 1.0, f"p must lie in (0, 1), got {self.p}")

    def log_pmf(self, n: int) -> float:
        return loglog_log_pmf(n, self.c, self.p)

    def sample(self, rng: np.random.Generator) -> int:
        q = _neg_log1m(self.p)
        l = int(rng.logseries(q / (self.c + q)))
        return int(rng.logseries(self.p, size=l).sum())


@dataclass(frozen=True)
class Digamma:
    """Digamma distribution on {1, 2, ...} with tail index c."""

    r: float
    c: float

    def __post_init__(self):
        _require(self.r > 0.0, f"r must be > 0, got {self.r}")
        _require(self.c > 0.0, f"c must be > 0, got {self.c}")

    def log_pmf(self, n):
        return digamma_log_pmf(n, self.r, self.c)

    def sample(self, rng: np.random.Generator) -> int:
        """Exact draw via the beta-process tail mixture.

        With x = -ln(1-p), the mixing density of the underlying atom weight
        is proportional to e^{-cx} (1-e^{-rx}) / (1-e^{-x}), which is
        dominated by max(1, r) times an Exp(c) density, so a rejection step
        yields x; given x the count is NB(r, p) conditioned positive,
        realized as a zero-truncated Poisson(r x) number of logarithmic
        draws.  This stays O(1)-ish even for c < 1, where the distribution
        has no finite mean and head-first CDF inversion cannot terminate.
        """
        r, c = self.r, self.c
        bound = max(1.0, r)
        while True:
            x = rng.exponential(1.0 / c)
            accept = -math.expm1(-r * x) / (-math.expm1(-x) * bound)
            if rng.random() < accept:
                break
        # beyond x ~ 27.6 the survival 1-p is below float resolution; the
        # cap truncates mixing mass e^{-27.6 c}, far under any test's power
        x = min(x, -math.log(1e-12))
        p = -math.expm1(-x)
        l = _zero_truncated_poisson(r * x, rng)
        return int(rng.logseries(p, size=l).sum())


@dataclass(frozen=True)
class DirichletMultinomial:
    """Multinomial(n, w) with w ~ Dirichlet(alphas), n fixed."""

    n: int
    alphas: tuple

    def __post_init__(self):
        _require(self.n >= 0, f"n must be >= 0, got {self.n}")
        a = np.asarray(self.alphas, dtype=float)
        _require(a.ndim == 1 and a.size >= 1, "alphas must be a nonempty vector")
        _require(bool(np.all(a > 0.0)), "alphas must be strictly positive")

    def log_pmf(self, counts) -> float:
        counts = np.asarray(counts, dtype=float)
        a = np.asarray(self.alphas, dtype=float)
        if counts.shape != a.shape or np.any(counts < 0) or counts.sum() != self.n:
            return _NEG_INF
        a_dot = a.sum()
        return float(
            gammaln(self.n + 1.0)
            - gammaln(counts + 1.0).sum()
            + gammaln(a_dot)
            - gammaln(self.n + a_dot)
            + (gammaln(counts + a) - gammaln(a)).sum()
        )

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        a = np.asarray(self.alphas, dtype=float)
        if self.n == 0:
            return np.zeros(a.size, dtype=np.int64)
        w = _dirichlet_safe(a, rng)
        return rng.multinomial(self.n, w)


@dataclass(frozen=True)
class Poisson:
    lam: float

    def __post_init__(self):
        _require(self.lam >= 0.0, f"lam must be >= 0, got {self.lam}")

    def log_pmf(self, n):
        n = np.asarray(n)
        return np.where(
            n >= 0, poisson_log_pmf(np.maximum(n, 0), self.lam), _NEG_INF
        )

    def sample(self, rng: np.random.Generator, size=None):
        return rng.poisson(self.lam, size=size)


def _zero_truncated_poisson(lam: float, rng: np.random.Generator) -> int:
    """Poisson(lam) conditioned to be >= 1; exact for any positive rate."""
    if lam > 1.0:
        # acceptance >= 1 - 1/e
        while True:
            draw = int(rng.poisson(lam))
            if draw >= 1:
                return draw
    # head inversion of the truncated PMF; terms decay fast for small rates
    u = rng.random() * -math.expm1(-lam)
    k, term, acc = 1, lam * math.exp(-lam), 0.0
    acc = term
    while acc < u:
        k += 1
        term *= lam / k
        acc += term
    return k


def _dirichlet_safe(alphas: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Dirichlet draw that survives very small concentration parameters.

    With all alphas tiny the gamma draws can underflow to an all-zero vector;
    the correct limit is a one-hot vector with index probabilities
    proportional to alphas.
    """
    g = rng.gamma(alphas)
    s = g.sum()
    if s <= 0.0 or not np.isfinite(s):
        w = np.zeros(alphas.size)
        w[rng.choice(alphas.size, p=alphas / alphas.sum())] = 1.0
        return w
    return g / s


# ---------------------------------------------------------------------------
# table-count augmentation and the logbeta remainder mass
# ---------------------------------------------------------------------------

_CRT_DIRECT_LIMIT = 65536


def _crt_jump(n: int, r: float, rng: np.random.Generator) -> int:
    """CRT draw for huge n without materializing n Bernoullis.

    Walks from one success to the next: given a success at trial t, the
    next success position T has the closed-form survival
    P(T > s) = Gamma(s) Gamma(r+t) / (Gamma(t) Gamma(r+s)), inverted by
    binary search.  Cost is O(successes * log n), and the expected number
    of successes r [psi(r+n) - psi(r)] grows only logarithmically in n.
    """
    l, t = 1, 1  # trial 1 always succeeds
    while t < n:
        u = rng.random()
        log_u = math.log(u)
        base = gammaln(float(t)) - gammaln(r + t)

        def log_surv(s):
            return gammaln(float(s)) - gammaln(r + s) - base

        if log_surv(n) >= log_u:
            break  # no further successes
        lo, hi = t + 1, n  # smallest s with survival < u
        while lo < hi:
            mid = (lo + hi) // 2
            if log_surv(mid) < log_u:
                hi = mid
            else:
                lo = mid + 1
        l += 1
        t = lo
    return l


def crt_sample(n: int, r: float, rng: np.random.Generator) -> int:
    """Table count l = sum_{t=1..n} Bernoulli(r / (r + t - 1)).

    Returns 0 iff n = 0; otherwise 1 <= l <= n (the first Bernoulli always
    succeeds).
    """
    if r <= 0.0:
        raise ValueError(f"r must be > 0, got {r}")
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    if n == 0:
        return 0
    if n > _CRT_DIRECT_LIMIT:
        return _crt_jump(int(n), r, rng)
    probs = r / (r + np.arange(n))
    return int((rng.random(n) < probs).sum())


def crt_sample_many(
    ns: np.ndarray, rs: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Vectorized ``crt_sample`` over paired count/weight arrays."""
    ns = np.asarray(ns, dtype=np.int64)
    rs = np.broadcast_to(np.asarray(rs, dtype=float), ns.shape)
    if np.any(rs <= 0.0):
        raise ValueError("all weights must be > 0")
    if np.any(ns < 0):
        raise ValueError("all counts must be >= 0")
    out = np.zeros(ns.shape, dtype=np.int64)
    big = ns > _CRT_DIRECT_LIMIT
    for idx in np.nonzero(big)[0]:
        out[idx] = _crt_jump(int(ns[idx]), float(rs[idx]), rng)
    pos = (ns > 0) & ~big
    if not np.any(pos):
        return out
    n_pos = ns[pos]
    total = int(n_pos.sum())
    starts = np.concatenate(([0], np.cumsum(n_pos)[:-1]))
    t = np.arange(total) - np.repeat(starts, n_pos)
    r_rep = np.repeat(rs[pos], n_pos)
    hits = rng.random(total) < r_rep / (r_rep + t)
    # reduceat is safe here: every segment is nonempty
    out[pos] = np.add.reduceat(hits.astype(np.int64), starts)
    return out


def logbeta_mean(gamma0: float, c: float) -> float:
    """Mean of the logbeta law: gamma0 * trigamma(c)."""
    return gamma0 * float(trigamma(c))


def logbeta_var(gamma0: float, c: float) -> float:
    """Variance of the logbeta law: -gamma0 * tetragamma(c)."""
    from .special import tetragamma

    return -gamma0 * float(tetragamma(c))


def _logbeta_levels(gamma0: float, c: float, tol: float) -> int:
    # smallest I with remaining tail mean gamma0 * trigamma(c + I + 1) < tol;
    # trigamma(x) < 1/(x - 1), so I = gamma0/tol + 1 - c always suffices
    hi = max(1, int(math.ceil(gamma0 / tol + 1.0 - c)))
    while gamma0 * float(trigamma(c + hi + 1.0)) >= tol:  # pragma: no cover
        hi *= 2
    return hi


def logbeta_sample(
    gamma0: float,
    c: float,
    rng: np.random.Generator,
    tol: float = 1e-8,
    size=None,
):
    """Draw from the logbeta(gamma0, c) law of the unobserved remainder mass.

    The variable is an infinite superposition of compound-Poisson terms: at
    level i = 0, 1, ... a Pois(gamma0/(c+i)) number of Exp(c+i) jumps occur.
    Levels are truncated at the first I whose remaining tail mean
    ``gamma0 * trigamma(c + I + 1)`` drops below ``tol``; within the kept
    range the superposition is sampled exactly by drawing the total jump
    count and then each jump's level by inverse CDF (the level-weight
    partial sums are digamma differences, so the inversion is exact).

    A draw can be exactly 0.0 when no jumps occur, which for tiny gamma0 is
    the overwhelmingly likely outcome.
    """
    if gamma0 <= 0.0 or c <= 0.0 or tol <= 0.0:
        raise ValueError("gamma0, c and tol must all be > 0")
    levels = _logbeta_levels(gamma0, c, tol)
    psi_c = float(digamma(c))
    span = float(digamma(c + levels + 1.0)) - psi_c
    scalar = size is None
    n_draws = 1 if scalar else int(size)
    counts = rng.poisson(gamma0 * span, size=n_draws)
    total_jumps = int(counts.sum())
    if total_jumps == 0:
        out = np.zeros(n_draws)
        return float(out[0]) if scalar else out
    targets = psi_c + rng.random(total_jumps) * span
    lo = np.zeros(total_jumps, dtype=np.int64)
    hi = np.full(total_jumps, levels, dtype=np.int64)
    while np.any(lo < hi):
        mid = (lo + hi) // 2
        above = digamma(c + mid + 1.0) > targets
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid + 1)
    jumps = rng.exponential(1.0 / (c + lo))
    out = np.zeros(n_draws)
    seg = np.repeat(np.arange(n_draws), counts)
    np.add.at(out, seg, jumps)
    return float(out[0]) if scalar else out

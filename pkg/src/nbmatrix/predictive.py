"""Predictive log-likelihood of a new count vector under a trained model.

Each retained posterior sample scores the row, and the per-sample scores are
averaged in log space (log-mean-exp).  Two vocabulary regimes:

* infinite: the row's unknown features become brand-new columns, scored by
  the process's new-column law times a Poisson factor for how many appeared,
  and the whole increment is divided by K+! so that the internal order of
  the new columns does not inflate the score;
* finite(V): the row is scored as a product over a fixed V-term vocabulary
  with gamma0/V smoothing at unseen terms, and features outside that
  vocabulary are discarded (a counter records how many).

Scorers precompute per-sample constants once, so classifying many rows
against one model costs O(row nonzeros + K+) per row for the gamma-based
priors and O(distinct column sums) for the beta one.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np
from scipy.special import gammaln, logsumexp

from .distributions import (
    digamma_log_pmf,
    gnb_log_pmf,
    log_series_log_pmf,
    loglog_log_pmf,
    nb_log_pmf,
    poisson_log_pmf,
)
from .gibbs import CategoryModel, PosteriorSample
from .special import digamma

__all__ = [
    "AlignedRow",
    "align",
    "RowScorer",
    "predict_row_loglik",
    "OOV_DISCARDS",
]


class _Counter:
    """Process-wide tally of features discarded by finite-vocabulary scoring."""

    def __init__(self):
        self._lock = threading.Lock()
        self._value = 0

    def increment(self, by: int = 1):
        with self._lock:
            self._value += by

    @property
    def value(self) -> int:
        return self._value

    def reset(self):
        with self._lock:
            self._value = 0


OOV_DISCARDS = _Counter()


@dataclass(frozen=True)
class AlignedRow:
    """A row split against a model's vocabulary: zeros filled in, new split off."""

    existing: np.ndarray  # counts over the model's K columns
    new_labels: tuple
    new_counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.existing.sum() + self.new_counts.sum())

    @property
    def kplus(self) -> int:
        return len(self.new_labels)


def align(row: Mapping[str, int], model: CategoryModel) -> AlignedRow:
    """Match a feature->count map to the model's columns, losslessly.

    Model features absent from the row get count 0; row features absent
    from the model come back as new columns in sorted-label order.
    """
    index = model.feature_index()
    existing = np.zeros(model.K, dtype=np.int64)
    new = {}
    for label, count in row.items():
        count = int(count)
        if count < 0:
            raise ValueError(f"negative count for feature {label!r}")
        if count == 0:
            continue
        k = index.get(label)
        if k is None:
            new[label] = new.get(label, 0) + count
        else:
            existing[k] += count
    labels = tuple(sorted(new))
    counts = np.asarray([new[lab] for lab in labels], dtype=np.int64)
    return AlignedRow(existing, labels, counts)


def _log_mean_exp(scores) -> float:
    scores = np.asarray(scores, dtype=float)
    if np.all(np.isneginf(scores)):
        return -math.inf
    return float(logsumexp(scores) - math.log(scores.size))


class RowScorer:
    """Per-category scorer with per-sample constants precomputed.

    ``vocabulary`` is required in finite mode and must cover the model's
    own features; its size is the V of the smoothing terms.
    """

    def __init__(
        self,
        model: CategoryModel,
        mode: str = "infinite",
        vocabulary=None,
        kplus_correction: bool = True,
        em_iters: int = 20,
    ):
        if mode not in ("infinite", "finite"):
            raise ValueError(f"unknown mode {mode!r}")
        if mode == "finite":
            if vocabulary is None:
                raise ValueError("finite mode needs the shared vocabulary")
            vocabulary = frozenset(vocabulary)
            if len(vocabulary) < model.K:
                raise ValueError("vocabulary smaller than the model's feature set")
            missing = set(model.feature_labels) - vocabulary
            if missing:
                raise ValueError(
                    f"vocabulary lacks {len(missing)} model features, "
                    f"e.g. {sorted(missing)[:3]}"
                )
        self.model = model
        self.mode = mode
        self.vocabulary = vocabulary
        self.kplus_correction = kplus_correction
        self.em_iters = em_iters
        self._index = model.feature_index()
        self._uniq_sums, self._uniq_counts = np.unique(
            model.col_sums, return_counts=True
        )

    # -- public API ---------------------------------------------------------

    def loglik(self, row: Mapping[str, int]) -> float:
        aligned = align(row, self.model)
        if self.mode == "finite":
            aligned = self._restrict_to_vocabulary(aligned)
        scores = [self._sample_loglik(s, aligned) for s in self.model.samples]
        return _log_mean_exp(scores)

    def per_sample_logliks(self, row: Mapping[str, int]) -> np.ndarray:
        aligned = align(row, self.model)
        if self.mode == "finite":
            aligned = self._restrict_to_vocabulary(aligned)
        return np.asarray([self._sample_loglik(s, aligned) for s in self.model.samples])

    # -- alignment post-processing ------------------------------------------

    def _restrict_to_vocabulary(self, aligned: AlignedRow) -> AlignedRow:
        keep = [
            (lab, n)
            for lab, n in zip(aligned.new_labels, aligned.new_counts)
            if lab in self.vocabulary
        ]
        dropped = aligned.kplus - len(keep)
        if dropped:
            OOV_DISCARDS.increment(dropped)
        labels = tuple(lab for lab, _ in keep)
        counts = np.asarray([n for _, n in keep], dtype=np.int64)
        return AlignedRow(aligned.existing, labels, counts)

    # -- per-sample scoring ---------------------------------------------------

    def _sample_loglik(self, sample: PosteriorSample, aligned: AlignedRow) -> float:
        kind = self.model.kind
        if kind == "nbp":
            return self._nbp_loglik(sample, aligned)
        if kind == "gnbp":
            return self._gnbp_loglik(sample, aligned)
        return self._bnbp_loglik(sample, aligned)

    def _combinatorial(self, kplus: int) -> float:
        K = self.model.K
        out = gammaln(K + 1.0) - gammaln(K + kplus + 1.0)
        if not self.kplus_correction:
            out += gammaln(kplus + 1.0)
        return float(out)

    def _nbp_loglik(self, s: PosteriorSample, a: AlignedRow) -> float:
        J, K = self.model.J, self.model.K
        p = 1.0 / (J + s.c + 1.0)
        col = self.model.col_sums
        if self.mode == "finite":
            V = len(self.vocabulary)
            smooth = s.gamma0 / V
            out = math.log1p(-p) * (self.model.n_total + s.gamma0)
            nz = np.nonzero(a.existing)[0]
            shapes = col[nz] + smooth
            out += float(
                (nb_log_pmf(a.existing[nz], shapes, p) - shapes * math.log1p(-p)).sum()
            )
            if a.kplus:
                out += float(
                    (nb_log_pmf(a.new_counts, smooth, p) - smooth * math.log1p(-p)).sum()
                )
            return out
        out = math.log1p(-p) * self.model.n_total  # all-zero baseline
        nz = np.nonzero(a.existing)[0]
        if nz.size:
            out += float(
                (nb_log_pmf(a.existing[nz], col[nz], p)
                 - col[nz] * math.log1p(-p)).sum()
            )
        rate = s.gamma0 * (math.log(J + s.c + 1.0) - math.log(J + s.c))
        out += float(poisson_log_pmf(a.kplus, rate))
        if a.kplus:
            out += float(log_series_log_pmf(a.new_counts, p).sum())
        return out + self._combinatorial(a.kplus)

    def _gnbp_loglik(self, s: PosteriorSample, a: AlignedRow) -> float:
        c_eff = s.c + s.q_dot
        p_row = (self.model.hyper.a0 + a.total) / (
            self.model.hyper.a0 + self.model.hyper.b0 + a.total + s.total_mass
        )
        p_row = min(max(p_row, 1e-12), 1.0 - 1e-12)
        q_row = -math.log1p(-p_row)
        l_col = np.asarray(s.l_col_sums, dtype=np.int64)
        l_tot = int(l_col.sum())
        zero_rate = math.log(c_eff) - math.log(c_eff + q_row)  # GNB mass at 0 per table
        if self.mode == "finite":
            V = len(self.vocabulary)
            smooth = s.gamma0 / V
            out = zero_rate * (l_tot + s.gamma0)
            nz = np.nonzero(a.existing)[0]
            for k in nz:
                shape = l_col[k] + smooth
                out += gnb_log_pmf(int(a.existing[k]), shape, c_eff, p_row)
                out -= shape * zero_rate
            for m in a.new_counts:
                out += gnb_log_pmf(int(m), smooth, c_eff, p_row) - smooth * zero_rate
            return out
        out = zero_rate * l_tot
        for k in np.nonzero(a.existing)[0]:
            out += gnb_log_pmf(int(a.existing[k]), int(l_col[k]), c_eff, p_row)
            out -= l_col[k] * zero_rate
        rate = s.gamma0 * (math.log(c_eff + q_row) - math.log(c_eff))
        out += float(poisson_log_pmf(a.kplus, rate))
        for m in a.new_counts:
            out += loglog_log_pmf(int(m), c_eff, p_row)
        return out + self._combinatorial(a.kplus)

    def _bnbp_em_r(self, s: PosteriorSample, a: AlignedRow) -> float:
        """Fixed-count EM for the test row's dispersion parameter."""
        hyper = self.model.hyper
        denom = hyper.b0 + s.p_star - s.sum_log1m_p
        counts = a.existing[a.existing > 0]
        if self.mode == "infinite" and a.kplus:
            counts = np.concatenate([counts, a.new_counts])
        r = 1.0
        if counts.size == 0:
            # an all-zero row pins the latent table total at one
            return max((hyper.a0 - 1.0 + 1.0) / denom, 1e-12)
        for _ in range(self.em_iters):
            l_tot = float((r * (digamma(r + counts) - digamma(r))).sum())
            r = max((hyper.a0 - 1.0 + l_tot) / denom, 1e-12)
        return r

    def _bnbp_loglik(self, s: PosteriorSample, a: AlignedRow) -> float:
        c_eff = s.c + s.r_dot
        r_row = self._bnbp_em_r(s, a)
        uniq, mult = self._uniq_sums, self._uniq_counts
        if self.mode == "finite":
            V = len(self.vocabulary)
            smooth = s.gamma0 / V
            shapes = uniq + smooth
            out = float(
                (mult * (gammaln(shapes + c_eff) - gammaln(shapes + c_eff + r_row))).sum()
            )
            out += (V - self.model.K) * float(
                gammaln(smooth + c_eff) - gammaln(smooth + c_eff + r_row)
            )
            out += V * float(gammaln(c_eff + r_row) - gammaln(c_eff))
            nz = np.nonzero(a.existing)[0]
            if nz.size:
                shapes_nz = self.model.col_sums[nz] + smooth
                out += float(
                    (
                        _bnb_nonzero_part(a.existing[nz], r_row, shapes_nz, c_eff)
                    ).sum()
                )
            if a.kplus:
                out += float(
                    _bnb_nonzero_part(a.new_counts, r_row, smooth, c_eff).sum()
                )
            return out
        # all-zero baseline over the model's columns, grouped by column sum
        out = float(
            (mult * (gammaln(uniq + c_eff) - gammaln(uniq + c_eff + r_row))).sum()
        )
        out += self.model.K * float(gammaln(c_eff + r_row) - gammaln(c_eff))
        nz = np.nonzero(a.existing)[0]
        if nz.size:
            out += float(_bnb_nonzero_part(a.existing[nz], r_row,
                                           self.model.col_sums[nz], c_eff).sum())
        rate = s.gamma0 * float(digamma(c_eff + r_row) - digamma(c_eff))
        out += float(poisson_log_pmf(a.kplus, rate))
        if a.kplus:
            out += float(digamma_log_pmf(a.new_counts, r_row, c_eff).sum())
        return out + self._combinatorial(a.kplus)


def _bnb_nonzero_part(n, r, a, b):
    """log BNB(n; r, a, b) minus log BNB(0; r, a, b), vectorized."""
    n = np.asarray(n, dtype=float)
    return (
        gammaln(r + n)
        - gammaln(n + 1.0)
        - gammaln(r)
        + gammaln(a + n)
        - gammaln(a)
        - gammaln(a + b + r + n)
        + gammaln(a + b + r)
    )


def predict_row_loglik(
    model: CategoryModel,
    row: Mapping[str, int],
    mode: str = "infinite",
    vocabulary=None,
    kplus_correction: bool = True,
    em_iters: int = 20,
) -> float:
    """Monte Carlo predictive log-likelihood of one row under one model."""
    scorer = RowScorer(model, mode, vocabulary, kplus_correction, em_iters)
    return scorer.loglik(row)

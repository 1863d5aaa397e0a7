"""Naive Bayes categorization of count vectors against per-category models.

Categories are scored independently (their models never share state, so
training and scoring parallelize across categories), combined under a
uniform category prior, and normalized with log-sum-exp.  A multinomial
classifier with add-one smoothing over a fixed shared vocabulary is provided
as the classical baseline.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .gibbs import CategoryModel
from .predictive import RowScorer

__all__ = [
    "UnscorableRowError",
    "ClassifierBundle",
    "classify",
    "MultinomialLaplace",
    "multinomial_laplace_loglik",
    "EvalReport",
    "evaluate",
]


class UnscorableRowError(ValueError):
    """Every category assigned the row probability zero."""


class ClassifierBundle:
    """One trained model per category, all same process kind and mode."""

    def __init__(
        self,
        models: Mapping[str, CategoryModel],
        mode: str = "infinite",
        vocabulary=None,
        kplus_correction: bool = True,
    ):
        if len(models) < 2:
            raise ValueError("need at least two categories")
        kinds = {m.kind for m in models.values()}
        if len(kinds) != 1:
            raise ValueError(f"mixed process kinds in one bundle: {sorted(kinds)}")
        self.labels = tuple(models.keys())
        self.models = dict(models)
        self.mode = mode
        self.vocabulary = list(vocabulary) if vocabulary is not None else None
        self.kind = next(iter(kinds))
        self._scorers = {
            label: RowScorer(model, mode, self.vocabulary, kplus_correction)
            for label, model in models.items()
        }

    def scores(self, row: Mapping[str, int]) -> np.ndarray:
        return np.asarray(
            [self._scorers[label].loglik(row) for label in self.labels]
        )


def classify(bundle: ClassifierBundle, row: Mapping[str, int]):
    """(predicted label, per-category posterior probabilities).

    Uniform category prior; posteriors normalized in log space; ties go to
    the earliest declared category.
    """
    scores = bundle.scores(row)
    finite = np.isfinite(scores)
    if not finite.any():
        raise UnscorableRowError("row has zero probability under every category")
    log_norm = logsumexp(scores[finite])
    probs = np.exp(np.where(finite, scores - log_norm, -np.inf))
    label = bundle.labels[int(np.argmax(scores))]
    return label, dict(zip(bundle.labels, probs.tolist()))


# ---------------------------------------------------------------------------
# multinomial baseline with add-one smoothing
# ---------------------------------------------------------------------------

def multinomial_laplace_loglik(
    col_sums: Mapping[str, int], vocab_size: int, row: Mapping[str, int]
) -> float:
    """sum_v n_row,v * ln[(n_cat,v + 1) / sum_v (n_cat,v + 1)].

    Features outside the category's smoothed vocabulary are the caller's
    business; this function assumes the counts passed in are in-vocabulary.
    """
    denom = math.log(sum(col_sums.values()) + vocab_size)
    out = 0.0
    for feature, n in row.items():
        out += n * (math.log(col_sums.get(feature, 0) + 1.0) - denom)
    return out


class MultinomialLaplace:
    """Baseline classifier over a fixed shared vocabulary."""

    def __init__(self, vocabulary: Sequence[str]):
        self.vocabulary = list(vocabulary)
        self._vocab_set = frozenset(self.vocabulary)
        self.labels: tuple = ()
        self._col_sums: dict = {}

    def fit(self, documents):
        """documents: iterable of (label, feature->count map)."""
        sums: dict = {}
        for label, row in documents:
            cat = sums.setdefault(label, {})
            for feature, n in row.items():
                if feature in self._vocab_set:
                    cat[feature] = cat.get(feature, 0) + int(n)
        if len(sums) < 2:
            raise ValueError("need at least two categories")
        self.labels = tuple(sums.keys())
        self._col_sums = sums
        return self

    def loglik(self, label: str, row: Mapping[str, int]) -> float:
        kept = {f: n for f, n in row.items() if f in self._vocab_set}
        return multinomial_laplace_loglik(
            self._col_sums[label], len(self.vocabulary), kept
        )

    def predict(self, row: Mapping[str, int]) -> str:
        scores = [self.loglik(label, row) for label in self.labels]
        return self.labels[int(np.argmax(scores))]


# ---------------------------------------------------------------------------
# evaluation harness
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    labels: tuple
    accuracy: float
    per_category: dict
    confusion: np.ndarray  # [true, predicted]
    predictions: list  # (doc_id, true, predicted)
    baseline_accuracy: Optional[float] = None

    def to_text(self) -> str:
        lines = [f"overall accuracy: {self.accuracy:.4f}"]
        if self.baseline_accuracy is not None:
            lines.append(f"baseline (multinomial-laplace): {self.baseline_accuracy:.4f}")
        lines.append("per-category accuracy:")
        for label in self.labels:
            lines.append(f"  {label}: {self.per_category[label]:.4f}")
        return "\n".join(lines)

    def confusion_csv_rows(self):
        yield ("true\\predicted", *self.labels)
        for i, label in enumerate(self.labels):
            yield (label, *self.confusion[i].tolist())

    def csv_rows(self):
        header = ["doc_id", "true", "predicted"]
        yield tuple(header)
        for rec in self.predictions:
            yield rec


def evaluate(
    bundle: ClassifierBundle,
    documents,
    baseline: Optional[MultinomialLaplace] = None,
) -> EvalReport:
    """Score labeled documents: (doc_id, label, feature->count map) triples."""
    documents = list(documents)
    if not documents:
        raise ValueError("cannot evaluate on an empty test set")
    labels = bundle.labels
    index = {label: i for i, label in enumerate(labels)}
    confusion = np.zeros((len(labels), len(labels)), dtype=np.int64)
    predictions = []
    baseline_hits = 0
    for doc_id, truth, row in documents:
        if truth not in index:
            raise ValueError(f"document {doc_id!r} has unknown label {truth!r}")
        predicted, _ = classify(bundle, row)
        confusion[index[truth], index[predicted]] += 1
        predictions.append((doc_id, truth, predicted))
        if baseline is not None and baseline.predict(row) == truth:
            baseline_hits += 1
    hits = int(np.trace(confusion))
    per_cat = {}
    for label in labels:
        i = index[label]
        total = int(confusion[i].sum())
        per_cat[label] = float(confusion[i, i] / total) if total else float("nan")
    return EvalReport(
        labels,
        hits / len(documents),
        per_cat,
        confusion,
        predictions,
        baseline_hits / len(documents) if baseline is not None else None,
    )

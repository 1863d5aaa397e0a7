"""Dataset ingestion, splitting, and posterior-predictive-check reports.

Two on-disk formats:

* ``uci-bow``: a triplet file whose first three lines give the document
  count D, vocabulary size W and nonzero count NNZ, followed by NNZ lines
  of 1-indexed ``docID wordID count``; a vocabulary file (one token per
  line); and a label file of ``docID label`` lines.
* ``sparse-tsv``: one document per line, ``docID<TAB>label<TAB>tok:cnt,...``
  (the count section may be empty for an empty document).

Duplicate (document, token) pairs are summed; zero or negative counts are
rejected with the offending line number.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .gibbs import CategoryModel
from .matrix import CountMatrix
from .processes import BnbpParams, GnbpParams, NbpParams, simulate_sequential

__all__ = [
    "Document",
    "Corpus",
    "CorpusFormatError",
    "load_corpus",
    "save_corpus",
    "split_corpus",
    "corpus_matrix",
    "PpcReport",
    "ppc_report",
]


class CorpusFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Document:
    doc_id: str
    label: str
    counts: dict

    @property
    def total(self) -> int:
        return sum(self.counts.values())


@dataclass
class Corpus:
    documents: list
    vocabulary: Optional[list] = None

    def __post_init__(self):
        ids = [d.doc_id for d in self.documents]
        if len(set(ids)) != len(ids):
            raise CorpusFormatError("duplicate document ids")
        if any(not d.label for d in self.documents):
            raise CorpusFormatError("every document needs a nonempty label")
        if self.vocabulary is not None:
            vocab = set(self.vocabulary)
            if len(vocab) != len(self.vocabulary):
                raise CorpusFormatError("vocabulary has duplicate tokens")
            used = set()
            for d in self.documents:
                used.update(d.counts)
            if not used <= vocab:
                missing = sorted(used - vocab)[:3]
                raise CorpusFormatError(
                    f"documents use tokens outside the vocabulary, e.g. {missing}"
                )

    @property
    def labels(self) -> tuple:
        seen = dict.fromkeys(d.label for d in self.documents)
        return tuple(seen)

    def by_label(self) -> dict:
        out: dict = {}
        for d in self.documents:
            out.setdefault(d.label, []).append(d)
        return out

    def __len__(self) -> int:
        return len(self.documents)


# ---------------------------------------------------------------------------
# loading / saving
# ---------------------------------------------------------------------------

def _uci_paths(path: str):
    if os.path.isdir(path):
        return (
            os.path.join(path, "docword.txt"),
            os.path.join(path, "vocab.txt"),
            os.path.join(path, "labels.txt"),
        )
    base = path[: -len(".docword.txt")] if path.endswith(".docword.txt") else None
    if base is not None:
        return path, base + ".vocab.txt", base + ".labels.txt"
    root, _ = os.path.splitext(path)
    return path, root + ".vocab.txt", root + ".labels.txt"


def load_corpus(
    path: str,
    format: str = "uci-bow",
    vocab_path: Optional[str] = None,
    labels_path: Optional[str] = None,
) -> Corpus:
    if format == "uci-bow":
        return _load_uci(path, vocab_path, labels_path)
    if format == "sparse-tsv":
        return _load_tsv(path, vocab_path)
    raise ValueError(f"unknown corpus format {format!r}")


def _load_uci(path, vocab_path, labels_path) -> Corpus:
    docword, default_vocab, default_labels = _uci_paths(path)
    vocab_path = vocab_path or default_vocab
    labels_path = labels_path or default_labels
    with open(vocab_path, "r", encoding="utf-8") as fh:
        vocabulary = [line.rstrip("\n") for line in fh if line.strip()]
    with open(docword, "r", encoding="utf-8") as fh:
        try:
            D = int(fh.readline())
            W = int(fh.readline())
            NNZ = int(fh.readline())
        except ValueError as exc:
            raise CorpusFormatError(f"{docword}: malformed header") from exc
        if W != len(vocabulary):
            raise CorpusFormatError(
                f"{docword}: header says {W} words, vocabulary file has "
                f"{len(vocabulary)}"
            )
        counts: list = [dict() for _ in range(D)]
        seen = 0
        for lineno, line in enumerate(fh, start=4):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 3:
                raise CorpusFormatError(f"{docword}:{lineno}: expected 'doc word count'")
            try:
                d, w, n = int(parts[0]), int(parts[1]), int(parts[2])
            except ValueError as exc:
                raise CorpusFormatError(f"{docword}:{lineno}: non-integer field") from exc
            if n <= 0:
                raise CorpusFormatError(f"{docword}:{lineno}: count must be positive")
            if not 1 <= d <= D or not 1 <= w <= W:
                raise CorpusFormatError(f"{docword}:{lineno}: index out of range")
            token = vocabulary[w - 1]
            counts[d - 1][token] = counts[d - 1].get(token, 0) + n
            seen += 1
        if seen != NNZ:
            raise CorpusFormatError(
                f"{docword}: header promised {NNZ} entries, found {seen}"
            )
    labels = {}
    with open(labels_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split(maxsplit=1)
            if len(parts) != 2:
                raise CorpusFormatError(f"{labels_path}:{lineno}: expected 'docID label'")
            labels[int(parts[0])] = parts[1].strip()
    missing = [d for d in range(1, D + 1) if d not in labels]
    if missing:
        raise CorpusFormatError(f"{labels_path}: no label for document {missing[0]}")
    documents = [
        Document(str(d + 1), labels[d + 1], counts[d]) for d in range(D)
    ]
    return Corpus(documents, vocabulary)


def _load_tsv(path, vocab_path) -> Corpus:
    documents = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise CorpusFormatError(f"{path}:{lineno}: expected 3 tab-separated fields")
            doc_id, label, count_field = parts
            counts: dict = {}
            if count_field.strip():
                for item in count_field.split(","):
                    if ":" not in item:
                        raise CorpusFormatError(
                            f"{path}:{lineno}: malformed token:count {item!r}"
                        )
                    token, _, raw = item.rpartition(":")
                    try:
                        n = int(raw)
                    except ValueError as exc:
                        raise CorpusFormatError(
                            f"{path}:{lineno}: non-integer count in {item!r}"
                        ) from exc
                    if n <= 0:
                        raise CorpusFormatError(f"{path}:{lineno}: count must be positive")
                    counts[token] = counts.get(token, 0) + n
            documents.append(Document(doc_id, label, counts))
    vocabulary = None
    if vocab_path:
        with open(vocab_path, "r", encoding="utf-8") as fh:
            vocabulary = [line.rstrip("\n") for line in fh if line.strip()]
    return Corpus(documents, vocabulary)


def save_corpus(corpus: Corpus, path: str, format: str = "sparse-tsv") -> None:
    if format == "sparse-tsv":
        with open(path, "w", encoding="utf-8") as fh:
            for d in corpus.documents:
                body = ",".join(f"{t}:{n}" for t, n in sorted(d.counts.items()))
                fh.write(f"{d.doc_id}\t{d.label}\t{body}\n")
        return
    if format == "uci-bow":
        docword, vocab_path, labels_path = _uci_paths(path)
        vocabulary = corpus.vocabulary
        if vocabulary is None:
            tokens = set()
            for d in corpus.documents:
                tokens.update(d.counts)
            vocabulary = sorted(tokens)
        index = {t: i + 1 for i, t in enumerate(vocabulary)}
        triples = []
        for i, d in enumerate(corpus.documents, start=1):
            for token, n in sorted(d.counts.items()):
                triples.append((i, index[token], n))
        os.makedirs(os.path.dirname(docword) or ".", exist_ok=True)
        with open(docword, "w", encoding="utf-8") as fh:
            fh.write(f"{len(corpus.documents)}\n{len(vocabulary)}\n{len(triples)}\n")
            for t in triples:
                fh.write(f"{t[0]} {t[1]} {t[2]}\n")
        with open(vocab_path, "w", encoding="utf-8") as fh:
            fh.writelines(t + "\n" for t in vocabulary)
        with open(labels_path, "w", encoding="utf-8") as fh:
            for i, d in enumerate(corpus.documents, start=1):
                fh.write(f"{i} {d.label}\n")
        return
    raise ValueError(f"unknown corpus format {format!r}")


# ---------------------------------------------------------------------------
# splitting and matrix construction
# ---------------------------------------------------------------------------

def split_corpus(corpus: Corpus, fraction: float, seed: int):
    """Stratified train/test split, deterministic per seed.

    Per category the training size is max(1, round(fraction * size)).
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for label, docs in corpus.by_label().items():
        if not docs:
            raise ValueError(f"category {label!r} has no documents")
        take = max(1, round(fraction * len(docs)))
        order = rng.permutation(len(docs))
        chosen = set(order[:take].tolist())
        for i, doc in enumerate(docs):
            (train if i in chosen else test).append(doc)
    return (
        Corpus(train, corpus.vocabulary),
        Corpus(test, corpus.vocabulary),
    )


def corpus_matrix(documents) -> CountMatrix:
    """Stack documents into a training matrix, columns = features seen."""
    documents = list(documents)
    labels = []
    index: dict = {}
    rows, cols, vals = [], [], []
    for j, doc in enumerate(documents):
        for token, n in doc.counts.items():
            k = index.get(token)
            if k is None:
                k = index[token] = len(labels)
                labels.append(token)
            rows.append(j)
            cols.append(k)
            vals.append(n)
    return CountMatrix(len(documents), rows, cols, vals, K=len(labels), labels=labels)


# ---------------------------------------------------------------------------
# posterior predictive check
# ---------------------------------------------------------------------------

@dataclass
class PpcReport:
    kind: str
    J: int
    num_columns: int
    total: int
    max_count: int
    col_sum_histogram: dict
    heatmap: np.ndarray  # counts clipped for display
    kplus: tuple

    def stats_csv_rows(self):
        yield ("statistic", "value")
        yield ("num_columns", self.num_columns)
        yield ("total_count", self.total)
        yield ("max_count", self.max_count)
        for value, freq in sorted(self.col_sum_histogram.items()):
            yield (f"columns_with_sum_{value}", freq)

    def heatmap_csv_rows(self):
        for row in self.heatmap:
            yield tuple(row.tolist())


def posterior_mean_params(model: CategoryModel):
    """Average the retained samples into one plug-in parameter set."""
    g0 = float(np.mean([s.gamma0 for s in model.samples]))
    c = float(np.mean([s.c for s in model.samples]))
    if model.kind == "nbp":
        return NbpParams(g0, c)
    rows = np.mean([s.row_params for s in model.samples], axis=0)
    if model.kind == "gnbp":
        return GnbpParams(g0, c, tuple(np.clip(rows, 1e-9, 1 - 1e-9)))
    return BnbpParams(g0, c, tuple(np.maximum(rows, 1e-9)))


def ppc_report(
    model: CategoryModel,
    rng: np.random.Generator,
    clip: int = 3,
    sample_index: Optional[int] = None,
) -> PpcReport:
    """Regenerate a matrix from the fitted parameters and summarize it.

    Uses the posterior-mean parameters by default; pass ``sample_index`` to
    simulate from one retained draw instead.  The heatmap arranges each
    row's new columns to the right (the sequential construction's ordering)
    and clips displayed counts at ``clip``.
    """
    if sample_index is None:
        params = posterior_mean_params(model)
    else:
        s = model.samples[sample_index]
        if model.kind == "nbp":
            params = NbpParams(s.gamma0, s.c)
        elif model.kind == "gnbp":
            params = GnbpParams(s.gamma0, s.c, tuple(s.row_params))
        else:
            params = BnbpParams(s.gamma0, s.c, tuple(s.row_params))
    draw = simulate_sequential(params, model.J, rng, ordering="append-right")
    dense = draw.matrix.to_dense()
    col_sums = draw.matrix.col_sums
    hist: dict = {}
    for v in col_sums.tolist():
        hist[v] = hist.get(v, 0) + 1
    return PpcReport(
        kind=model.kind,
        J=model.J,
        num_columns=draw.matrix.K,
        total=draw.matrix.total,
        max_count=int(dense.max()) if dense.size else 0,
        col_sum_histogram=hist,
        heatmap=np.minimum(dense, clip),
        kplus=draw.kplus,
    )

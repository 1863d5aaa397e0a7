"""Command-line surface: reproducible train / classify / evaluate experiments.

Every run writes a ``manifest.json`` with the resolved arguments next to its
outputs; re-running the same manifest arguments reproduces the outputs
bit-for-bit.  All randomness flows from the ``--seed`` flag through
per-category substreams, so ``--jobs`` parallelism cannot change results.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .classify import ClassifierBundle, MultinomialLaplace, classify, evaluate
from .corpus import (
    Corpus,
    corpus_matrix,
    load_corpus,
    ppc_report,
    split_corpus,
)
from .geweke import geweke_check
from .gibbs import (
    CategoryModel,
    ChainConfig,
    load_model,
    model_from_dict,
    model_to_dict,
    run_chain,
    save_trace_csv,
)
from .matrix import save_matrix
from .processes import BnbpParams, GnbpParams, NbpParams, simulate_sequential

OUT_ENV = "NBMATRIX_OUT"
PROCESSES = ("nbp", "gnbp", "bnbp")


def _out_dir(args) -> str:
    out = args.out or os.environ.get(OUT_ENV) or "."
    os.makedirs(out, exist_ok=True)
    return out


def _write_manifest(out: str, subcommand: str, args: argparse.Namespace, outputs):
    skip = {"func"}
    resolved = {k: v for k, v in vars(args).items() if k not in skip}
    doc = {
        "tool": "nbmatrix",
        "version": __version__,
        "subcommand": subcommand,
        "args": resolved,
        "outputs": sorted(outputs),
    }
    with open(os.path.join(out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)


def _write_csv(path: str, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        for row in rows:
            writer.writerow(row)


def _load_corpus_args(args) -> Corpus:
    return load_corpus(
        args.corpus,
        format=args.format,
        vocab_path=getattr(args, "vocab", None),
        labels_path=getattr(args, "labels", None),
    )


def _chain_config(args, seed) -> ChainConfig:
    return ChainConfig(
        iterations=args.iters,
        burn_in=args.burn_in,
        samples=args.samples,
        retention=args.retention,
        seed=seed,
        keep_trace=not getattr(args, "no_trace", False),
    )


# -- training ----------------------------------------------------------------

def _train_one(task):
    """Worker for per-category training; must stay picklable for --jobs."""
    label, docs, kind, config = task
    matrix = corpus_matrix(docs)
    result = run_chain(kind, matrix, config)
    return label, model_to_dict(result.model), result.trace


def _train_bundle_dicts(corpus, kind, args, seed, jobs=1):
    grouped = corpus.by_label()
    tasks = []
    for i, label in enumerate(corpus.labels):
        config = _chain_config(args, [seed, i])
        tasks.append((label, grouped[label], kind, config))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_train_one, tasks))
    else:
        results = [_train_one(t) for t in tasks]
    return results


def cmd_train(args) -> int:
    out = _out_dir(args)
    corpus = _load_corpus_args(args)
    results = _train_bundle_dicts(corpus, args.process, args, args.seed, args.jobs)
    outputs = []
    for label, model_doc, trace in results:
        model_path = os.path.join(out, f"model_{label}.json")
        with open(model_path, "w", encoding="utf-8") as fh:
            json.dump(model_doc, fh, indent=1)
        outputs.append(os.path.basename(model_path))
        if trace:
            trace_path = os.path.join(out, f"trace_{label}.csv")
            save_trace_csv(trace, trace_path)
            outputs.append(os.path.basename(trace_path))
    bundle_doc = {
        "kind": args.process,
        "categories": list(corpus.labels),
        "vocabulary": "vocabulary.txt" if corpus.vocabulary else None,
    }
    if corpus.vocabulary:
        with open(os.path.join(out, "vocabulary.txt"), "w", encoding="utf-8") as fh:
            fh.writelines(t + "\n" for t in corpus.vocabulary)
        outputs.append("vocabulary.txt")
    with open(os.path.join(out, "bundle.json"), "w", encoding="utf-8") as fh:
        json.dump(bundle_doc, fh, indent=1)
    outputs.append("bundle.json")
    _write_manifest(out, "train", args, outputs)
    print(f"trained {len(results)} categories -> {out}")
    return 0


def load_bundle(path: str, mode: str = "infinite") -> ClassifierBundle:
    with open(os.path.join(path, "bundle.json"), "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    models = {
        label: load_model(os.path.join(path, f"model_{label}.json"))
        for label in doc["categories"]
    }
    vocabulary = None
    if doc.get("vocabulary"):
        with open(os.path.join(path, doc["vocabulary"]), "r", encoding="utf-8") as fh:
            vocabulary = [line.rstrip("\n") for line in fh if line.strip()]
    return ClassifierBundle(models, mode=mode, vocabulary=vocabulary)


# -- classification / evaluation ----------------------------------------------

def cmd_classify(args) -> int:
    out = _out_dir(args)
    bundle = load_bundle(args.bundle, mode=args.mode)
    corpus = _load_corpus_args(args)
    rows = [("doc_id", "predicted", *[f"p_{lab}" for lab in bundle.labels])]
    for doc in corpus.documents:
        label, probs = classify(bundle, doc.counts)
        rows.append((doc.doc_id, label, *[repr(probs[l]) for l in bundle.labels]))
    path = os.path.join(out, "predictions.csv")
    _write_csv(path, rows)
    _write_manifest(out, "classify", args, ["predictions.csv"])
    print(f"classified {len(corpus.documents)} documents -> {path}")
    return 0


def _bundle_from_results(results, mode, vocabulary):
    models = {label: model_from_dict(doc) for label, doc, _ in results}
    return ClassifierBundle(models, mode=mode, vocabulary=vocabulary)


def cmd_evaluate(args) -> int:
    out = _out_dir(args)
    corpus = _load_corpus_args(args)
    outputs = []
    if args.splits:
        if args.bundle:
            raise RuntimeError("--splits retrains per partition; drop --bundle")
        if not args.process:
            raise RuntimeError("--splits needs --process to retrain")
        rows = [("split", "seed", "accuracy", "baseline_accuracy")]
        accs, base_accs = [], []
        for i in range(args.splits):
            seed = args.seed + i
            train, test = split_corpus(corpus, args.fraction, seed)
            results = _train_bundle_dicts(train, args.process, args, seed, args.jobs)
            bundle = _bundle_from_results(results, args.mode, corpus.vocabulary)
            baseline = None
            if args.baseline == "multinomial-laplace":
                vocab = corpus.vocabulary or _implied_vocabulary(train)
                baseline = MultinomialLaplace(vocab).fit(
                    (d.label, d.counts) for d in train.documents
                )
            report = evaluate(
                bundle,
                [(d.doc_id, d.label, d.counts) for d in test.documents],
                baseline,
            )
            accs.append(report.accuracy)
            base_accs.append(report.baseline_accuracy)
            rows.append((i, seed, repr(report.accuracy),
                         "" if report.baseline_accuracy is None
                         else repr(report.baseline_accuracy)))
        mean, sd = float(np.mean(accs)), float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0
        rows.append(("mean", "", repr(mean), ""))
        rows.append(("sd", "", repr(sd), ""))
        _write_csv(os.path.join(out, "splits.csv"), rows)
        outputs.append("splits.csv")
        summary = f"accuracy over {args.splits} splits: {mean:.4f} +/- {sd:.4f}"
        if args.baseline:
            bm = float(np.mean(base_accs))
            summary += f"; baseline {bm:.4f}"
        with open(os.path.join(out, "report.txt"), "w", encoding="utf-8") as fh:
            fh.write(summary + "\n")
        outputs.append("report.txt")
        print(summary)
    else:
        if not args.bundle:
            raise RuntimeError("need --bundle (or --splits N to retrain)")
        if args.baseline:
            raise RuntimeError("--baseline needs --splits (it trains on the split)")
        bundle = load_bundle(args.bundle, mode=args.mode)
        report = evaluate(
            bundle, [(d.doc_id, d.label, d.counts) for d in corpus.documents]
        )
        with open(os.path.join(out, "report.txt"), "w", encoding="utf-8") as fh:
            fh.write(report.to_text() + "\n")
        _write_csv(os.path.join(out, "confusion.csv"), report.confusion_csv_rows())
        _write_csv(os.path.join(out, "predictions.csv"), report.csv_rows())
        outputs += ["report.txt", "confusion.csv", "predictions.csv"]
        print(report.to_text())
    _write_manifest(out, "evaluate", args, outputs)
    return 0


def _implied_vocabulary(corpus: Corpus):
    tokens = set()
    for d in corpus.documents:
        tokens.update(d.counts)
    return sorted(tokens)


# -- simulation / checking ------------------------------------------------------

def _simulation_params(args, rng):
    if args.process == "nbp":
        return NbpParams(args.gamma0, args.c)
    if args.process == "gnbp":
        if args.row_total is not None:
            odds = rng.dirichlet(np.ones(args.rows)) * args.row_total
            p = odds / (1.0 + odds)
        else:
            p = np.full(args.rows, args.p)
        return GnbpParams(args.gamma0, args.c, tuple(np.clip(p, 1e-9, 1 - 1e-9)))
    if args.row_total is not None:
        r = rng.dirichlet(np.ones(args.rows)) * args.row_total
    else:
        r = np.full(args.rows, args.r)
    return BnbpParams(args.gamma0, args.c, tuple(np.maximum(r, 1e-9)))


def cmd_simulate(args) -> int:
    out = _out_dir(args)
    rng = np.random.default_rng(args.seed)
    params = _simulation_params(args, rng)
    draw = simulate_sequential(params, args.rows, rng, ordering=args.ordering)
    matrix_path = os.path.join(out, "matrix.txt")
    save_matrix(draw.matrix, matrix_path, os.path.join(out, "matrix.labels.txt"))
    _write_csv(
        os.path.join(out, "heatmap.csv"),
        (tuple(row.tolist()) for row in draw.matrix.to_dense()),
    )
    _write_csv(
        os.path.join(out, "new_columns_per_row.csv"),
        [("row", "new_columns")] + [(j, k) for j, k in enumerate(draw.kplus)],
    )
    outputs = ["matrix.txt", "matrix.labels.txt", "heatmap.csv",
               "new_columns_per_row.csv"]
    _write_manifest(out, "simulate", args, outputs)
    print(
        f"simulated {draw.matrix.J}x{draw.matrix.K} matrix, "
        f"total count {draw.matrix.total} -> {out}"
    )
    return 0


def cmd_ppc(args) -> int:
    out = _out_dir(args)
    model = load_model(args.model)
    rng = np.random.default_rng(args.seed)
    report = ppc_report(model, rng, clip=args.clip,
                        sample_index=args.sample_index)
    _write_csv(os.path.join(out, "ppc_stats.csv"), report.stats_csv_rows())
    _write_csv(os.path.join(out, "ppc_heatmap.csv"), report.heatmap_csv_rows())
    _write_manifest(out, "ppc", args, ["ppc_stats.csv", "ppc_heatmap.csv"])
    print(
        f"regenerated {report.kind} matrix: J={report.J} K={report.num_columns} "
        f"total={report.total} (observed-column heatmap clipped at {args.clip})"
    )
    return 0


def cmd_geweke(args) -> int:
    out = _out_dir(args)
    report = geweke_check(
        args.process, J=args.rows, rounds=args.rounds, seed=args.seed
    )
    _write_csv(os.path.join(out, "geweke.csv"), report.to_csv_rows())
    with open(os.path.join(out, "geweke.txt"), "w", encoding="utf-8") as fh:
        fh.write(report.to_text() + "\n")
    _write_manifest(out, "geweke", args, ["geweke.csv", "geweke.txt"])
    print(report.to_text())
    return 0 if report.max_abs_z() < 4.0 else 1


def cmd_s_variability(args) -> int:
    out = _out_dir(args)
    corpus = _load_corpus_args(args)
    s_values = [int(s) for s in args.s_values.split(",")]
    budget = args.budget
    if any(budget % s for s in s_values):
        raise RuntimeError(f"--budget {budget} must be divisible by every S")
    train, test = split_corpus(corpus, args.fraction, args.seed)
    pool_args = argparse.Namespace(**vars(args))
    pool_args.samples = budget
    pool_args.retention = "independent-chains"
    results = _train_bundle_dicts(train, args.process, pool_args, args.seed, args.jobs)
    test_docs = [(d.doc_id, d.label, d.counts) for d in test.documents]
    rows = [("S", "run", "accuracy")]
    for s in s_values:
        for run in range(budget // s):
            lo, hi = run * s, (run + 1) * s
            models = {}
            for label, doc, _ in results:
                model = model_from_dict(doc)
                models[label] = CategoryModel(
                    model.kind, model.J, model.feature_labels, model.col_sums,
                    model.hyper, model.samples[lo:hi],
                )
            bundle = ClassifierBundle(models, mode=args.mode,
                                      vocabulary=corpus.vocabulary)
            report = evaluate(bundle, test_docs)
            rows.append((s, run, repr(report.accuracy)))
    _write_csv(os.path.join(out, "s_variability.csv"), rows)
    _write_manifest(out, "s-variability", args, ["s_variability.csv"])
    print(f"wrote per-S accuracy variability -> {out}/s_variability.csv")
    return 0


# -- parser ---------------------------------------------------------------------

def _add_corpus_args(sp):
    sp.add_argument("--corpus", required=True, help="corpus path (file or uci-bow dir)")
    sp.add_argument("--format", default="uci-bow", choices=("uci-bow", "sparse-tsv"))
    sp.add_argument("--vocab", default=None, help="vocabulary file override")
    sp.add_argument("--labels", default=None, help="label file override")


def _add_chain_args(sp, process_required=True):
    sp.add_argument("--process", required=process_required, choices=PROCESSES)
    sp.add_argument("--iters", type=int, default=2500)
    sp.add_argument("--burn-in", type=int, default=0, dest="burn_in")
    sp.add_argument("--samples", type=int, default=10, help="retained samples S")
    sp.add_argument(
        "--retention",
        default="independent-chains",
        choices=("independent-chains", "thinned-single-chain"),
    )
    sp.add_argument("--no-trace", action="store_true", dest="no_trace")


def _add_common(sp):
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--jobs", type=int, default=1,
                    help="parallel category/document jobs")
    sp.add_argument("--out", default=None,
                    help=f"output directory (default ${OUT_ENV} or .)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nbmatrix",
        description="Random count-matrix priors: simulation, inference, "
        "and naive Bayes classification of count vectors.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    sp = sub.add_parser("train", help="fit per-category models")
    _add_corpus_args(sp)
    _add_chain_args(sp)
    _add_common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("classify", help="categorize documents with a bundle")
    _add_corpus_args(sp)
    sp.add_argument("--bundle", required=True)
    sp.add_argument("--mode", default="infinite", choices=("infinite", "finite"))
    _add_common(sp)
    sp.set_defaults(func=cmd_classify)

    sp = sub.add_parser("evaluate", help="accuracy report (optionally over splits)")
    _add_corpus_args(sp)
    sp.add_argument("--bundle", default=None)
    sp.add_argument("--mode", default="infinite", choices=("infinite", "finite"))
    sp.add_argument("--splits", type=int, default=0,
                    help="retrain/evaluate over N random partitions")
    sp.add_argument("--fraction", type=float, default=0.5,
                    help="training fraction per category for --splits")
    sp.add_argument("--baseline", default=None, choices=("multinomial-laplace",))
    _add_chain_args(sp, process_required=False)
    _add_common(sp)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("simulate", help="draw a matrix from a prior")
    sp.add_argument("--process", required=True, choices=PROCESSES)
    sp.add_argument("--gamma0", type=float, required=True)
    sp.add_argument("--c", type=float, required=True)
    sp.add_argument("--rows", type=int, required=True)
    sp.add_argument("--p", type=float, default=0.5,
                    help="constant row probability (gnbp)")
    sp.add_argument("--r", type=float, default=1.0,
                    help="constant row dispersion (bnbp)")
    sp.add_argument("--row-total", type=float, default=None, dest="row_total",
                    help="randomize row parameters to this total (odds for "
                    "gnbp, dispersions for bnbp)")
    sp.add_argument("--ordering", default="append-right",
                    choices=("append-right", "random-insert"))
    _add_common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("ppc", help="posterior predictive check for one model")
    sp.add_argument("--model", required=True, help="model_<label>.json path")
    sp.add_argument("--clip", type=int, default=3)
    sp.add_argument("--sample-index", type=int, default=None, dest="sample_index",
                    help="simulate from one retained draw instead of the mean")
    _add_common(sp)
    sp.set_defaults(func=cmd_ppc)

    sp = sub.add_parser("geweke", help="sampler joint-distribution check")
    sp.add_argument("--process", required=True, choices=PROCESSES)
    sp.add_argument("--rows", type=int, default=3)
    sp.add_argument("--rounds", type=int, default=10000)
    _add_common(sp)
    sp.set_defaults(func=cmd_geweke)

    sp = sub.add_parser("s-variability",
                        help="accuracy variability across sample counts S")
    _add_corpus_args(sp)
    sp.add_argument("--mode", default="infinite", choices=("infinite", "finite"))
    sp.add_argument("--fraction", type=float, default=0.2)
    sp.add_argument("--s-values", default="1,4,10,50", dest="s_values")
    sp.add_argument("--budget", type=int, default=100,
                    help="total chains per category (runs per S = budget/S)")
    _add_chain_args(sp)
    _add_common(sp)
    sp.set_defaults(func=cmd_s_variability)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (RuntimeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

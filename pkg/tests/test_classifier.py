import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nbmatrix.classify import (
    ClassifierBundle,
    MultinomialLaplace,
    UnscorableRowError,
    classify,
    evaluate,
    multinomial_laplace_loglik,
)
from nbmatrix.gibbs import CategoryModel, Hyper, PosteriorSample


def nbp_model(col_sums, labels, J=2, gamma0=1.0, c=1.0):
    return CategoryModel(
        "nbp", J, labels, np.asarray(col_sums), Hyper(), [PosteriorSample(gamma0, c)]
    )


def two_category_bundle():
    return ClassifierBundle(
        {
            "A": nbp_model([3, 1], ("a", "b")),
            "B": nbp_model([1, 4], ("a", "z")),
        }
    )


def test_identical_models_split_evenly():
    bundle = ClassifierBundle(
        {
            "A": nbp_model([2, 2], ("x", "y")),
            "B": nbp_model([2, 2], ("x", "y")),
        }
    )
    label, probs = classify(bundle, {"x": 1, "y": 2})
    assert probs["A"] == pytest.approx(0.5, abs=1e-12)
    assert probs["B"] == pytest.approx(0.5, abs=1e-12)
    assert label == "A"  # declaration-order tie break


def test_softmax_arithmetic():
    # log scores (-10, -12) must produce posteriors 1/(1+e^-2), e^-2/(1+e^-2)
    class Fixed:
        def __init__(self, value):
            self.value = value

        def loglik(self, row):
            return self.value

    bundle = two_category_bundle()
    bundle._scorers = {"A": Fixed(-10.0), "B": Fixed(-12.0)}
    label, probs = classify(bundle, {})
    assert label == "A"
    assert probs["A"] == pytest.approx(1 / (1 + math.exp(-2)), abs=1e-12)
    assert probs["B"] == pytest.approx(math.exp(-2) / (1 + math.exp(-2)), abs=1e-12)


def test_posteriors_sum_to_one():
    bundle = two_category_bundle()
    for row in ({}, {"a": 2}, {"zz": 3, "a": 1}):
        _, probs = classify(bundle, row)
        assert sum(probs.values()) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(min_value=-50, max_value=50))
def test_shift_invariance(shift):
    class Fixed:
        def __init__(self, value):
            self.value = value

        def loglik(self, row):
            return self.value

    bundle = two_category_bundle()
    bundle._scorers = {"A": Fixed(-3.0), "B": Fixed(-5.5)}
    _, base = classify(bundle, {})
    bundle._scorers = {"A": Fixed(-3.0 + shift), "B": Fixed(-5.5 + shift)}
    _, shifted = classify(bundle, {})
    assert shifted["A"] == pytest.approx(base["A"], abs=1e-9)


def test_unscorable_row():
    class NegInf:
        def loglik(self, row):
            return -math.inf

    bundle = two_category_bundle()
    bundle._scorers = {"A": NegInf(), "B": NegInf()}
    with pytest.raises(UnscorableRowError):
        classify(bundle, {"a": 1})


def test_bundle_validation():
    with pytest.raises(ValueError):
        ClassifierBundle({"A": nbp_model([1], ("a",))})
    gnbp = CategoryModel(
        "gnbp", 1, ("a",), np.array([1]), Hyper(),
        [PosteriorSample(1, 1, row_params=[0.5], total_mass=1.0, l_col_sums=[1])],
    )
    with pytest.raises(ValueError):
        ClassifierBundle({"A": nbp_model([1], ("a",)), "B": gnbp})


# ---------------------------------------------------------------------------
# multinomial baseline
# ---------------------------------------------------------------------------

def test_laplace_empty_row_scores_zero():
    assert multinomial_laplace_loglik({"a": 3}, 2, {}) == 0.0


def test_laplace_closed_form():
    # V=2, category sums (1, 0), row (1, 0): (1+1)/(1+1+0+1) = 2/3
    got = multinomial_laplace_loglik({"a": 1}, 2, {"a": 1})
    assert got == pytest.approx(math.log(2 / 3), abs=1e-12)


def test_laplace_uniform_categories_depend_only_on_total():
    va = multinomial_laplace_loglik({"a": 2, "b": 2}, 2, {"a": 3})
    vb = multinomial_laplace_loglik({"a": 2, "b": 2}, 2, {"b": 3})
    assert va == pytest.approx(vb, abs=1e-12)


def test_laplace_classifier_discards_oov():
    clf = MultinomialLaplace(["a", "b"]).fit(
        [("A", {"a": 5}), ("B", {"b": 5})]
    )
    assert clf.predict({"a": 1, "unseen": 99}) == "A"
    assert clf.loglik("A", {"unseen": 4}) == 0.0


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def test_evaluate_report_and_determinism():
    bundle = two_category_bundle()
    docs = [
        ("d1", "A", {"b": 2}),
        ("d2", "B", {"z": 3}),
        ("d3", "A", {"b": 1, "a": 1}),
        ("d4", "B", {"z": 1}),
    ]
    r1 = evaluate(bundle, docs)
    r2 = evaluate(bundle, docs)
    assert r1.accuracy == r2.accuracy
    assert np.array_equal(r1.confusion, r2.confusion)
    assert r1.predictions == r2.predictions
    assert r1.confusion.sum() == 4
    assert set(r1.per_category) == {"A", "B"}
    assert "overall accuracy" in r1.to_text()


def test_evaluate_rejects_empty_and_unknown_labels():
    bundle = two_category_bundle()
    with pytest.raises(ValueError):
        evaluate(bundle, [])
    with pytest.raises(ValueError):
        evaluate(bundle, [("d", "C", {"a": 1})])


def test_perfectly_separable_data_scores_one():
    bundle = two_category_bundle()
    docs = [("d1", "A", {"b": 3}), ("d2", "B", {"z": 3})]
    report = evaluate(bundle, docs)
    assert report.accuracy == 1.0
    baseline = MultinomialLaplace(["a", "b", "z"]).fit(
        [("A", {"b": 3, "a": 1}), ("B", {"z": 3, "a": 1})]
    )
    report_b = evaluate(bundle, docs, baseline)
    assert report_b.baseline_accuracy == 1.0

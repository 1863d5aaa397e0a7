import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nbmatrix.matrix import (
    AugmentedMatrix,
    CountMatrix,
    canonical_form,
    load_matrix,
    save_matrix,
)


def test_construction_and_views():
    m = CountMatrix.from_dense([[2, 0, 1], [0, 3, 1]], labels=("a", "b", "c"))
    assert (m.J, m.K) == (2, 3)
    assert m.col_sums.tolist() == [2, 3, 2]
    assert m.total == 7
    assert m.row_sums.tolist() == [3, 4]
    rows, vals = m.column_entries(2)
    assert rows.tolist() == [0, 1] and vals.tolist() == [1, 1]
    assert np.array_equal(m.to_dense(), [[2, 0, 1], [0, 3, 1]])


def test_rejects_zero_columns_and_bad_entries():
    with pytest.raises(ValueError):
        CountMatrix.from_dense([[1, 0], [2, 0]])  # all-zero column
    with pytest.raises(ValueError):
        CountMatrix(2, [0], [0], [0])  # zero stored entry
    with pytest.raises(ValueError):
        CountMatrix(2, [0, 0], [0, 0], [1, 1])  # duplicate coordinate
    with pytest.raises(ValueError):
        CountMatrix(2, [2], [0], [1])  # row out of range
    with pytest.raises(ValueError):
        CountMatrix.from_dense([[1, 1]], labels=("only-one",))


def test_immutability():
    m = CountMatrix.from_dense([[1]])
    with pytest.raises(AttributeError):
        m.J = 5
    with pytest.raises(ValueError):
        m.vals[0] = 7


def test_empty_matrix():
    m = CountMatrix.empty(3)
    assert (m.J, m.K, m.total) == (3, 0, 0)
    assert canonical_form(m) == m


def test_canonical_form_permutation_invariance():
    m = CountMatrix.from_dense([[2, 1], [0, 3]], labels=("x", "y"))
    swapped = m.permute_columns([1, 0])
    assert canonical_form(m) == canonical_form(swapped)
    assert canonical_form(canonical_form(m)) == canonical_form(m)


@settings(max_examples=100, deadline=None)
@given(st.permutations(list(range(8))))
def test_canonical_form_random_shuffles(order):
    rng = np.random.default_rng(8)
    dense = rng.integers(0, 4, size=(5, 8))
    dense[0] += 1  # no zero columns
    m = CountMatrix.from_dense(dense)
    assert canonical_form(m.permute_columns(order)).canonical_key() == canonical_form(
        m
    ).canonical_key()
    assert canonical_form(m.permute_columns(order)) == canonical_form(m)


def test_augmented_invariants():
    m = CountMatrix.from_dense([[2, 1], [1, 0]])
    aug = AugmentedMatrix(m, np.array([1, 1, 1]))
    assert aug.l_col_sums.tolist() == [2, 1]
    assert aug.l_row_sums.tolist() == [2, 1]
    with pytest.raises(ValueError):
        AugmentedMatrix(m, np.array([0, 1, 1]))  # l = 0 at a nonzero entry
    with pytest.raises(ValueError):
        AugmentedMatrix(m, np.array([3, 1, 1]))  # l > n
    with pytest.raises(ValueError):
        AugmentedMatrix(m, np.array([1, 1]))  # misaligned


def test_augmented_permutation_keeps_alignment():
    m = CountMatrix.from_dense([[2, 1], [1, 3]])
    aug = AugmentedMatrix(m, np.array([2, 1, 1, 2]))
    perm = aug.permute_columns([1, 0])
    assert np.array_equal(perm.to_dense(), aug.to_dense()[:, [1, 0]])


def test_save_load_round_trip(tmp_path):
    m = CountMatrix.from_dense([[2, 0, 1], [0, 3, 1]], labels=("a", "b", "c"))
    path = tmp_path / "m.txt"
    labels = tmp_path / "m.labels.txt"
    save_matrix(m, str(path), str(labels))
    again = load_matrix(str(path), str(labels))
    assert again == m
    # bit-exact file round trip
    save_matrix(again, str(tmp_path / "m2.txt"), str(tmp_path / "m2.labels.txt"))
    assert (tmp_path / "m2.txt").read_bytes() == path.read_bytes()


def test_load_rejects_malformed(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("2 1\n0 0\n")
    with pytest.raises(ValueError):
        load_matrix(str(bad))

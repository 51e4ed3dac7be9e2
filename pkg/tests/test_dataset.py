import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from rfpim_ci.dataset import (
    CompleteDataset,
    DataError,
    IncompleteDataset,
    complete_cases,
    load_csv,
    missing_rate,
    save_csv,
)


def write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_one_empty_feature_cell(tmp_path):
    path = write(tmp_path, "a,b,y\n1,2,3\n4,,6\n7,8,9\n")
    ds = load_csv(path, "y")
    assert (~ds.mask).sum() == 1
    assert not ds.mask[1, 1]
    assert ds.columns == ("a", "b")
    np.testing.assert_array_equal(ds.response, [3, 6, 9])


def test_target_in_the_middle_keeps_column_order(tmp_path):
    path = write(tmp_path, "c,y,a\n1,2,3\n4,5,6\n")
    ds = load_csv(path, "y")
    assert ds.columns == ("c", "a")
    np.testing.assert_array_equal(ds.features, [[1, 3], [4, 6]])


def test_missing_response_is_rejected(tmp_path):
    path = write(tmp_path, "a,y\n1,2\n3,\n")
    with pytest.raises(DataError, match="missing response"):
        load_csv(path, "y")


def test_dense_csv(tmp_path):
    ds = load_csv(write(tmp_path, "a,y\n1,2\n3,4\n"), "y")
    assert ds.mask.all()
    assert missing_rate(ds) == 0


@pytest.mark.parametrize(
    "text, match",
    [
        ("a,y\n1,2\nfoo,3\n", "non-numeric"),
        ("a,y\n1,2\n", "at least 2 rows"),
        ("y\n1\n2\n", "at least 2 rows and 1 feature"),
        ("a,y\n1,2\nnan,3\n", "non-finite"),
        ("a,b\n1,2\n3,4\n", "target column"),
    ],
)
def test_load_errors(tmp_path, text, match):
    with pytest.raises(DataError, match=match):
        load_csv(write(tmp_path, text), "y")


def test_missing_file(tmp_path):
    with pytest.raises(DataError, match="no such file"):
        load_csv(tmp_path / "nope.csv", "y")


def test_missing_rate_examples():
    X = np.zeros((10, 4))
    mask = np.ones((10, 4), bool)
    assert missing_rate(IncompleteDataset(X, np.zeros(10), mask)) == 0
    mask.flat[:12] = False
    assert missing_rate(IncompleteDataset(X, np.zeros(10), mask)) == pytest.approx(0.3)
    mask[:] = True
    mask[:, :2] = False
    assert missing_rate(IncompleteDataset(X, np.zeros(10), mask)) == 0.5


def test_complete_cases():
    X = np.zeros((3, 2))
    mask = np.array([[1, 1], [1, 0], [1, 1]], bool)
    assert complete_cases(IncompleteDataset(X, np.zeros(3), mask)) == [0, 2]
    assert complete_cases(IncompleteDataset(X, np.zeros(3), np.ones((3, 2), bool))) == [0, 1, 2]
    assert complete_cases(IncompleteDataset(X, np.zeros(3), np.zeros((3, 2), bool))) == []


def test_masked_cells_hold_the_sentinel_and_are_read_only():
    X = np.arange(6, dtype=float).reshape(3, 2)
    mask = np.array([[1, 0], [1, 1], [0, 1]], bool)
    ds = IncompleteDataset(X, np.zeros(3), mask)
    assert np.isnan(ds.features[~mask]).all()
    assert X[0, 1] == 1.0  # caller's array untouched
    with pytest.raises(ValueError):
        ds.features[0, 0] = 5.0
    np.testing.assert_array_equal(ds.observed_values(1), [3.0, 5.0])


def test_mask_shape_and_response_invariants():
    with pytest.raises(ValueError, match="mask shape"):
        IncompleteDataset(np.zeros((3, 2)), np.zeros(3), np.ones((3, 3), bool))
    with pytest.raises(DataError, match="missing response"):
        IncompleteDataset(np.zeros((2, 1)), np.array([1.0, np.nan]), np.ones((2, 1), bool))


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=50, deadline=None)
@given(
    X=hnp.arrays(np.float64, hnp.array_shapes(min_dims=2, max_dims=2, min_side=2, max_side=6), elements=finite),
    data=st.data(),
)
def test_csv_round_trip_is_bit_exact(tmp_path_factory, X, data):
    n, p = X.shape
    mask = data.draw(hnp.arrays(bool, (n, p)))
    y = data.draw(hnp.arrays(np.float64, n, elements=finite))
    ds = IncompleteDataset(X, y, mask)
    path = tmp_path_factory.mktemp("rt") / "x.csv"
    save_csv(ds, path)
    back = load_csv(path, "y")
    np.testing.assert_array_equal(back.mask, mask)
    assert back.features[mask].tobytes() == X[mask].tobytes()
    assert back.response.tobytes() == y.tobytes()


@settings(max_examples=50, deadline=None)
@given(mask=hnp.arrays(bool, hnp.array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=8)), seed=st.integers(0, 2**32))
def test_missing_rate_permutation_invariant(mask, seed):
    n, p = mask.shape
    ds = IncompleteDataset(np.zeros((n, p)), np.zeros(n), mask)
    r = np.random.default_rng(seed)
    shuffled = mask[r.permutation(n)][:, r.permutation(p)]
    assert missing_rate(ds) == missing_rate(IncompleteDataset(np.zeros((n, p)), np.zeros(n), shuffled))


def test_fill_only_touches_masked_cells():
    X = np.array([[1.0, 2.0], [3.0, 4.0]])
    mask = np.array([[True, False], [True, True]])
    done = IncompleteDataset(X, np.zeros(2), mask).fill(np.full((2, 2), 9.0))
    np.testing.assert_array_equal(done.features, [[1.0, 9.0], [3.0, 4.0]])
    assert isinstance(done, CompleteDataset)

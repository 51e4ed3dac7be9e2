import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rfpim_ci.pooling import PooledEstimate, pool, rubin_ci


def test_hand_example():
    est = pool([1, 2, 3], [0.1, 0.2, 0.3])
    assert est.mean_point == 2
    assert abs(est.within_var - 0.2) < 1e-12
    assert est.between_var == 1
    assert abs(est.total_var - (0.2 + 4 / 3)) < 1e-12
    lo, hi = rubin_ci(est, 0.05)
    half = 1.959963984540054 * math.sqrt(0.2 + 4 / 3)
    assert abs(half - 2.426981) < 1e-6
    assert lo == pytest.approx(2 - half, abs=1e-12)
    assert hi == pytest.approx(2 + half, abs=1e-12)


def test_identical_imputations():
    est = pool([0.7] * 5, [0.3] * 5)
    assert est.between_var == 0
    assert est.total_var == pytest.approx(0.3)


def test_degenerate_interval():
    assert rubin_ci(PooledEstimate(2.0, 0.0, 0.0, 0.0, 5), 0.05) == (2.0, 2.0)


def test_errors():
    with pytest.raises(ValueError):
        pool([1.0], [0.1])
    with pytest.raises(ValueError):
        pool([1.0, 2.0], [0.1])
    with pytest.raises(ValueError):
        pool([1.0, 2.0], [0.1, -0.1])


vals = st.floats(-100, 100)


@settings(max_examples=200, deadline=None)
@given(pairs=st.lists(st.tuples(vals, st.floats(0, 100)), min_size=2, max_size=10))
def test_total_dominates_within_and_is_permutation_invariant(pairs):
    points, variances = zip(*pairs)
    est = pool(points, variances)
    assert est.total_var >= est.within_var - 1e-12
    assert est.between_var >= 0
    rev = pool(points[::-1], variances[::-1])
    assert rev.total_var == pytest.approx(est.total_var, rel=1e-9, abs=1e-12)
    assert min(points) - 1e-9 <= est.mean_point <= max(points) + 1e-9

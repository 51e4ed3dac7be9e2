import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rfpim_ci.dataset import CompleteDataset
from rfpim_ci.missingness import (
    AmputationSpec,
    Mechanism,
    ampute_mar,
    ampute_mcar,
    mar_candidates,
    round_half_up,
)


def data(n, p, seed=0):
    rng = np.random.default_rng(seed)
    return CompleteDataset(rng.random((n, p)), rng.random(n))


def test_mcar_examples():
    rng = np.random.default_rng(0)
    assert ampute_mcar(data(10, 4), 0.0, rng).mask.all()
    ds = ampute_mcar(data(10, 4), 0.3, rng)
    assert ((~ds.mask).sum(axis=0) == 3).all()
    assert (~ds.mask).sum() == 12
    assert ((~ampute_mcar(data(2, 3), 0.5, rng).mask).sum(axis=0) == 1).all()


def test_round_half_up():
    assert [round_half_up(x) for x in (0.5, 1.5, 2.5, 2.49)] == [1, 2, 3, 2]


def test_mar_examples():
    rng = np.random.default_rng(1)
    assert ampute_mar(data(20, 4), 0.0, 1, rng).mask.all()
    ds = ampute_mar(data(20, 4), 0.5, 1, rng)
    assert ds.mask[:, 1].all()


def test_mar_constant_cond_feature_falls_back_to_mcar():
    d = data(20, 3)
    X = d.features.copy()
    X[:, 1] = 7.0
    ds = ampute_mar(CompleteDataset(X, d.response), 0.3, 1, np.random.default_rng(2))
    assert ds.mask[:, 1].all()
    counts = (~ds.mask).sum(axis=0)
    assert counts[0] == counts[2] == 6


def test_errors():
    with pytest.raises(ValueError):
        ampute_mcar(data(5, 2), 1.0, np.random.default_rng(0))
    with pytest.raises(ValueError):
        ampute_mar(data(5, 2), -0.1, 0, np.random.default_rng(0))
    with pytest.raises(IndexError):
        ampute_mar(data(5, 2), 0.1, 2, np.random.default_rng(0))


def test_response_never_masked_and_spec_dispatch():
    d = data(30, 4)
    for mech in Mechanism:
        ds = AmputationSpec(mech, 0.4).apply(d, np.random.default_rng(3))
        np.testing.assert_array_equal(ds.response, d.response)


@settings(max_examples=100, deadline=None)
@given(
    n=st.integers(2, 60),
    p=st.integers(2, 6),
    rate=st.floats(0, 0.95),
    seed=st.integers(0, 2**32 - 1),
    cond=st.integers(0, 5),
)
def test_mar_invariants(n, p, rate, seed, cond):
    cond = cond % p
    d = data(n, p, seed)
    cand = mar_candidates(d, cond)
    ds = ampute_mar(d, rate, cond, np.random.default_rng(seed))
    missing = ~ds.mask
    assert not missing[:, cond].any()
    pool = cand if len(cand) else np.arange(n)
    expected = int(np.floor(rate * len(pool) + 0.5))
    for k in range(p):
        if k != cond:
            assert missing[:, k].sum() == expected
    if len(cand):
        outside = np.setdiff1d(np.arange(n), cand)
        assert not missing[outside].any()


@settings(max_examples=100, deadline=None)
@given(n=st.integers(1, 60), p=st.integers(1, 6), rate=st.floats(0, 0.95), seed=st.integers(0, 2**32 - 1))
def test_mcar_counts_are_deterministic(n, p, rate, seed):
    ds = ampute_mcar(data(n, p, seed) if n > 1 else data(2, p, seed), rate, np.random.default_rng(seed))
    assert ((~ds.mask).sum(axis=0) == int(np.floor(rate * ds.n + 0.5))).all()

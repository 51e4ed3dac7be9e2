import numpy as np
import pytest

from rfpim_ci.dataset import CompleteDataset
from rfpim_ci.forest import Forest, ForestConfig


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_forest(trees, inbag, p, cfg=None):
    """Hand-built forest from per-tree (feature, threshold, left, right, value) lists."""
    width = max(len(t[0]) for t in trees)

    def stack(k, fill, dtype):
        out = np.full((len(trees), width), fill, dtype=dtype)
        for i, t in enumerate(trees):
            out[i, : len(t[k])] = t[k]
        return out

    return Forest(
        stack(0, -1, np.int64),
        stack(1, 0.0, np.float64),
        stack(2, -1, np.int64),
        stack(3, -1, np.int64),
        stack(4, 0.0, np.float64),
        np.array([len(t[0]) for t in trees], dtype=np.int64),
        np.asarray(inbag, dtype=np.int64),
        cfg or ForestConfig(ntree=len(trees)),
        p,
        1,
    )


def stump(feature=0, threshold=0.5, low=0.0, high=1.0):
    return ([feature, -1, -1], [threshold, 0.0, 0.0], [1, -1, -1], [2, -1, -1], [0.5, low, high])


@pytest.fixture
def stump_setup():
    """One stump on x1 <= 0.5 with leaves {0, 1}; rows 0 and 1 are OOB."""
    X = np.array([[0.2], [0.8], [0.1], [0.9]])
    y = np.array([0.0, 1.0, 0.0, 1.0])
    forest = make_forest([stump()], [[0, 0, 2, 2]], p=1)
    return forest, CompleteDataset(X, y)


def pytest_terminal_summary(terminalreporter):
    from . import acceptance_log

    if acceptance_log:
        terminalreporter.section("acceptance criteria")
        for line in sorted(acceptance_log, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

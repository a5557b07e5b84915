import numpy as np
import pytest

from enduse.classifier import ClassifierModel, classify_all, predictions_frame
from enduse.defaults import build_default_model
from enduse.features import learn_bounds
from enduse.generator import generate
from enduse.timeseries import extract_events

# Committed seeds: the training and testing datasets behind the acceptance
# thresholds are fixed here.
TRAIN_SEED = 11
TEST_SEED = 17
TRAIN_DAYS = 45
TEST_DAYS = 15


@pytest.fixture(scope="session")
def default_model():
    return build_default_model()


@pytest.fixture(scope="session")
def train_dataset(default_model):
    return generate(default_model, days=TRAIN_DAYS, seed=TRAIN_SEED)


@pytest.fixture(scope="session")
def train_events(train_dataset):
    return {
        fixture: extract_events(train_dataset.series(fixture))
        for fixture in train_dataset.fixture_series
    }


@pytest.fixture(scope="session")
def learned_stats(train_events):
    return learn_bounds(train_events)


@pytest.fixture(scope="session")
def test_dataset(default_model):
    return generate(default_model, days=TEST_DAYS, seed=TEST_SEED)


@pytest.fixture(scope="session")
def test_predictions(default_model, learned_stats, test_dataset):
    model = ClassifierModel(library=default_model.library, stats=learned_stats)
    return classify_all(test_dataset.series(), model)


@pytest.fixture(scope="session")
def test_predictions_frame(test_predictions):
    return predictions_frame(test_predictions)


@pytest.fixture(scope="session")
def small_dataset(default_model):
    return generate(default_model, days=2, seed=5)


def brute_force_dtw(s, t):
    """Independent DTW oracle: enumerate every monotone warping path.

    Uses explicit path enumeration (no recurrence shared with the
    implementation under test); exponential, fine for lengths <= 6.
    """
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    paths = enumerate_paths(s.size, t.size)
    best = np.inf
    for path in paths:
        cost = sum(abs(s[i] - t[j]) for i, j in path)
        best = min(best, cost)
    return best


_PATH_CACHE: dict = {}


def enumerate_paths(m, n):
    """All monotone index paths from (0, 0) to (m-1, n-1)."""
    key = (m, n)
    if key in _PATH_CACHE:
        return _PATH_CACHE[key]
    paths = []

    def walk(i, j, acc):
        if i == m - 1 and j == n - 1:
            paths.append(acc + [(i, j)])
            return
        if i + 1 < m:
            walk(i + 1, j, acc + [(i, j)])
        if j + 1 < n:
            walk(i, j + 1, acc + [(i, j)])
        if i + 1 < m and j + 1 < n:
            walk(i + 1, j + 1, acc + [(i, j)])

    walk(0, 0, [])
    _PATH_CACHE[key] = paths
    return paths


def brute_force_dtw_batch(pairs):
    """Vectorized oracle over many pairs, grouped by shape."""
    results = []
    padded: dict = {}
    for s, t in pairs:
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        key = (s.size, t.size)
        if key not in padded:
            paths = enumerate_paths(*key)
            longest = max(len(p) for p in paths)
            pi = np.zeros((len(paths), longest), dtype=np.int64)
            pj = np.zeros((len(paths), longest), dtype=np.int64)
            mask = np.zeros((len(paths), longest))
            for row, path in enumerate(paths):
                for col, (i, j) in enumerate(path):
                    pi[row, col] = i
                    pj[row, col] = j
                    mask[row, col] = 1.0
            padded[key] = (pi, pj, mask)
        pi, pj, mask = padded[key]
        costs = (np.abs(s[pi] - t[pj]) * mask).sum(axis=1)
        results.append(float(costs.min()))
    return results

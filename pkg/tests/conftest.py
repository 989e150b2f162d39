import datetime as dt

import numpy as np
import pytest

from loadshape.ingest import Dataset, DayRecord, HOURS_PER_DAY


def day(pid, date, values):
    """Build a DayRecord from a full/partial value list (None = absent)."""
    if isinstance(date, str):
        date = dt.date.fromisoformat(date)
    values = list(values)
    if len(values) != HOURS_PER_DAY:
        raise ValueError("need 24 values")
    return DayRecord(pid, date, tuple(values))


def flat_day(pid, date, value):
    return day(pid, date, [float(value)] * HOURS_PER_DAY)


def dataset_of(days, environment=None):
    return Dataset.build(days, environment or {})


def planted_instance(rng, n_range=(4, 11), k_range=(1, 4)):
    """Tiny clusterable instance: k separated non-negative centers, jittered members.

    Returns (X, k) with X of shape (n, 24). The separation (centers ~U(0.5, 8.5)
    per hour vs jitter sd 0.5) keeps the optimum findable by restart saturation.
    """
    n = int(rng.integers(*n_range))
    k = int(rng.integers(*k_range))
    k = min(k, n)
    centers = rng.uniform(0.5, 8.5, (k, HOURS_PER_DAY))
    sizes = np.full(k, 1)
    for _ in range(n - k):
        sizes[rng.integers(0, k)] += 1
    points = [centers[j] + rng.normal(0.0, 0.5, (sizes[j], HOURS_PER_DAY)) for j in range(k)]
    X = np.maximum(np.concatenate(points), 0.0)
    return X[rng.permutation(n)], k


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)

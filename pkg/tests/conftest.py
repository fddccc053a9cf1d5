import sys
from pathlib import Path

import numpy as np
import pytest

REPO = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO / "src"))

IRIS_CSV = REPO / "data" / "iris.csv"


@pytest.fixture
def iris_path():
    return str(IRIS_CSV)


def random_blobs(rng, n, p, k, spread=4.0):
    """Small Gaussian mixture for property tests; returns (X, labels)."""
    centers = rng.normal(scale=spread, size=(k, p))
    labels = rng.integers(0, k, size=n)
    return rng.normal(size=(n, p)) + centers[labels], labels

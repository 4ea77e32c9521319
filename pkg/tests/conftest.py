import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from profweight.complex_model import LayerSpec, build_model, train_complex
from profweight.data import Dataset, SplitPlan, split, synth_hard_regions
from profweight.numerics import SgdConfig


def blobs(m=200, seed=0, sep=3.0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, m)
    X = rng.standard_normal((m, 2)) + sep * (y[:, None] - 0.5) * np.array([1.0, 0.5])
    return Dataset(X, y, num_classes=2)


@pytest.fixture(scope="session")
def hard_splits():
    data = synth_hard_regions(1200, 0.35, seed=3)
    return split(data, SplitPlan((0.45, 0.30, 0.05, 0.20), "random", 11))


@pytest.fixture(scope="session")
def trained_complex(hard_splits):
    D_N = hard_splits[0]
    model = build_model(2, [LayerSpec("h1", 16), LayerSpec("h2", 16)], 2, seed=5)
    cfg = SgdConfig(learning_rate=0.05, batch_size=32, epochs=30, momentum=0.9, seed=1)
    return train_complex(model, D_N, cfg)

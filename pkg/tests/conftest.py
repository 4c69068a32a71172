from __future__ import annotations

import pytest

from stella.app.datasets import load_dataset, synthetic_dataset


@pytest.fixture(scope="session")
def toy():
    return load_dataset("toy")[0]


@pytest.fixture(scope="session")
def synth_400():
    return synthetic_dataset(400, seed=11)

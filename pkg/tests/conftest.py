from pathlib import Path

import pytest

from aebound.data import gen_clustered
from aebound.network import TrainConfig, autoencoder_arch, load_checkpoint, train

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixture_net():
    return load_checkpoint(FIXTURES / "fixture_net.json")


@pytest.fixture(scope="session")
def trained_toy():
    """One small trained autoencoder on margin-guaranteed clustered data."""
    gen = gen_clustered(4, 32, 2, 100, seed=42)
    cfg = TrainConfig(learning_rate=0.03, epochs=40, batch_size=16, seed=3)
    params, history = train(autoencoder_arch([32, 16, 5, 16, 32]), gen.dataset.floats(), cfg)
    return params, gen, history

import numpy as np
import pytest

from sea.synth import SyntheticCorpusSpec, generate_synthetic_corpus

SMALL_SPEC = SyntheticCorpusSpec(
    vocab_size=12,
    d_v=10,
    d_llm=16,
    grid_height=4,
    grid_width=4,
    images=10,
    noise_sigma=0.05,
    seed=101,
)


@pytest.fixture(scope="session")
def small_corpus():
    return generate_synthetic_corpus(SMALL_SPEC)


@pytest.fixture
def rng_np():
    return np.random.default_rng(12345)

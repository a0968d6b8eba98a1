import numpy as np
import pytest
import torch

from condsep.datagen import MixSpec, make_mixture, synthetic_corpus, synthetic_rir_bank

torch.set_num_threads(2)


@pytest.fixture(scope="session")
def corpus():
    return synthetic_corpus(n_per_gender=4, duration_s=3.0, seed=11)


@pytest.fixture(scope="session")
def rir_bank():
    return synthetic_rir_bank(n_per_position=3, seed=11)


@pytest.fixture(scope="session")
def short_spec():
    return MixSpec.easy(clip_len_samples=16000)


@pytest.fixture(scope="session")
def samples8(corpus, rir_bank, short_spec):
    return [make_mixture(corpus, rir_bank, short_spec, 5000 + i) for i in range(8)]


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)

"""Shared fixtures: one toy model with corpus-estimated priors per session."""

import pytest

import nvtransformer as nv
from nvtransformer.evaluate import make_random_corpus


@pytest.fixture(scope="session")
def toy_model() -> nv.ModelWeights:
    return nv.init_weights(nv.ModelConfig(), seed=7)


@pytest.fixture(scope="session")
def toy_priors(toy_model):
    corpus = make_random_corpus(toy_model.config, 300, seed=18)
    return nv.estimate_priors(toy_model, corpus)

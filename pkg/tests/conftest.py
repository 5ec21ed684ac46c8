"""Shared fixtures: a desk-scale MVN corpus and trained transport models.

Training the three generator families takes a few minutes on one core, so
the models are built once per session and shared by every test that scores
trained behaviour (alignment, embedding concentration, subsampled-loss
convergence, interpolation trajectories).
"""

import pytest

from settransport.datagen import PriorConfig, build_unsupervised_dataset
from settransport.training import TrainConfig, train

FIXTURE_SEED = 0
FIXTURE_K = 500
FIXTURE_SET_SIZE = 100
FIXTURE_EPOCHS = 40


@pytest.fixture(scope="session")
def mvn_prior():
    return PriorConfig(family="mvn")


@pytest.fixture(scope="session")
def mvn_dataset(mvn_prior):
    return build_unsupervised_dataset(mvn_prior, FIXTURE_K, FIXTURE_SET_SIZE,
                                      FIXTURE_K, FIXTURE_SEED)


@pytest.fixture(scope="session")
def trained_models(mvn_dataset):
    models = {}
    for gen in ("energy", "fm", "stoch_energy"):
        cfg = TrainConfig(generator=gen, conditioning="set", stc=True,
                          pairing="any_to_any_uniform", epochs=FIXTURE_EPOCHS,
                          batch_pairs=32, subsample=64, seed=FIXTURE_SEED)
        models[gen] = train(mvn_dataset, cfg)
    return models

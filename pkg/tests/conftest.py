"""Shared fixtures. Heavy artifacts (trained nets, population) are built once
per session at the default scale; cheap throwaway objects get tiny configs."""

import numpy as np
import pytest

from morphbench import generator as sg
from morphbench import nets, vulneval

SEED_GEN = 11
SEED_MAP = 12
SEED_STATS = 13
SEED_PERC = 14
SEED_EMB = 15
SEED_ENC = 16
SEED_POP = 17


@pytest.fixture(scope="session")
def gen_default():
    return sg.init_generator(SEED_GEN, sg.GeneratorConfig())


@pytest.fixture(scope="session")
def mapping_default():
    return sg.init_mapping(SEED_MAP, sg.GeneratorConfig())


@pytest.fixture(scope="session")
def stats_default(mapping_default):
    return sg.map_and_average(mapping_default, 2000, SEED_STATS)


@pytest.fixture(scope="session")
def perceptual_default():
    return nets.init_perceptual(SEED_PERC, sg.GeneratorConfig().resolution)


@pytest.fixture(scope="session")
def embedder_bundle(gen_default, mapping_default, stats_default):
    return nets.train_embedder(gen_default, mapping_default, stats_default,
                               nets.EmbedderTrainConfig(seed=SEED_EMB))


@pytest.fixture(scope="session")
def embedder_default(embedder_bundle):
    return embedder_bundle[0]


@pytest.fixture(scope="session")
def encoder_bundle(gen_default, mapping_default):
    return nets.train_encoder(gen_default, mapping_default,
                              nets.EncoderTrainConfig(seed=SEED_ENC))


@pytest.fixture(scope="session")
def encoder_default(encoder_bundle):
    return encoder_bundle[0]


@pytest.fixture(scope="session")
def encoder_trace(encoder_bundle):
    return encoder_bundle[1]


@pytest.fixture(scope="session")
def population_default(gen_default, mapping_default, embedder_default, stats_default):
    return vulneval.build_population(
        gen_default, mapping_default, embedder_default, stats_default,
        vulneval.PopulationConfig(seed=SEED_POP))


@pytest.fixture(scope="session")
def population_small(gen_default, mapping_default, embedder_default, stats_default):
    return vulneval.build_population(
        gen_default, mapping_default, embedder_default, stats_default,
        vulneval.PopulationConfig(n_ids=12, imgs_per_id=3, seed=SEED_POP + 1))


@pytest.fixture(scope="session")
def target_images(gen_default, mapping_default):
    """In-distribution targets: G(w) for seeded identities."""

    def make(seed):
        w = sg.sample_identity(mapping_default, seed)
        return sg.synthesize(gen_default, w), w

    return make


@pytest.fixture()
def rng():
    return np.random.default_rng(0)

import numpy as np
import pytest
from hypothesis import settings

from focusqg.corpus.pipeline import FIXTURE, FIXTURE_ANNOTATIONS, data_path, load_fixture, preprocess

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def fixture_examples():
    examples, stats = preprocess(str(data_path(FIXTURE)), str(data_path(FIXTURE_ANNOTATIONS)))
    return examples


@pytest.fixture(scope="session")
def fixture_indexed():
    return load_fixture()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

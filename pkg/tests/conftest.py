import numpy as np
import pytest

from coadapt.generator import GeneratorConfig, Vocabulary
from coadapt.session import SessionConfig


@pytest.fixture(scope="session")
def gen_cfg():
    return GeneratorConfig(seed=11)


@pytest.fixture(scope="session")
def vocab(gen_cfg):
    return Vocabulary(gen_cfg)


@pytest.fixture(scope="session")
def session_cfg(gen_cfg):
    return SessionConfig(generator=gen_cfg)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)

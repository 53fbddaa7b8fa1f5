import numpy as np
import pytest
from hypothesis import settings

from rtsmc import (
    ContinuousDelaySpec,
    ModelParams,
    build_kernel,
    discretize,
)

settings.register_profile("stable", derandomize=True, deadline=None)
settings.load_profile("stable")


@pytest.fixture(scope="session")
def generation_pmf():
    return discretize(ContinuousDelaySpec("gamma", 5.51, 0.81), 0.1)


@pytest.fixture(scope="session")
def incubation_pmf():
    return discretize(ContinuousDelaySpec("lognormal", 1.644, 0.363), 0.1)


@pytest.fixture(scope="session")
def onset_kernel(incubation_pmf):
    return build_kernel("onset", incubation=incubation_pmf)


@pytest.fixture()
def params(generation_pmf, onset_kernel):
    return ModelParams(w=generation_pmf, kernel=onset_kernel)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)

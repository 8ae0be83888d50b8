import pytest

from ruinopt import ConstantRate, Exponential, ModelParams, solve


def reference_params() -> ModelParams:
    return ModelParams(1.5, 0.1, 5.0, ConstantRate(1.0), Exponential(1.0))


@pytest.fixture(scope="session")
def ref_params():
    return reference_params()


@pytest.fixture(scope="session")
def solved50(ref_params):
    return solve(ref_params, 50, 50)


@pytest.fixture(scope="session")
def solved100(ref_params):
    return solve(ref_params, 100, 100)

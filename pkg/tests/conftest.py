import pytest

from questkg import games


@pytest.fixture(scope="session")
def miniz():
    return games.load_bundled("miniz")


@pytest.fixture(scope="session")
def chainworld():
    return games.load_bundled("chainworld")


@pytest.fixture(scope="session")
def deceive():
    return games.load_bundled("deceive")

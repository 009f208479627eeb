import pytest

from splitutil import build_split


@pytest.fixture(scope="session")
def split():
    return build_split()

import sys
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

from ctoqw import fixtures

settings.register_profile("ci", derandomize=True, deadline=None)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def two_site():
    return fixtures.two_site_exchange()


@pytest.fixture(scope="session")
def biased_small():
    return fixtures.biased_line((-8, 8))


@pytest.fixture(scope="session")
def spin_small():
    return fixtures.spin_biased_line((0, 8))


@pytest.fixture(scope="session")
def coherent():
    return fixtures.coherent_pair()

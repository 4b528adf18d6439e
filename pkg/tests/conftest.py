import numpy as np
import pytest

from fundusmark.anatomy import localize
from fundusmark.synthetic import fixture_set, stripe_payload


@pytest.fixture(scope="session")
def phantoms():
    return fixture_set()


@pytest.fixture(scope="session")
def localizations(phantoms):
    return [localize(p.image) for p in phantoms]


@pytest.fixture(scope="session")
def payloads():
    """One mixed 16x16 payload per phantom."""
    return [
        stripe_payload(),
        stripe_payload(vertical=True),
        stripe_payload(stripes=((0, 2), (8, 10))),
    ]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

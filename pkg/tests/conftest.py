import pytest
from helpers import fixture_path

from cyclequil.network_model import enumerate_cycles, load_network


@pytest.fixture
def two_lift():
    net = load_network(fixture_path("two_lift.json"))
    return net, enumerate_cycles(net)


@pytest.fixture
def five_cycle():
    net = load_network(fixture_path("five_cycle.json"))
    return net, enumerate_cycles(net)

import json
from fractions import Fraction

import numpy as np
import pytest
from helpers import brute_force_cycles, fixture_path, random_digraph_edges, rotate_min

from cyclequil.network_model import (
    CycleLimitExceeded,
    Lift,
    NetworkParseError,
    NetworkValidationError,
    ResortNetwork,
    Slope,
    build_theta,
    enumerate_cycles,
    load_network,
    network_to_dict,
)


def write_net(tmp_path, data, name="net.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


def two_lift_dict():
    return json.loads(open(fixture_path("two_lift.json"), encoding="utf-8").read())


def test_load_two_lift_fixture():
    net = load_network(fixture_path("two_lift.json"))
    assert len(net.nodes) == 3
    assert len(net.lifts) == 2
    assert len(net.slopes) == 2


def test_zero_capacity_names_the_lift(tmp_path):
    data = two_lift_dict()
    data["lifts"][1]["capacity"] = 0
    with pytest.raises(NetworkValidationError, match="lift2"):
        load_network(write_net(tmp_path, data))


def test_acyclic_network_rejected(tmp_path):
    data = {
        "nodes": ["a", "b", "c"],
        "lifts": [{"id": "up", "tail": "a", "head": "b", "capacity": 1, "ride_time": 1}],
        "slopes": [{"id": "down", "tail": "b", "head": "c", "traverse_time": 1, "value": 1}],
    }
    with pytest.raises(NetworkValidationError, match="no cycles"):
        load_network(write_net(tmp_path, data))


@pytest.mark.parametrize(
    "mutate, needle",
    [
        (lambda d: d["slopes"][0].update(head="nowhere"), "nowhere"),
        (lambda d: d["slopes"][1].update(traverse_time=0), "upper"),
        (lambda d: d["slopes"][0].update(value=-1), "long"),
        (lambda d: d["lifts"][0].update(ride_time=-0.5), "lift1"),
        (lambda d: d["nodes"].append("mid"), "mid"),
        (lambda d: d["slopes"][0].update(id="lift1"), "lift1"),
    ],
)
def test_validation_errors_name_the_entity(tmp_path, mutate, needle):
    data = two_lift_dict()
    mutate(data)
    with pytest.raises(NetworkValidationError, match=needle):
        load_network(write_net(tmp_path, data))


def test_parse_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    with pytest.raises(NetworkParseError):
        load_network(bad)
    data = two_lift_dict()
    del data["lifts"][0]["capacity"]
    with pytest.raises(NetworkParseError):
        load_network(write_net(tmp_path, data))
    with pytest.raises(NetworkParseError):
        load_network(tmp_path / "missing.json")


def test_two_lift_cycles_and_theta(two_lift):
    net, cycles = two_lift
    assert [c.edge_ids for c in cycles.cycles] == [("lift1", "lift2", "long"), ("lift2", "upper")]
    np.testing.assert_array_equal(cycles.theta, [[1, 1], [0, 1]])
    assert cycles.values.tolist() == [2.0, 1.0]
    np.testing.assert_allclose(cycles.free_times, [1.0, 1.0], rtol=0, atol=1e-15)


def test_parallel_slopes_cycles():
    net = load_network(fixture_path("parallel_slopes.json"))
    cycles = enumerate_cycles(net)
    assert len(cycles) == 3
    np.testing.assert_array_equal(cycles.theta, np.ones((3, 1)))


def test_lift_on_no_cycle_gives_zero_column():
    net = load_network(fixture_path("two_lift.json"))
    spur = Lift("spur", "top", "hut", 1.0, 0.5)
    net = ResortNetwork(net.nodes + ("hut",), net.lifts + (spur,), net.slopes).validate()
    cycles = enumerate_cycles(net)
    assert cycles.theta.shape == (2, 3)
    assert not cycles.theta[:, 2].any()


def test_cycle_limit(two_lift):
    net, _ = two_lift
    with pytest.raises(CycleLimitExceeded):
        enumerate_cycles(net, limit=1)
    assert len(enumerate_cycles(net, limit=2)) == 2


def test_explicit_cycles_kept_verbatim(tmp_path):
    data = two_lift_dict()
    data["cycles"] = [["upper", "lift2"], ["lift2", "long", "lift1"]]
    cycles = enumerate_cycles(load_network(write_net(tmp_path, data)))
    assert [c.edge_ids for c in cycles.cycles] == [("upper", "lift2"), ("lift2", "long", "lift1")]
    np.testing.assert_array_equal(cycles.theta, [[0, 1], [1, 1]])


def test_explicit_cycle_must_close(tmp_path):
    data = two_lift_dict()
    data["cycles"] = [["lift1", "upper"]]
    with pytest.raises(NetworkValidationError, match="closed walk"):
        load_network(write_net(tmp_path, data))


def test_self_loop_is_a_cycle():
    net = ResortNetwork(("a",), (Lift("tow", "a", "a", 1.0, 0.5),), ()).validate()
    cycles = enumerate_cycles(net)
    assert [c.edge_ids for c in cycles.cycles] == [("tow",)]


def _multigraph(k, pairs):
    nodes = tuple(f"n{i}" for i in range(k))
    edges = [(f"e{j:02d}", nodes[u], nodes[v]) for j, (u, v) in enumerate(pairs)]
    lifts = tuple(Lift(eid, u, v, 1.0, 0.1) for eid, u, v in edges[::2])
    slopes = tuple(Slope(eid, u, v, 0.5, 1.0) for eid, u, v in edges[1::2])
    return nodes, edges, ResortNetwork(nodes, lifts, slopes)


@pytest.mark.parametrize("seed", range(20))
def test_enumeration_matches_brute_force(seed):
    rng = np.random.default_rng(1000 + seed)
    for _ in range(10):
        k, pairs = random_digraph_edges(rng, max_nodes=8, max_edges=16)
        nodes, edges, net = _multigraph(k, pairs)
        expected = brute_force_cycles(nodes, edges)
        if not expected:
            with pytest.raises(NetworkValidationError):
                net.validate()
            continue
        got = enumerate_cycles(net.validate(), limit=100_000)
        got_ids = [c.edge_ids for c in got.cycles]
        assert len(got_ids) == len(set(got_ids))
        assert {rotate_min(c.edge_ids, c.nodes) for c in got.cycles} == expected


def test_cached_sums_are_exact():
    rng = np.random.default_rng(5)
    k, pairs = 5, [(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 0), (1, 3), (3, 1)]
    nodes = tuple(f"n{i}" for i in range(k))
    lifts = tuple(Lift(f"l{j}", nodes[u], nodes[v], 1.0, float(rng.uniform(0, 1))) for j, (u, v) in enumerate(pairs[:4]))
    slopes = tuple(
        Slope(f"s{j}", nodes[u], nodes[v], float(rng.uniform(0.1, 1)), float(rng.uniform(0, 3)))
        for j, (u, v) in enumerate(pairs[4:])
    )
    cycles = enumerate_cycles(ResortNetwork(nodes, lifts, slopes).validate())
    assert len(cycles) > 1
    for c in cycles.cycles:
        assert c.value == float(sum(Fraction(e.value) for e in c.edges if isinstance(e, Slope)))
        assert c.free_time == float(sum(Fraction(e.duration) for e in c.edges))


def test_theta_gram_diagonal_counts_lifts(five_cycle):
    net, cycles = five_cycle
    gram = cycles.theta @ cycles.theta.T
    assert np.diag(gram).tolist() == [len(c.lift_ids) for c in cycles.cycles]
    np.testing.assert_array_equal(build_theta(cycles, net), cycles.theta)


def test_canonical_order_is_deterministic(tmp_path):
    data = network_to_dict(load_network(fixture_path("five_cycle.json")))
    shuffled = dict(data, lifts=data["lifts"][::-1], slopes=data["slopes"][::-1], nodes=data["nodes"][::-1])
    a = enumerate_cycles(load_network(write_net(tmp_path, data, "a.json")))
    b = enumerate_cycles(load_network(write_net(tmp_path, shuffled, "b.json")))
    dump = lambda cs: json.dumps([c.edge_ids for c in cs.cycles])
    assert dump(a) == dump(b)
    again = enumerate_cycles(load_network(write_net(tmp_path, data, "a.json")))
    assert dump(a) == dump(again)


def test_cycles_start_at_smallest_node(five_cycle):
    _, cycles = five_cycle
    for c in cycles.cycles:
        assert c.nodes[0] == min(c.nodes)
        for a, b in zip(c.edges, c.edges[1:] + c.edges[:1]):
            assert a.head == b.tail


def test_value_scale_copies(two_lift):
    net, _ = two_lift
    scaled = net.with_value_scale(3.0)
    assert [s.value for s in scaled.slopes] == [6.0, 3.0]
    assert [s.value for s in net.slopes] == [2.0, 1.0]
    with pytest.raises(ValueError):
        net.with_value_scale(0.0)

"""Random instance generators and brute-force oracles shared by the tests."""

import numpy as np

from cyclequil.network_model import (
    CycleLimitExceeded,
    Lift,
    NetworkValidationError,
    ResortNetwork,
    Slope,
    enumerate_cycles,
)


def random_digraph_edges(rng, max_nodes=8, max_edges=16, self_loops=True):
    k = int(rng.integers(1, max_nodes + 1))
    m = int(rng.integers(min(k, max_edges), max_edges + 1))
    edges = []
    for _ in range(m):
        u, v = (int(x) for x in rng.integers(0, k, size=2))
        if u == v and not self_loops:
            continue
        edges.append((u, v))
    return k, edges


def random_network(rng, max_nodes=6, max_edges=10, max_cycles=50):
    """Random valid resort network with at most ``max_cycles`` cycles."""
    while True:
        k, pairs = random_digraph_edges(rng, max_nodes, max_edges, self_loops=False)
        nodes = tuple(f"v{i}" for i in range(k))
        lifts, slopes = [], []
        for j, (u, v) in enumerate(pairs):
            if rng.random() < 0.5:
                lifts.append(Lift(f"L{j}", nodes[u], nodes[v], float(rng.uniform(0.05, 1.0)),
                                  float(rng.uniform(0.01, 1.0))))
            else:
                slopes.append(Slope(f"S{j}", nodes[u], nodes[v], float(rng.uniform(0.05, 2.0)),
                                    float(rng.uniform(0.0, 3.0))))
        if not lifts:
            continue
        try:
            net = ResortNetwork(nodes, tuple(lifts), tuple(slopes)).validate()
            cycles = enumerate_cycles(net, limit=max_cycles)
        except (NetworkValidationError, CycleLimitExceeded):
            continue
        return net, cycles


def brute_force_cycles(nodes, edges):
    """Elementary cycles of a multigraph by DFS over all simple paths.

    ``edges`` is a list of (edge_id, tail, head). A cycle is reported once,
    as the edge-id tuple rotated to start at its smallest tail node.
    """
    out_edges = {v: [] for v in nodes}
    for eid, u, v in edges:
        out_edges[u].append((eid, v))
    found = set()

    def dfs(start, node, path, visited):
        for eid, nxt in out_edges[node]:
            if nxt == start:
                found.add(tuple(path + [(eid, node)]))
            elif nxt not in visited and nxt > start:
                dfs(start, nxt, path + [(eid, node)], visited | {nxt})

    # every cycle is found exactly once from its smallest node
    for s in nodes:
        dfs(s, s, [], {s})
    return {tuple(eid for eid, _ in c) for c in found}


def rotate_min(edge_ids, tails):
    k = tails.index(min(tails))
    return tuple(edge_ids[k:]) + tuple(edge_ids[:k])


def simplex_with_zeros(rng, size, p_zero=0.3):
    w = rng.dirichlet(np.ones(size))
    mask = rng.random(size) < p_zero
    if mask.all():
        mask[rng.integers(size)] = False
    w[mask] = 0.0
    return w / w.sum()


def fixture_path(name):
    from importlib.resources import files

    return str(files("cyclequil") / "data" / name)

"""Resort graph: lifts, slopes, cycle strategies and the lift-cycle incidence matrix."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from itertools import islice, product
from pathlib import Path
from typing import Iterable, Sequence, Union

import networkx as nx
import numpy as np

DEFAULT_CYCLE_LIMIT = 10_000


class NetworkError(ValueError):
    """Base class for network loading problems."""


class NetworkParseError(NetworkError):
    pass


class NetworkValidationError(NetworkError):
    pass


class CycleLimitExceeded(NetworkError):
    def __init__(self, limit: int):
        super().__init__(
            f"more than {limit} cycles; pass a larger limit or list cycles explicitly in the network file"
        )
        self.limit = limit


@dataclass(frozen=True)
class Lift:
    id: str
    tail: str
    head: str
    capacity: float
    ride_time: float

    @property
    def duration(self) -> float:
        return self.ride_time


@dataclass(frozen=True)
class Slope:
    id: str
    tail: str
    head: str
    traverse_time: float
    value: float

    @property
    def duration(self) -> float:
        return self.traverse_time


Edge = Union[Lift, Slope]


@dataclass(frozen=True)
class ResortNetwork:
    """Directed multigraph of lifts and slopes.

    ``cycles`` optionally holds an explicit strategy set as lists of edge
    ids; when present it replaces enumeration.
    """

    nodes: tuple[str, ...]
    lifts: tuple[Lift, ...]
    slopes: tuple[Slope, ...]
    cycles: tuple[tuple[str, ...], ...] | None = None
    _edges: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        edges = {}
        for e in (*self.lifts, *self.slopes):
            if e.id in edges:
                raise NetworkValidationError(f"duplicate edge id {e.id!r}")
            edges[e.id] = e
        object.__setattr__(self, "_edges", edges)

    def edge(self, edge_id: str) -> Edge:
        try:
            return self._edges[edge_id]
        except KeyError:
            raise NetworkValidationError(f"unknown edge id {edge_id!r}") from None

    @property
    def edges(self) -> tuple[Edge, ...]:
        return (*self.lifts, *self.slopes)

    def lift_index(self, lift_id: str) -> int:
        for i, lift in enumerate(self.lifts):
            if lift.id == lift_id:
                return i
        raise KeyError(lift_id)

    def with_value_scale(self, scale: float) -> "ResortNetwork":
        """Copy of the network with every slope value multiplied by ``scale``."""
        if not (scale > 0 and math.isfinite(scale)):
            raise ValueError(f"value scale must be positive and finite, got {scale}")
        slopes = tuple(replace(s, value=s.value * scale) for s in self.slopes)
        return ResortNetwork(self.nodes, self.lifts, slopes, self.cycles)

    def digraph(self) -> nx.DiGraph:
        """Simple digraph with the parallel edges collapsed."""
        g = nx.DiGraph()
        g.add_nodes_from(self.nodes)
        for e in self.edges:
            g.add_edge(e.tail, e.head)
        return g

    def validate(self) -> "ResortNetwork":
        if len(set(self.nodes)) != len(self.nodes):
            seen = set()
            dup = next(n for n in self.nodes if n in seen or seen.add(n))
            raise NetworkValidationError(f"duplicate node id {dup!r}")
        node_set = set(self.nodes)
        for e in self.edges:
            for end in (e.tail, e.head):
                if end not in node_set:
                    raise NetworkValidationError(f"edge {e.id!r} references unknown node {end!r}")
        for lift in self.lifts:
            if not (math.isfinite(lift.capacity) and lift.capacity > 0):
                raise NetworkValidationError(
                    f"lift {lift.id!r} must have positive finite capacity, got {lift.capacity}"
                )
            if not (math.isfinite(lift.ride_time) and lift.ride_time >= 0):
                raise NetworkValidationError(
                    f"lift {lift.id!r} must have non-negative finite ride_time, got {lift.ride_time}"
                )
        for s in self.slopes:
            if not (math.isfinite(s.traverse_time) and s.traverse_time > 0):
                raise NetworkValidationError(
                    f"slope {s.id!r} must have positive finite traverse_time, got {s.traverse_time}"
                )
            if not (math.isfinite(s.value) and s.value >= 0):
                raise NetworkValidationError(
                    f"slope {s.id!r} must have non-negative finite value, got {s.value}"
                )
        if self.cycles is not None:
            if not self.cycles:
                raise NetworkValidationError("explicit cycle list is empty")
            for ids in self.cycles:
                _check_closed_walk([self.edge(i) for i in ids])
        elif nx.is_directed_acyclic_graph(self.digraph()):
            raise NetworkValidationError("network has no cycles")
        return self


@dataclass(frozen=True)
class Cycle:
    edges: tuple[Edge, ...]

    @property
    def edge_ids(self) -> tuple[str, ...]:
        return tuple(e.id for e in self.edges)

    @property
    def nodes(self) -> tuple[str, ...]:
        return tuple(e.tail for e in self.edges)

    @property
    def lift_ids(self) -> tuple[str, ...]:
        return tuple(e.id for e in self.edges if isinstance(e, Lift))

    @property
    def value(self) -> float:
        return math.fsum(e.value for e in self.edges if isinstance(e, Slope))

    @property
    def free_time(self) -> float:
        return math.fsum(e.duration for e in self.edges)

    def label(self) -> str:
        return "->".join(self.edge_ids)


@dataclass(frozen=True)
class CycleSet:
    cycles: tuple[Cycle, ...]
    theta: np.ndarray

    def __len__(self) -> int:
        return len(self.cycles)

    @property
    def values(self) -> np.ndarray:
        return np.array([c.value for c in self.cycles])

    @property
    def free_times(self) -> np.ndarray:
        return np.array([c.free_time for c in self.cycles])


def _check_closed_walk(edges: Sequence[Edge]) -> None:
    label = "->".join(e.id for e in edges)
    if not edges:
        raise NetworkValidationError("empty cycle")
    for a, b in zip(edges, (*edges[1:], edges[0])):
        if a.head != b.tail:
            raise NetworkValidationError(f"cycle {label} is not a closed walk at edge {a.id!r}")
    tails = [e.tail for e in edges]
    if len(set(tails)) != len(tails):
        raise NetworkValidationError(f"cycle {label} repeats a node")


def network_from_dict(data: dict) -> ResortNetwork:
    try:
        nodes = tuple(str(n) for n in data["nodes"])
        lifts = tuple(
            Lift(str(d["id"]), str(d["tail"]), str(d["head"]), float(d["capacity"]), float(d["ride_time"]))
            for d in data["lifts"]
        )
        slopes = tuple(
            Slope(str(d["id"]), str(d["tail"]), str(d["head"]), float(d["traverse_time"]), float(d["value"]))
            for d in data["slopes"]
        )
        cycles = data.get("cycles")
        if cycles is not None:
            cycles = tuple(tuple(str(i) for i in c) for c in cycles)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, NetworkError):
            raise
        raise NetworkParseError(f"malformed network description: {exc!r}") from exc
    return ResortNetwork(nodes, lifts, slopes, cycles).validate()


def network_to_dict(net: ResortNetwork) -> dict:
    data = {
        "nodes": list(net.nodes),
        "lifts": [
            {"id": l.id, "tail": l.tail, "head": l.head, "capacity": l.capacity, "ride_time": l.ride_time}
            for l in net.lifts
        ],
        "slopes": [
            {"id": s.id, "tail": s.tail, "head": s.head, "traverse_time": s.traverse_time, "value": s.value}
            for s in net.slopes
        ],
    }
    if net.cycles is not None:
        data["cycles"] = [list(c) for c in net.cycles]
    return data


def load_network(path: str | Path) -> ResortNetwork:
    """Read and validate a network JSON file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise NetworkParseError(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkParseError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise NetworkParseError(f"{path}: top level must be a JSON object")
    return network_from_dict(data)


def _rotate_to_min(edges: Sequence[Edge]) -> tuple[Edge, ...]:
    tails = [e.tail for e in edges]
    k = tails.index(min(tails))
    return tuple(edges[k:]) + tuple(edges[:k])


def _expand_node_cycle(net_edges: dict, node_cycle: Sequence[str]) -> Iterable[tuple[Edge, ...]]:
    hops = list(zip(node_cycle, (*node_cycle[1:], node_cycle[0])))
    return product(*(net_edges[hop] for hop in hops))


def enumerate_cycles(net: ResortNetwork, limit: int = DEFAULT_CYCLE_LIMIT) -> CycleSet:
    """All elementary directed cycles of ``net`` in canonical order.

    Each cycle is rotated to start at its smallest node id and the list is
    sorted by (node sequence, edge id sequence). Parallel edges between the
    same pair of nodes give distinct cycles. An explicit ``cycles`` list in
    the network is returned as given, in file order.

    Raises CycleLimitExceeded once more than ``limit`` cycles are found.
    """
    if net.cycles is not None:
        cycles = [Cycle(tuple(net.edge(i) for i in ids)) for ids in net.cycles]
        if len(cycles) > limit:
            raise CycleLimitExceeded(limit)
    else:
        by_hop: dict[tuple[str, str], list[Edge]] = {}
        for e in net.edges:
            by_hop.setdefault((e.tail, e.head), []).append(e)
        for hop_edges in by_hop.values():
            hop_edges.sort(key=lambda e: e.id)

        def walks():
            for node_cycle in nx.simple_cycles(net.digraph()):
                yield from _expand_node_cycle(by_hop, node_cycle)

        found = list(islice(walks(), limit + 1))
        if len(found) > limit:
            raise CycleLimitExceeded(limit)
        rotated = [_rotate_to_min(w) for w in found]
        rotated.sort(key=lambda w: (tuple(e.tail for e in w), tuple(e.id for e in w)))
        cycles = [Cycle(w) for w in rotated]
    for c in cycles:
        if not c.free_time > 0:
            raise NetworkValidationError(f"cycle {c.label()} has zero queue-free time")
    cycle_set = CycleSet(tuple(cycles), np.empty((0, 0)))
    theta = build_theta(cycle_set, net)
    return CycleSet(tuple(cycles), theta)


def rebind_cycles(cycles: CycleSet, net: ResortNetwork) -> CycleSet:
    """Same cycles with edge data taken from ``net`` (e.g. after rescaling values)."""
    rebound = tuple(Cycle(tuple(net.edge(e.id) for e in c.edges)) for c in cycles.cycles)
    out = CycleSet(rebound, np.empty((0, 0)))
    return CycleSet(rebound, build_theta(out, net))


def build_theta(cycles: CycleSet, net: ResortNetwork) -> np.ndarray:
    """Binary |C| x |U| matrix, entry (c, u) set iff lift u lies on cycle c."""
    index = {lift.id: j for j, lift in enumerate(net.lifts)}
    theta = np.zeros((len(cycles.cycles), len(net.lifts)))
    for i, c in enumerate(cycles.cycles):
        for lift_id in c.lift_ids:
            theta[i, index[lift_id]] = 1.0
    theta.setflags(write=False)
    return theta

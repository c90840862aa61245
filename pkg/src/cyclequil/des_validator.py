"""Agent-level event simulation of skiers circulating on fixed cycles.

Capacities in the network are per unit of total population, so a lift with
capacity ``b`` boards one skier every ``1 / (b * agents)`` time units. Each
lift is a FIFO single server; because service is deterministic, the boarding
time of a skier is fixed the moment they join the queue.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .network_model import CycleSet, Lift, ResortNetwork, rebind_cycles


def allocate_agents(n, agents: int) -> np.ndarray:
    """Integer agent counts per cycle by the largest-remainder rule."""
    n = np.asarray(n, dtype=float)
    if agents < 0:
        raise ValueError("agent count must be non-negative")
    raw = n / n.sum() * agents
    counts = np.floor(raw).astype(int)
    short = agents - int(counts.sum())
    if short > 0:
        # stable sort keeps ties in cycle order
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


@dataclass(frozen=True)
class SimConfig:
    agents: int
    distribution: tuple[float, ...]
    horizon: float
    warmup: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "distribution", tuple(float(x) for x in self.distribution))
        if self.agents <= 0:
            raise ValueError("need at least one agent")
        if self.warmup is not None and not (0 <= self.warmup < self.horizon):
            raise ValueError("warmup must lie in [0, horizon)")

    def counts(self) -> np.ndarray:
        return allocate_agents(self.distribution, self.agents)

    def resolved_warmup(self, cycles: CycleSet) -> float:
        if self.warmup is not None:
            return self.warmup
        warmup = 5.0 * float(cycles.free_times.max())
        if warmup >= self.horizon:
            raise ValueError(f"default warmup {warmup:g} is not below horizon {self.horizon:g}")
        return warmup


@dataclass
class SimStats:
    lift_ids: tuple[str, ...]
    mean_wait: np.ndarray
    throughput: np.ndarray
    completed_cycles: np.ndarray
    arrivals: np.ndarray
    boardings: np.ndarray
    queue_start: np.ndarray
    queue_end: np.ndarray
    window: tuple[float, float]
    agents: int

    def to_dict(self) -> dict:
        return {
            "lift_ids": list(self.lift_ids),
            "mean_wait": [None if math.isnan(x) else float(x) for x in self.mean_wait],
            "throughput": self.throughput.tolist(),
            "completed_cycles": self.completed_cycles.tolist(),
            "arrivals": self.arrivals.tolist(),
            "boardings": self.boardings.tolist(),
            "queue_start": self.queue_start.tolist(),
            "queue_end": self.queue_end.tolist(),
            "window": list(self.window),
            "agents": self.agents,
        }


def simulate(net: ResortNetwork, cycles: CycleSet, config: SimConfig, seed: int = 0) -> SimStats:
    """Run the simulation and measure lift statistics over ``[warmup, horizon)``.

    Agents start at uniformly random points (by time) along their cycle.
    ``throughput`` is boardings per unit time divided by the number of
    agents, i.e. on the same scale as the model's lift flows.
    """
    cycles = rebind_cycles(cycles, net)
    n = np.asarray(config.distribution, dtype=float)
    if n.size != len(cycles):
        raise ValueError(f"distribution has {n.size} entries, expected {len(cycles)}")
    counts = config.counts()
    start, stop = config.resolved_warmup(cycles), float(config.horizon)
    rng = np.random.default_rng(seed)

    lift_pos = {lift.id: j for j, lift in enumerate(net.lifts)}
    interval = [1.0 / (lift.capacity * config.agents) for lift in net.lifts]
    next_free = [-math.inf] * len(net.lifts)
    arr_log: list[list[float]] = [[] for _ in net.lifts]
    board_log: list[list[float]] = [[] for _ in net.lifts]
    completed = np.zeros(len(cycles), dtype=int)

    routes = []
    for c in cycles.cycles:
        routes.append([(lift_pos[e.id] if isinstance(e, Lift) else -1, e.duration) for e in c.edges])

    events: list[tuple[float, int, int, int]] = []
    agent_cycle = np.repeat(np.arange(len(cycles)), counts)
    seq = 0
    for agent, ci in enumerate(agent_cycle):
        route = routes[ci]
        total = cycles.cycles[ci].free_time
        pos = rng.uniform(0.0, total)
        acc = 0.0
        for k, (_, dur) in enumerate(route):
            if pos < acc + dur or k == len(route) - 1:
                # mid-edge: arrive at the end of edge k
                events.append((acc + dur - pos, seq, agent, (k + 1) % len(route)))
                seq += 1
                break
            acc += dur
    heapq.heapify(events)

    while events:
        time, _, agent, k = heapq.heappop(events)
        if time >= stop:
            break
        ci = agent_cycle[agent]
        route = routes[ci]
        if k == 0 and time >= start:
            completed[ci] += 1
        lift, dur = route[k]
        if lift >= 0:
            board = max(time, next_free[lift])
            next_free[lift] = board + interval[lift]
            arr_log[lift].append(time)
            board_log[lift].append(board)
            done = board + dur
        else:
            done = time + dur
        heapq.heappush(events, (done, seq, agent, (k + 1) % len(route)))
        seq += 1

    span = stop - start
    m = len(net.lifts)
    mean_wait = np.full(m, np.nan)
    throughput = np.zeros(m)
    arrivals = np.zeros(m, dtype=int)
    boardings = np.zeros(m, dtype=int)
    q_start = np.zeros(m, dtype=int)
    q_end = np.zeros(m, dtype=int)
    for j in range(m):
        arr = np.asarray(arr_log[j])
        brd = np.asarray(board_log[j])
        inside = (arr >= start) & (arr < stop)
        arrivals[j] = int(inside.sum())
        if arrivals[j]:
            mean_wait[j] = float(np.mean(brd[inside] - arr[inside]))
        boardings[j] = int(((brd >= start) & (brd < stop)).sum())
        q_start[j] = int(((arr < start) & (brd >= start)).sum())
        q_end[j] = int(((arr < stop) & (brd >= stop)).sum())
        throughput[j] = boardings[j] / span / config.agents
    return SimStats(
        lift_ids=tuple(lift.id for lift in net.lifts),
        mean_wait=mean_wait,
        throughput=throughput,
        completed_cycles=completed,
        arrivals=arrivals,
        boardings=boardings,
        queue_start=q_start,
        queue_end=q_end,
        window=(start, stop),
        agents=config.agents,
    )

"""Competitive equilibrium over cycles via the Extragradient method."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .network_model import CycleSet, ResortNetwork, rebind_cycles
from .queue_steady_state import DEFAULT_TOL, QueueProblem, QueueSolution, solve

log = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-12

UtilityFn = Callable[[np.ndarray], np.ndarray]


def project_simplex(x) -> np.ndarray:
    """Euclidean projection onto the unit simplex (sort and threshold).

    Points already on the simplex (within ``SIMPLEX_TOL`` on the sum) are
    returned unchanged.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot project a non-finite vector")
    if x.min() >= 0 and abs(x.sum() - 1.0) <= SIMPLEX_TOL:
        return x.copy()
    u = np.sort(x)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, x.size + 1)
    rho = np.flatnonzero(u - css / k > 0)[-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(x - theta, 0.0)


def check_distribution(n, size: int | None = None, tol: float = 1e-9) -> np.ndarray:
    n = np.asarray(n, dtype=float).reshape(-1)
    if size is not None and n.size != size:
        raise ValueError(f"distribution has {n.size} entries, expected {size}")
    if not np.all(np.isfinite(n)) or n.min() < 0:
        raise ValueError("distribution entries must be finite and non-negative")
    if abs(n.sum() - 1.0) > tol:
        raise ValueError(f"distribution must sum to 1, got {n.sum():.12g}")
    return n


def gap(n, tau) -> float:
    """max over the simplex of <tau, z - n>; attained at a vertex."""
    n = np.asarray(n, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if n.shape != tau.shape:
        raise ValueError("distribution and utilities differ in length")
    return max(0.0, float(tau.max() - tau @ n))


class UtilityOracle:
    """Cycle utilities value / (free time + queueing time) as a function of n."""

    def __init__(self, net: ResortNetwork, cycles: CycleSet, queue_tol: float = DEFAULT_TOL):
        self.net = net
        self.cycles = cycles = rebind_cycles(cycles, net)
        self.queue_tol = queue_tol
        self.values = cycles.values
        self.free_times = cycles.free_times
        self.capacities = np.array([lift.capacity for lift in net.lifts])
        self.evaluations = 0

    def steady_state(self, n) -> QueueSolution:
        p = QueueProblem(self.cycles.theta, n, self.free_times, self.capacities)
        return solve(p, tol=self.queue_tol)

    def evaluate(self, n) -> tuple[np.ndarray, QueueSolution]:
        self.evaluations += 1
        sol = self.steady_state(n)
        cycle_wait = self.cycles.theta @ sol.t_wait
        return self.values / (self.free_times + cycle_wait), sol

    def __call__(self, n) -> np.ndarray:
        return self.evaluate(n)[0]


def evaluate_utilities(
    net: ResortNetwork, cycles: CycleSet, n, queue_tol: float = DEFAULT_TOL
) -> np.ndarray:
    """Utility of every cycle at ``n``, zero-mass cycles included."""
    n = check_distribution(n, len(cycles))
    return UtilityOracle(net, cycles, queue_tol)(n)


def extragradient_step(n, gamma: float, utility: UtilityFn, tau_n=None):
    """One predictor/corrector step; returns (y, n_next).

    ``tau_n`` may carry an already computed utility at ``n`` to save one
    oracle call.
    """
    if gamma < 0:
        raise ValueError("step size must be non-negative")
    n = np.asarray(n, dtype=float)
    if tau_n is None:
        tau_n = utility(n)
    y = project_simplex(n + gamma * np.asarray(tau_n))
    n_next = project_simplex(n + gamma * np.asarray(utility(y)))
    return y, n_next


@dataclass
class EquilibriumRun:
    iterates: list = field(default_factory=list)
    final: np.ndarray | None = None
    converged: bool = False
    gamma: float = 0.0
    iterations: int = 0
    final_tau: np.ndarray | None = None

    @property
    def gaps(self) -> np.ndarray:
        return np.array([g for _, g in self.iterates])

    @property
    def final_gap(self) -> float:
        return self.iterates[-1][1]


def solve_equilibrium(
    utility: UtilityFn,
    n0,
    gamma: float = 0.1,
    max_iter: int = 5000,
    gap_tol: float = 1e-6,
    adaptive: bool = False,
    patience: int = 20,
) -> EquilibriumRun:
    """Run Extragradient from ``n0`` until the gap drops to ``gap_tol``.

    ``utility`` maps a distribution to cycle utilities, typically a
    :class:`UtilityOracle`. In adaptive mode the step is halved once the
    gap has failed to improve on its best value by 0.1% for ``patience``
    consecutive iterations. Non-convergence
    is not an error: ``converged`` is False and the history is kept.
    """
    if gamma <= 0 or gap_tol <= 0:
        raise ValueError("gamma and gap_tol must be positive")
    n = project_simplex(check_distribution(n0))
    tau = np.asarray(utility(n))
    g = gap(n, tau)
    run = EquilibriumRun(iterates=[(n, g)], gamma=gamma)
    best = g
    stalled = 0
    k = 0
    while g > gap_tol and k < max_iter:
        _, n = extragradient_step(n, gamma, utility, tau_n=tau)
        tau = np.asarray(utility(n))
        g = gap(n, tau)
        k += 1
        run.iterates.append((n, g))
        if g < (1.0 - 1e-3) * best:
            best, stalled = g, 0
        else:
            stalled += 1
        if adaptive and stalled >= patience:
            gamma *= 0.5
            best, stalled = g, 0
            log.info("no gap improvement for %d iterations; step size halved to %g", patience, gamma)
    run.final = n
    run.final_tau = tau
    run.converged = g <= gap_tol
    run.gamma = gamma
    run.iterations = k
    return run


def random_distribution(size: int, rng: np.random.Generator) -> np.ndarray:
    return rng.dirichlet(np.ones(size))


def monotonicity_violation_rate(utility: UtilityFn, size: int, pairs: int, rng: np.random.Generator) -> float:
    """Fraction of random pairs with <tau(n) - tau(m), n - m> > 0.

    A monotone (congestion-like) utility map never produces a violation.
    """
    bad = 0
    for _ in range(pairs):
        n = random_distribution(size, rng)
        m = random_distribution(size, rng)
        if float((utility(n) - utility(m)) @ (n - m)) > 1e-12:
            bad += 1
    return bad / pairs if pairs else 0.0

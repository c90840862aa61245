"""Steady state of the closed point-queue network for a fixed user distribution.

Waiting times ``t`` are the multipliers of the lift capacity constraints in

    min_{f >= 0}  <t_hat, f> - <n, log f>   s.t.  theta^T f <= b,

and are found by maximizing the concave dual

    g(t) = <n, log(t_hat + theta t)> - <b, t>,   t >= 0,

whose gradient is the capacity excess ``theta^T (n / s) - b`` with
``s = t_hat + theta t``. Cycle flows are recovered as ``f = n / s``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

MASS_EPS = 1e-12
DEFAULT_TOL = 1e-10

RESIDUAL_NAMES = ("time_to_flow", "lift_flow", "complementarity", "capacity", "nonnegativity")


class InfeasibleProblem(ValueError):
    pass


class QueueNotConverged(RuntimeError):
    def __init__(self, solution: "QueueSolution"):
        worst = max(solution.kkt_residuals.values())
        super().__init__(
            f"queue solver stopped after {solution.iterations} iterations with max KKT residual {worst:.3e}"
        )
        self.solution = solution


class NoFeasibleCase(ValueError):
    pass


@dataclass(frozen=True)
class QueueProblem:
    theta: np.ndarray
    n: np.ndarray
    t_hat: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        theta = np.atleast_2d(np.asarray(self.theta, dtype=float))
        n = np.asarray(self.n, dtype=float).reshape(-1)
        t_hat = np.asarray(self.t_hat, dtype=float).reshape(-1)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if theta.shape != (n.size, b.size) or t_hat.size != n.size:
            raise ValueError(
                f"inconsistent shapes: theta {theta.shape}, n {n.shape}, t_hat {t_hat.shape}, b {b.shape}"
            )
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "t_hat", t_hat)
        object.__setattr__(self, "b", b)

    @classmethod
    def from_network(cls, cycle_set, net, n) -> "QueueProblem":
        b = np.array([lift.capacity for lift in net.lifts])
        return cls(cycle_set.theta, np.asarray(n, dtype=float), cycle_set.free_times, b)

    def retained(self, mass_eps: float = MASS_EPS) -> np.ndarray:
        """Indices of cycles that carry mass."""
        return np.flatnonzero(self.n > mass_eps)


@dataclass
class QueueSolution:
    f_cycle: np.ndarray
    f_lift: np.ndarray
    t_wait: np.ndarray
    kkt_residuals: dict = field(default_factory=dict)
    iterations: int = 0
    case: str | None = None

    @property
    def max_residual(self) -> float:
        return max(self.kkt_residuals.values()) if self.kkt_residuals else math.nan

    def to_dict(self) -> dict:
        out = {
            "f_cycle": self.f_cycle.tolist(),
            "f_lift": self.f_lift.tolist(),
            "t_wait": self.t_wait.tolist(),
            "residuals": dict(self.kkt_residuals),
            "iterations": self.iterations,
        }
        if self.case is not None:
            out["case"] = self.case
        return out


def verify_kkt(p: QueueProblem, s: QueueSolution, mass_eps: float = MASS_EPS) -> dict:
    """Max-norm residuals of the steady-state system.

    Cycles carrying no mass are excluded from the time/flow balance. A
    massive cycle with non-positive flow makes the balance undefined; it is
    skipped there and reported as an infinite non-negativity violation.
    """
    theta, n, t_hat, b = p.theta, p.n, p.t_hat, p.b
    f, fu, t = s.f_cycle, s.f_lift, s.t_wait
    if f.shape != n.shape or fu.shape != b.shape or t.shape != b.shape:
        raise ValueError("solution dimensions do not match the problem")
    massive = n > mass_eps
    ok = massive & (f > 0)
    if ok.any():
        balance = t_hat[ok] + theta[ok] @ t - n[ok] / f[ok]
        r_time = float(np.max(np.abs(balance)))
    else:
        r_time = 0.0
    nonneg = max(0.0, -float(f.min(initial=0.0)), -float(t.min(initial=0.0)))
    if (massive & ~(f > 0)).any():
        nonneg = math.inf
    return {
        "time_to_flow": r_time,
        "lift_flow": float(np.max(np.abs(theta.T @ f - fu), initial=0.0)),
        "complementarity": float(np.max(np.abs(t * (fu - b)), initial=0.0)),
        "capacity": max(0.0, float(np.max(fu - b, initial=0.0))),
        "nonnegativity": nonneg,
    }


def _dual_value(theta, n, t_hat, b, t) -> float:
    return float(n @ np.log(t_hat + theta @ t) - b @ t)


def _kkt_gap(t, grad) -> float:
    return max(float(np.max(np.abs(t * grad), initial=0.0)), float(np.max(grad, initial=0.0)))


def _projected_newton(theta, n, t_hat, b, t, tol, max_iter, sigma=1e-4):
    """Ascent on the dual with a projected Newton direction on the free lifts.

    Falls back to a projected gradient step whenever backtracking on the
    Newton direction fails. Returns (t, iterations, residual).
    """
    g = _dual_value(theta, n, t_hat, b, t)
    it = 0
    res = math.inf
    for it in range(max_iter + 1):
        s = t_hat + theta @ t
        f = n / s
        grad = theta.T @ f - b
        res = _kkt_gap(t, grad)
        if res <= tol or it == max_iter:
            break

        # lifts pinned at zero whose capacity is slack
        width = float(np.linalg.norm(t - np.maximum(0.0, t + grad)))
        eps = min(1e-3, width)
        pinned = (t <= eps) & (grad < 0)
        free = ~pinned

        w = n / s**2
        d = np.zeros_like(t)
        if free.any():
            th_f = theta[:, free]
            hess = (th_f * w[:, None]).T @ th_f
            # damping keeps a step along lift combinations the cycles cannot tell apart
            mu = float(np.max(np.abs(grad[free])))
            hess[np.diag_indices_from(hess)] += mu
            d[free] = np.linalg.lstsq(hess, grad[free], rcond=None)[0]
        if pinned.any():
            diag = np.maximum((theta[:, pinned] ** 2 * w[:, None]).sum(axis=0), 1e-12)
            d[pinned] = grad[pinned] / diag

        accepted = False
        alpha = 1.0
        for _ in range(40):
            cand = np.maximum(0.0, t + alpha * d)
            g_cand = _dual_value(theta, n, t_hat, b, cand)
            gain = float(grad @ (cand - t))
            if g_cand >= g + sigma * gain and gain >= 0:
                accepted = True
                break
            # increments below rounding noise: keep the full Newton step
            if alpha == 1.0 and 0 <= gain < 1e-13 * (1.0 + abs(g)):
                cand_grad = theta.T @ (n / (t_hat + theta @ cand)) - b
                if _kkt_gap(cand, cand_grad) < res:
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            alpha = 1.0
            for _ in range(60):
                cand = np.maximum(0.0, t + alpha * grad)
                g_cand = _dual_value(theta, n, t_hat, b, cand)
                if g_cand >= g + sigma * float(grad @ (cand - t)):
                    accepted = True
                    break
                alpha *= 0.5
        if not accepted:
            log.debug("dual line search stalled at residual %.3e", res)
            break
        t, g = cand, g_cand
    return t, it, res


def solve(
    p: QueueProblem,
    tol: float = DEFAULT_TOL,
    max_iter: int = 200,
    t0: np.ndarray | None = None,
    mass_eps: float = MASS_EPS,
) -> QueueSolution:
    """Steady-state cycle flows, lift flows and waiting times for ``p``.

    Cycles with mass below ``mass_eps`` are dropped and get zero flow. A lift
    crossed only by dropped cycles gets zero waiting time.

    Raises InfeasibleProblem for non-positive capacities or free times, and
    QueueNotConverged (carrying the last iterate) if the KKT residuals are
    still above ``tol`` after ``max_iter`` iterations.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if np.any(~(p.b > 0)):
        raise InfeasibleProblem(f"lift capacities must be positive, got {p.b.tolist()}")
    if np.any(~(p.t_hat > 0)):
        raise InfeasibleProblem("cycle free times must be positive")
    if np.any(p.n < 0) or not np.all(np.isfinite(p.n)):
        raise ValueError("cycle masses must be finite and non-negative")

    keep = p.retained(mass_eps)
    theta_k = p.theta[keep]
    lifts = np.flatnonzero(theta_k.any(axis=0)) if keep.size else np.array([], dtype=int)

    t_full = np.zeros(p.b.size)
    iterations = 0
    if lifts.size:
        theta_r = theta_k[:, lifts]
        start = np.zeros(lifts.size) if t0 is None else np.maximum(0.0, np.asarray(t0, float)[lifts])
        t_r, iterations, _ = _projected_newton(
            theta_r, p.n[keep], p.t_hat[keep], p.b[lifts], start, tol, max_iter
        )
        t_full[lifts] = t_r

    f_cycle = np.zeros(p.n.size)
    f_cycle[keep] = p.n[keep] / (p.t_hat[keep] + theta_k @ t_full)
    f_lift = p.theta.T @ f_cycle
    sol = QueueSolution(f_cycle, f_lift, t_full, iterations=iterations)
    sol.kkt_residuals = verify_kkt(p, sol, mass_eps)
    if sol.max_residual > tol:
        raise QueueNotConverged(sol)
    return sol


def _assemble(theta, n, t_hat, b, f_cycle, t_wait, case) -> QueueSolution:
    p = QueueProblem(theta, n, t_hat, b)
    f_cycle = np.asarray(f_cycle, dtype=float)
    sol = QueueSolution(f_cycle, p.theta.T @ f_cycle, np.asarray(t_wait, dtype=float), case=case)
    sol.kkt_residuals = verify_kkt(p, sol)
    return sol


TWO_LIFT_THETA = np.array([[1.0, 1.0], [0.0, 1.0]])


def solve_two_lift_analytic(n, t_hat, b, feas_tol: float = 1e-12) -> QueueSolution:
    """Closed-form steady state of the two-sequential-lift network.

    Cycle 1 rides both lifts, cycle 2 only the upper one. Each of the four
    queue patterns (which lifts have a queue) is solved in closed form and
    the feasible one is returned. ``case`` is one of "00", "+0", "++", "0+".
    """
    n1, n2 = map(float, n)
    h1, h2 = map(float, t_hat)
    b1, b2 = map(float, b)
    if min(n1, n2) <= 0 or min(h1, h2) <= 0 or min(b1, b2) <= 0:
        raise ValueError("two-lift oracle needs positive masses, free times and capacities")
    slack = lambda x: x >= -feas_tol * max(1.0, abs(x))
    args = (TWO_LIFT_THETA, (n1, n2), (h1, h2), (b1, b2))

    # no queues
    f1, f2 = n1 / h1, n2 / h2
    if slack(b1 - f1) and slack(b2 - f1 - f2):
        return _assemble(*args, (f1, f2), (0.0, 0.0), "00")

    # queue on the lower lift only
    t1 = n1 / b1 - h1
    f2 = n2 / h2
    if t1 > 0 and slack(b2 - b1 - f2):
        return _assemble(*args, (b1, f2), (t1, 0.0), "+0")

    # both lifts saturated
    if b2 > b1:
        t2 = n2 / (b2 - b1) - h2
        t1 = n1 / b1 - n2 / (b2 - b1) - h1 + h2
        if t1 > 0 and t2 > 0:
            return _assemble(*args, (b1, b2 - b1), (t1, t2), "++")

    # queue on the upper lift only:
    # b2 = n1/(t + h1) + n2/(t + h2)  <=>  b2 t^2 + B t + C = 0
    qb = b2 * (h1 + h2) - n1 - n2
    qc = b2 * h1 * h2 - n1 * h2 - n2 * h1
    disc = qb * qb - 4.0 * b2 * qc
    if disc >= 0:
        q = -0.5 * (qb + math.copysign(math.sqrt(disc), qb))
        roots = [q / b2] + ([qc / q] if q != 0 else [])
        for t2 in sorted(roots, reverse=True):
            if t2 > 0:
                f1 = n1 / (t2 + h1)
                f2 = n2 / (t2 + h2)
                if slack(b1 - f1):
                    return _assemble(*args, (f1, f2), (0.0, t2), "0+")
    raise NoFeasibleCase(f"no queue pattern is feasible for n={n}, t_hat={t_hat}, b={b}")


def solve_parallel_slopes_analytic(n, t_hat, b: float, xtol: float = 1e-12) -> QueueSolution:
    """Steady state of one lift feeding ``k`` parallel slopes.

    With a queue the waiting time is the root of
    ``sum_c n_c / (t_hat_c + t) = b``, found by bisection; the left side
    decreases strictly in ``t``.
    """
    n = np.asarray(n, dtype=float).reshape(-1)
    t_hat = np.asarray(t_hat, dtype=float).reshape(-1)
    b = float(b)
    if np.any(n <= 0) or np.any(t_hat <= 0) or b <= 0:
        raise ValueError("parallel-slopes oracle needs positive masses, free times and capacity")
    theta = np.ones((n.size, 1))

    def excess(t):
        return math.fsum(n / (t_hat + t)) - b

    if excess(0.0) <= 0:
        return _assemble(theta, n, t_hat, [b], n / t_hat, [0.0], "free")
    # sum_c n_c / (t_hat_c + t) < sum(n) / t, so the root lies below sum(n) / b
    lo, hi = 0.0, math.fsum(n) / b
    for _ in range(200):
        if hi - lo <= xtol * max(1.0, hi):
            break
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
    t = 0.5 * (lo + hi)
    return _assemble(theta, n, t_hat, [b], n / (t_hat + t), [t], "queue")

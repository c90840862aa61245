"""``cyclequil`` command line.

Exit codes: 0 success, 2 invalid input, 3 numerical non-convergence.
With ``--output DIR`` every command writes its artifacts plus
``manifest.json``; otherwise results go to stdout and the manifest to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .des_validator import SimConfig, simulate
from .equilibrium_solver import UtilityOracle, random_distribution, solve_equilibrium
from .network_model import (
    DEFAULT_CYCLE_LIMIT,
    CycleSet,
    NetworkError,
    ResortNetwork,
    enumerate_cycles,
    load_network,
)
from .queue_steady_state import DEFAULT_TOL, QueueNotConverged, QueueProblem, solve

log = logging.getLogger("cyclequil")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


class InputError(Exception):
    pass


def _setup_logging() -> None:
    level = os.environ.get("CYCLEQUIL_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def parse_distribution(arg: str, size: int) -> np.ndarray:
    """Comma/whitespace separated numbers, or ``@path`` to a file holding them."""
    text = arg
    if arg.startswith("@"):
        try:
            text = Path(arg[1:]).read_text(encoding="utf-8")
        except OSError as exc:
            raise InputError(f"cannot read distribution file: {exc}") from exc
        text = text.strip()
        if text.startswith("["):
            text = text.strip("[]")
    try:
        values = [float(tok) for tok in text.replace(",", " ").split()]
    except ValueError as exc:
        raise InputError(f"malformed distribution {arg!r}") from exc
    n = np.array(values)
    if n.size != size:
        raise InputError(f"distribution has {n.size} entries but the network has {size} cycles")
    if not np.all(np.isfinite(n)) or n.min() < 0:
        raise InputError("distribution entries must be non-negative numbers")
    if abs(n.sum() - 1.0) > 1e-9:
        raise InputError(f"distribution must sum to 1 (got {n.sum():.12g})")
    return n


def _load(args) -> tuple[ResortNetwork, CycleSet]:
    net = load_network(args.network)
    scale = getattr(args, "value_scale", 1.0)
    if scale != 1.0:
        net = net.with_value_scale(scale)
    return net, enumerate_cycles(net, limit=args.limit)


def _labels(cycles: CycleSet) -> list[str]:
    return [c.label() for c in cycles.cycles]


# --- commands -------------------------------------------------------------


def cmd_cycles(args, out: dict) -> int:
    net, cycles = _load(args)
    lines = ["index\tvalue\tfree_time\tedges"]
    for i, c in enumerate(cycles.cycles):
        lines.append(f"{i + 1}\t{c.value!r}\t{c.free_time!r}\t{c.label()}")
    text = "\n".join(lines) + "\n"
    out["cycles.tsv"] = text
    out["cycles.json"] = _dumps(
        {
            "cycles": [list(c.edge_ids) for c in cycles.cycles],
            "values": cycles.values.tolist(),
            "free_times": cycles.free_times.tolist(),
            "lifts": [lift.id for lift in net.lifts],
            "theta": cycles.theta.astype(int).tolist(),
        }
    )
    out["_stdout"] = text
    return EXIT_OK


def cmd_steady_state(args, out: dict) -> int:
    net, cycles = _load(args)
    n = parse_distribution(args.distribution, len(cycles))
    oracle = UtilityOracle(net, cycles, queue_tol=args.tol)
    code = EXIT_OK
    try:
        tau, sol = oracle.evaluate(n)
    except QueueNotConverged as exc:
        log.error("%s", exc)
        sol = exc.solution
        tau = oracle.values / (oracle.free_times + cycles.theta @ sol.t_wait)
        code = EXIT_NUMERIC
    result = {
        "cycles": _labels(cycles),
        "lifts": [lift.id for lift in net.lifts],
        "distribution": n.tolist(),
        **sol.to_dict(),
        "utilities": tau.tolist(),
        "tol": args.tol,
        "converged": code == EXIT_OK,
    }
    out["steady_state.json"] = out["_stdout"] = _dumps(result)
    return code


def _equilibrium_job(job):
    net, cycles, n0, params = job
    oracle = UtilityOracle(net, cycles)
    return solve_equilibrium(oracle, n0, **params)


def cmd_equilibrium(args, out: dict) -> int:
    for name in ("gamma", "gap_tol"):
        if not getattr(args, name) > 0:
            raise InputError(f"--{name.replace('_', '-')} must be positive")
    if args.max_iter < 0 or args.n_starts < 1 or args.jobs < 1:
        raise InputError("--max-iter must be >= 0; --n-starts and --jobs must be >= 1")
    net, cycles = _load(args)
    size = len(cycles)
    rng = np.random.default_rng(args.seed)
    starts = [random_distribution(size, rng) for _ in range(args.n_starts)]
    if args.distribution:
        starts[0] = parse_distribution(args.distribution, size)
    params = dict(gamma=args.gamma, max_iter=args.max_iter, gap_tol=args.gap_tol, adaptive=args.adaptive)
    jobs = [(net, cycles, n0, params) for n0 in starts]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            runs = list(pool.map(_equilibrium_job, jobs))
    else:
        runs = [_equilibrium_job(j) for j in jobs]

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["run_id", "iteration", "gap"] + [f"n_{i + 1}" for i in range(size)])
    for run_id, run in enumerate(runs):
        for k, (n, g) in enumerate(run.iterates):
            writer.writerow([run_id, k, repr(g)] + [repr(float(x)) for x in n])
    out["iterates.csv"] = buf.getvalue()

    finals = np.array([r.final for r in runs])
    spread = float(np.max(np.abs(finals[:, None, :] - finals[None, :, :])))
    all_converged = all(r.converged for r in runs)
    result = {
        "cycles": _labels(cycles),
        "value_scale": args.value_scale,
        "runs": [
            {
                "run_id": i,
                "start": starts[i].tolist(),
                "final": r.final.tolist(),
                "utilities": r.final_tau.tolist(),
                "gap": r.final_gap,
                "iterations": r.iterations,
                "converged": r.converged,
                "gamma": r.gamma,
            }
            for i, r in enumerate(runs)
        ],
        "max_spread": spread,
        "converged": all_converged,
    }
    out["equilibrium.json"] = out["_stdout"] = _dumps(result)
    if not all_converged:
        log.warning("%d of %d starts did not reach gap %g", sum(not r.converged for r in runs), len(runs), args.gap_tol)
    return EXIT_OK if all_converged else EXIT_NUMERIC


def cmd_simulate(args, out: dict) -> int:
    net, cycles = _load(args)
    n = parse_distribution(args.distribution, len(cycles))
    try:
        config = SimConfig(args.agents, tuple(n), args.horizon, args.warmup)
        config.resolved_warmup(cycles)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    stats = simulate(net, cycles, config, seed=args.seed)
    comparison, code = [], EXIT_OK
    try:
        analytic = solve(QueueProblem.from_network(cycles, net, n)).t_wait
    except QueueNotConverged as exc:
        log.error("%s", exc)
        analytic, code = exc.solution.t_wait, EXIT_NUMERIC
    rows = ["lift\tsimulated\tanalytic\trel_error"]
    for j, lift in enumerate(net.lifts):
        sim = stats.mean_wait[j]
        ana = float(analytic[j])
        rel = abs(sim - ana) / ana if ana > 0 and not np.isnan(sim) else None
        comparison.append(
            {
                "lift": lift.id,
                "simulated_wait": None if np.isnan(sim) else float(sim),
                "analytic_wait": ana,
                "abs_error": None if np.isnan(sim) else float(abs(sim - ana)),
                "rel_error": rel,
            }
        )
        rows.append(f"{lift.id}\t{sim:.6g}\t{ana:.6g}\t{'-' if rel is None else f'{rel:.3%}'}")
    result = {"cycles": _labels(cycles), "stats": stats.to_dict(), "comparison": comparison}
    out["simulation.json"] = out["_stdout"] = _dumps(result)
    out["_stderr"] = "\n".join(rows) + "\n"
    return code


COMMANDS = {
    "cycles": cmd_cycles,
    "steady-state": cmd_steady_state,
    "equilibrium": cmd_equilibrium,
    "simulate": cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cyclequil", description="Closed-network cycle equilibrium toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, value_scale=False):
        p.add_argument("--network", required=True, help="network JSON file")
        p.add_argument("--limit", type=int, default=DEFAULT_CYCLE_LIMIT, help="maximum number of cycles")
        p.add_argument("--output", type=Path, help="directory for result files and manifest.json")
        if value_scale:
            p.add_argument("--value-scale", type=float, default=1.0, help="multiply all slope values")

    p = sub.add_parser("cycles", help="list the cycle strategy set")
    common(p)

    p = sub.add_parser("steady-state", help="queue steady state for a distribution")
    common(p, value_scale=True)
    p.add_argument("--distribution", required=True, help="comma separated masses or @file")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)

    p = sub.add_parser("equilibrium", help="Extragradient equilibrium search")
    common(p, value_scale=True)
    p.add_argument("--distribution", help="start of run 0 (others random)")
    p.add_argument("--gamma", type=float, default=0.1)
    p.add_argument("--max-iter", type=int, default=5000)
    p.add_argument("--gap-tol", type=float, default=1e-6)
    p.add_argument("--n-starts", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--adaptive", action="store_true", help="halve gamma when the gap stops improving")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("simulate", help="agent simulation against the analytic steady state")
    common(p, value_scale=True)
    p.add_argument("--distribution", required=True)
    p.add_argument("--agents", type=int, default=10_000)
    p.add_argument("--horizon", type=float, default=40.0)
    p.add_argument("--warmup", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest", type=Path)
    p.add_argument("--output", type=Path, help="write to this directory instead of the recorded one")
    return parser


def _replay(args) -> int:
    try:
        manifest = json.loads(args.manifest.read_text(encoding="utf-8"))
        argv = list(manifest["argv"])
    except (OSError, ValueError, KeyError) as exc:
        print(f"cyclequil: cannot read manifest: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if args.output is not None:
        if "--output" in argv:
            i = argv.index("--output")
            del argv[i : i + 2]
        argv += ["--output", str(args.output)]
    return main(argv)


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "replay":
        return _replay(args)

    out: dict[str, str] = {}
    began = time.perf_counter()
    try:
        code = COMMANDS[args.command](args, out)
    except (InputError, NetworkError, ValueError) as exc:
        print(f"cyclequil: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except QueueNotConverged as exc:
        print(f"cyclequil: error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    duration = time.perf_counter() - began

    params = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k not in ("command",)}
    manifest = {
        "command": args.command,
        "network": str(args.network),
        "parameters": params,
        "seed": params.get("seed"),
        "version": __version__,
        "argv": argv,
        "exit_code": code,
        "duration_seconds": duration,
    }
    stdout = out.pop("_stdout", "")
    stderr = out.pop("_stderr", "")
    sys.stdout.write(stdout)
    if stderr:
        sys.stderr.write(stderr)
    if args.output is not None:
        for name, text in out.items():
            write_atomic(args.output / name, text)
        write_atomic(args.output / "manifest.json", _dumps(manifest))
    else:
        sys.stderr.write("manifest " + json.dumps(manifest) + "\n")
    return code


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()

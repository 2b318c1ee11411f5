"""End-to-end pipeline: product, assembly, conic solve, extraction, recovery."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .extract import ExtractionError, ModeSequence, Trajectory, edge_masses, mode_sequence, policy_rollout, value_functions
from .gmp import GmpSolution, HybridSystem, assemble, solve
from .recover import RecoveredTrajectory, RecoveryError, recover
from .scenario import Scenario

log = logging.getLogger(__name__)

SOLVED = ("optimal", "inaccurate")


@dataclass
class RunReport:
    scenario: str
    status: str  # ok | solver_error | recovery_error
    degree: int
    gmp_objective: float | None = None
    qcqp_objective: float | None = None
    gap: float | None = None
    mode_sequence: list = field(default_factory=list)
    likelihood: float | None = None
    solve_times: dict = field(default_factory=dict)
    statuses: dict = field(default_factory=dict)
    num_modes: int = 0
    num_edges: int = 0
    recovery: dict = field(default_factory=dict)
    rollout: dict = field(default_factory=dict)
    seed: int = 0
    message: str = ""

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        return path


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        return float(v) if np.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


@dataclass
class RunResult:
    report: RunReport
    scenario: Scenario
    hybrid: HybridSystem | None = None
    solution: GmpSolution | None = None
    sequence: ModeSequence | None = None
    recovered: RecoveredTrajectory | None = None
    trajectory: Trajectory | None = None  # Bellman rollout

    @property
    def ok(self) -> bool:
        return self.report.status == "ok"


def run_scenario(
    scn: Scenario,
    degree: int | None = None,
    recover_trajectory: bool = True,
    solver: str | None = None,
    seed: int = 0,
    export_sdpa=None,
    rollout: bool | None = None,
) -> RunResult:
    """Run the full pipeline; failures are reported in the result, not raised.

    Scenario input errors (:class:`~occuplan.scenario.ScenarioError`) are
    raised, since no report can be formed without a hybrid system.
    """
    o = scn.options
    d = o["degree"] if degree is None else int(degree)
    rep = RunReport(scn.name, "ok", d, seed=seed)
    res = RunResult(rep, scn)
    times = rep.solve_times
    t0 = time.perf_counter()
    hs = scn.hybrid(seed)
    times["product"] = time.perf_counter() - t0
    res.hybrid = hs
    rep.num_modes, rep.num_edges = len(hs.modes), len(hs.transitions)

    t = time.perf_counter()
    prog = assemble(hs, d, o["pair_bounds"])
    times["assembly"] = time.perf_counter() - t
    if export_sdpa is not None:
        from .sdpa import export_standard_form

        export_standard_form(prog, export_sdpa)
    t = time.perf_counter()
    sol = solve(prog, solver or o["solver"])
    times["conic_solve"] = time.perf_counter() - t
    res.solution = sol
    rep.statuses["gmp"] = sol.status
    if sol.status not in SOLVED:
        rep.status = "solver_error"
        rep.message = f"conic solver returned {sol.status} ({sol.solver_stats.get('raw_status')})"
        times["total"] = time.perf_counter() - t0
        return res
    rep.gmp_objective = sol.objective_value

    try:
        seq = mode_sequence(edge_masses(sol), hs.transitions, hs.source, hs.target)
    except ExtractionError as exc:
        rep.status = "solver_error"
        rep.message = f"mode extraction failed: {exc}"
        times["total"] = time.perf_counter() - t0
        return res
    res.sequence = seq
    rep.mode_sequence = [str(m) for m in seq.modes]
    rep.likelihood = seq.likelihood

    if recover_trajectory:
        t = time.perf_counter()
        try:
            rec = recover(hs, seq, o["N"])
        except RecoveryError as exc:
            rep.status = "recovery_error"
            rep.statuses["recovery"] = "failed"
            rep.message = f"recovery failed: {exc}"
        else:
            res.recovered = rec
            rep.qcqp_objective = rec.total_cost
            rep.gap = rec.total_cost - sol.objective_value
            rep.statuses["recovery"] = "converged" if rec.converged else "max_iter"
            rep.recovery = {
                "iterations": rec.iterations,
                "converged": rec.converged,
                "history": [float(v) for v in rec.history],
                "step_sizes": rec.h.tolist(),
                "dynamics_residual": rec.dynamics_residual,
            }
        times["recovery"] = time.perf_counter() - t

    want_rollout = o["rollout"] if rollout is None else rollout
    if not recover_trajectory and rollout is None:
        want_rollout = True
    if want_rollout:
        t = time.perf_counter()
        rep.rollout = _rollout(res)
        rep.statuses["rollout"] = rep.rollout.get("status", "skipped")
        times["rollout"] = time.perf_counter() - t
    times["total"] = time.perf_counter() - t0
    return res


def _rollout(res: RunResult) -> dict:
    scn, hs = res.scenario, res.hybrid
    x0, xT = scn.x0, scn.terminal_point
    if x0 is None or xT is None:
        return {"status": "skipped", "reason": "rollout needs a point start and a point terminal state"}
    o = scn.options
    V = value_functions(res.solution)
    radius = float(o["goal_radius"])

    def stop(x):
        return float(np.linalg.norm(x - xT)) <= radius

    try:
        traj = policy_rollout(hs, res.sequence, V, x0, float(o["dt"]), float(o["T_max"]), stop)
    except (ValueError, KeyError) as exc:
        return {"status": "skipped", "reason": str(exc)}
    res.trajectory = traj
    dist = float(np.linalg.norm(traj.x[-1] - xT)) if len(traj.x) else None
    return {"status": traj.status, "final_time": float(traj.t[-1]) if len(traj.t) else 0.0, "final_distance": dist, "steps": len(traj.t)}


def write_outputs(res: RunResult, out_dir) -> dict:
    """Write report.json, trajectory.csv and plot.svg into ``out_dir``."""
    from .svg import plot_run

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"report": res.report.write(out / "report.json")}
    traj = res.recovered.to_trajectory() if res.recovered is not None else res.trajectory
    if traj is not None:
        paths["trajectory"] = traj.to_csv(out / "trajectory.csv")
    else:
        n = res.scenario.state_dim
        m = res.scenario.input_dim
        Trajectory(np.zeros(0), [], np.zeros((0, n)), np.zeros((0, m)), "empty").to_csv(out / "trajectory.csv")
        paths["trajectory"] = out / "trajectory.csv"
    paths["plot"] = plot_run(res, out / "plot.svg")
    return paths

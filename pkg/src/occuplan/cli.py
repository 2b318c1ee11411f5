"""Command line interface: ``occuplan run`` and ``occuplan bench``."""
from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_INPUT, EXIT_SOLVER = 0, 2, 3
SANDWICH_TOL = 1e-6

log = logging.getLogger("occuplan")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="occuplan", description="Moment relaxations for hybrid optimal control.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="solve one scenario")
    r.add_argument("scenario", help="scenario JSON file")
    r.add_argument("--degree", type=int, default=None, help="relaxation degree d (default: scenario option, else 2)")
    r.add_argument("--no-recover", action="store_true", help="skip trajectory recovery; roll out the Bellman policy instead")
    r.add_argument("--export-sdpa", metavar="PATH", help="write the conic program in SDPA sparse format")
    r.add_argument("--automaton-dot", metavar="PATH", help="write the specification automaton (or mode graph) as DOT")
    r.add_argument("--out", metavar="DIR", help="write report.json, trajectory.csv and plot.svg here")
    r.add_argument("--solver", choices=["clarabel", "scs", "cvxopt"], help="conic solver")
    r.add_argument("--seed", type=int, default=0, help="seed for sampled arrangements")

    b = sub.add_parser("bench", help="solve every scenario in a directory")
    b.add_argument("suite_dir", nargs="?", help="directory of scenario files (default: bundled suite)")
    b.add_argument("--csv", metavar="PATH", help="write the table as CSV")
    b.add_argument("--degree", type=int, default=None)
    b.add_argument("--no-recover", action="store_true")
    b.add_argument("--solver", choices=["clarabel", "scs", "cvxopt"])
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if args.degree is not None and args.degree < 0:
        print("error: --degree must be nonnegative", file=sys.stderr)
        return EXIT_INPUT
    if args.command == "run":
        return cmd_run(args)
    return cmd_bench(args)


def _mode_graph_dot(hs) -> str:
    lines = ["digraph modes {", "  rankdir=LR;"]
    for m in sorted(map(str, hs.modes)):
        lines.append(f'  "{m}";')
    for i, j in hs.transitions:
        lines.append(f'  "{i}" -> "{j}";')
    lines.append("}")
    return "\n".join(lines) + "\n"


def cmd_run(args) -> int:
    from .pipeline import run_scenario, write_outputs
    from .scenario import ScenarioError, load

    for extra in (args.export_sdpa, args.automaton_dot):
        if extra:
            Path(extra).parent.mkdir(parents=True, exist_ok=True)
    try:
        scn = load(args.scenario)
        res = run_scenario(
            scn, degree=args.degree, recover_trajectory=not args.no_recover,
            solver=args.solver, seed=args.seed, export_sdpa=args.export_sdpa,
        )
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if args.automaton_dot:
        text = scn.automaton.to_dot() if scn.automaton is not None else _mode_graph_dot(res.hybrid)
        Path(args.automaton_dot).write_text(text)
    if args.out:
        write_outputs(res, args.out)
    rep = res.report
    print(_summary(rep))
    if rep.status != "ok":
        print(f"error: {rep.message}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def _fmt(v, spec=".6g"):
    return "-" if v is None or (isinstance(v, float) and not np.isfinite(v)) else format(v, spec)


def _summary(rep) -> str:
    lines = [
        f"scenario      {rep.scenario}",
        f"status        {rep.status}  (gmp: {rep.statuses.get('gmp', '-')}, recovery: {rep.statuses.get('recovery', '-')})",
        f"degree        {rep.degree}",
        f"modes/edges   {rep.num_modes}/{rep.num_edges}",
        f"GMP bound     {_fmt(rep.gmp_objective)}",
        f"QCQP cost     {_fmt(rep.qcqp_objective)}",
        f"gap           {_fmt(rep.gap)}",
        f"sequence      {' -> '.join(rep.mode_sequence)}",
        "times [s]     " + ", ".join(f"{k} {v:.2f}" for k, v in rep.solve_times.items()),
    ]
    if rep.rollout:
        lines.append(f"rollout       {rep.rollout.get('status')}")
    return "\n".join(lines)


BENCH_COLUMNS = ["scenario", "status", "gmp", "qcqp", "gap", "sandwich", "modes", "edges", "seq_len", "t_assembly", "t_solve", "t_recovery", "message"]


def bench_one(path, degree=None, recover_trajectory=True, solver=None, seed=0) -> dict:
    """One table row; all failures are captured in the row."""
    from .pipeline import run_scenario
    from .scenario import ScenarioError, load

    row = dict.fromkeys(BENCH_COLUMNS)
    row["scenario"] = Path(path).stem
    try:
        scn = load(path)
        row["scenario"] = scn.name
        rep = run_scenario(scn, degree=degree, recover_trajectory=recover_trajectory, solver=solver, seed=seed).report
    except ScenarioError as exc:
        row.update(status="input_error", message=str(exc))
        return row
    except Exception as exc:  # noqa: BLE001  keep the suite going
        row.update(status="error", message=f"{type(exc).__name__}: {exc}")
        return row
    t = rep.solve_times
    row.update(
        status=rep.status, gmp=rep.gmp_objective, qcqp=rep.qcqp_objective, gap=rep.gap,
        modes=rep.num_modes, edges=rep.num_edges, seq_len=max(len(rep.mode_sequence) - 1, 0),
        t_assembly=t.get("assembly"), t_solve=t.get("conic_solve"), t_recovery=t.get("recovery"),
        message=rep.message, sequence=rep.mode_sequence,
    )
    if rep.gmp_objective is not None and rep.qcqp_objective is not None:
        q = rep.qcqp_objective
        row["sandwich"] = bool(rep.gmp_objective <= q + SANDWICH_TOL * (1 + abs(q)))
    return row


def run_bench(suite_dir, degree=None, recover_trajectory=True, solver=None, seed=0, jobs=1) -> list:
    files = sorted(Path(suite_dir).glob("*.json"))
    kw = dict(degree=degree, recover_trajectory=recover_trajectory, solver=solver, seed=seed)
    if jobs > 1 and len(files) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_bench_star, [(f, kw) for f in files]))
    else:
        rows = [bench_one(f, **kw) for f in files]
    return sorted(rows, key=lambda r: (r["scenario"], str(r.get("message") or "")))


def _bench_star(args):
    f, kw = args
    return bench_one(f, **kw)


def format_table(rows) -> str:
    heads = ["scenario", "status", "GMP", "QCQP", "gap", "ok", "modes", "edges", "assembly[s]", "solve[s]", "recovery[s]"]
    body = []
    for r in rows:
        body.append([
            r["scenario"], r["status"], _fmt(r["gmp"]), _fmt(r["qcqp"]), _fmt(r["gap"], ".3g"),
            {True: "yes", False: "NO", None: "-"}[r["sandwich"]],
            _fmt(r["modes"], "d"), _fmt(r["edges"], "d"),
            _fmt(r["t_assembly"], ".2f"), _fmt(r["t_solve"], ".2f"), _fmt(r["t_recovery"], ".2f"),
        ])
    widths = [max(len(h), *(len(b[i]) for b in body)) if body else len(h) for i, h in enumerate(heads)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(heads, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for b in body:
        lines.append("  ".join(c.ljust(w) for c, w in zip(b, widths)))
    ok = sum(r["status"] == "ok" for r in rows)
    bad = [r["scenario"] for r in rows if r["sandwich"] is False]
    lines.append("")
    lines.append(f"{len(rows)} scenarios, {ok} ok, {len(rows) - ok} failed; bound ordering violated on: {', '.join(bad) or 'none'}")
    return "\n".join(lines)


def to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=BENCH_COLUMNS, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r.get(k) is None else r[k]) for k in BENCH_COLUMNS})
    return buf.getvalue()


def cmd_bench(args) -> int:
    from .scenario import bundled_dir

    suite = Path(args.suite_dir) if args.suite_dir else bundled_dir()
    if not suite.is_dir():
        print(f"error: {suite} is not a directory", file=sys.stderr)
        return EXIT_INPUT
    rows = run_bench(suite, args.degree, not args.no_recover, args.solver, args.seed, max(1, args.jobs))
    print(format_table(rows))
    if args.csv:
        Path(args.csv).write_text(to_csv(rows))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: run scenarios and sweeps, emit traces and figures."""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

from . import scenario as scn
from .simulate import (CONTROLLERS, ScenarioConfig, audit_invariance,
                       audit_to_csv, run_scenario, summary_to_text,
                       trace_to_csv)


@dataclass(frozen=True)
class RunManifest:
    scenario_path: str
    controllers: tuple
    out_dir: str
    seed: Optional[int] = None
    headings: tuple = ()
    jobs: int = 1
    emit_figure_data: bool = False
    strict: bool = True


def _run_id(controller: str, heading: Optional[float]) -> str:
    if heading is None:
        return controller
    return f"{controller}_h{heading:+.4f}".replace("+", "p").replace("-", "m")


def _execute_run(args):
    config, outdir, emit_figures, strict = args
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    trace = run_scenario(config)
    (outdir / "trace.csv").write_text(trace_to_csv(trace))
    (outdir / "audit.csv").write_text(audit_to_csv(trace))
    (outdir / "summary.txt").write_text(summary_to_text(trace))
    report = audit_invariance(trace)
    lines = [f"steps_checked = {report.steps_checked}",
             f"violations = {len(report.violations)}"]
    for v in report.violations:
        lines.append(f"step {v.step} chain {v.chain} {v.check}: {v.value}")
    (outdir / "audit_report.txt").write_text("\n".join(lines) + "\n")
    if emit_figures:
        from . import plots
        (outdir / "figure_data.csv").write_text(plots.figure_data_csv(trace))
        plots.render_figures(trace, outdir)
    return str(outdir), len(report.violations)


def run_cli(manifest: RunManifest) -> int:
    """Execute every (controller, heading) pair; returns the process exit
    status (0 on success; audit violations fail in strict mode)."""
    try:
        text = Path(manifest.scenario_path).read_text()
    except OSError as exc:
        print(f"error: cannot read scenario: {exc}", file=sys.stderr)
        return 1
    try:
        base = scn.parse_scenario(text)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if manifest.seed is not None:
        base = replace(base, seed=manifest.seed)

    headings = manifest.headings or (None,)
    jobs = []
    for controller in manifest.controllers:
        for heading in headings:
            config = replace(base, controller=controller)
            if heading is not None:
                config = config.with_heading(heading)
            outdir = Path(manifest.out_dir) / _run_id(controller, heading)
            jobs.append((config, str(outdir), manifest.emit_figure_data,
                         manifest.strict))

    results = []
    try:
        if manifest.jobs > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=manifest.jobs) as pool:
                results = list(pool.map(_execute_run, jobs))
        else:
            results = [_execute_run(job) for job in jobs]
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    total_violations = 0
    for outdir, n_violations in results:
        total_violations += n_violations
        flag = "" if n_violations == 0 else f"  [{n_violations} audit violations]"
        print(f"completed {outdir}{flag}")
    if manifest.strict and total_violations > 0:
        print(f"error: {total_violations} invariance audit violation(s)",
              file=sys.stderr)
        return 2
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sacbf",
        description="Sampling-aware barrier-function scenario runner",
    )
    parser.add_argument("--scenario", required=True,
                        help="scenario configuration file")
    parser.add_argument("--controller", default="all",
                        choices=["hocbf", "sacbf", "r-sacbf", "all"],
                        help="controller kind to run (default: all)")
    parser.add_argument("--heading", type=float, action="append", default=[],
                        help="initial heading override in radians (repeatable)")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the scenario seed")
    parser.add_argument("--jobs", type=int, default=1,
                        help="number of concurrent runs")
    parser.add_argument("--emit-figure-data", action="store_true",
                        help="write per-chain (t, psi) series and render "
                             "figures alongside the CSV output")
    parser.add_argument("--no-strict", action="store_true",
                        help="do not fail the process on audit violations")
    return parser


def main(argv=None) -> None:
    args = build_parser().parse_args(argv)
    if args.controller == "all":
        controllers = CONTROLLERS
    else:
        controllers = (args.controller.replace("-", "_"),)
    manifest = RunManifest(
        scenario_path=args.scenario,
        controllers=controllers,
        out_dir=args.out,
        seed=args.seed,
        headings=tuple(args.heading),
        jobs=max(1, args.jobs),
        emit_figure_data=args.emit_figure_data,
        strict=not args.no_strict,
    )
    sys.exit(run_cli(manifest))


if __name__ == "__main__":
    main()

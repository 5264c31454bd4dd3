"""Scenario-driven command line front end.

Loads or generates an instance, runs the requested schemes on the same
initial point, writes one trace file per scheme plus a comparison summary.

Exit codes: 0 success, 1 convergence failure, 2 configuration error,
3 I/O error.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

from .applications import (
    gen_energy_management,
    gen_random_qp,
    gen_scopf_qp,
    gen_state_estimation,
    oracle_solve,
)
from .applications.oracle import OracleFailureError
from .fileio import (
    RunSummary,
    Scenario,
    SchemeRun,
    ScenarioError,
    emit_traces,
    parse_scenario,
    read_problem,
    relative_objective_gap,
    write_json_doc,
    write_problem,
    write_summary,
)
from .prox import IllPosedSubproblemError
from .solvers import CONVERGED, DIVERGED, ConfigurationError, solve

__all__ = ["GENERATORS", "run_scenario", "main"]

EXIT_OK = 0
EXIT_NOT_CONVERGED = 1
EXIT_CONFIG = 2
EXIT_IO = 3

# generator name -> (callable, required parameter names)
GENERATORS = {
    "state_estimation": (
        gen_state_estimation,
        ("areas", "boundary_size", "attack_cardinality", "beta"),
    ),
    "energy_management": (
        gen_energy_management,
        ("generators", "loads", "nets", "horizon"),
    ),
    "scopf": (gen_scopf_qp, ("buses", "contingencies")),
    "random_qp": (gen_random_qp, ()),
}


def _resolve_instance(scenario: Scenario):
    """Load or generate the instance; returns (instance, problem, oracle_obj)."""
    if scenario.source_kind == "file":
        problem = read_problem(scenario.path)
        oracle_obj = None
        if scenario.compute_oracle:
            oracle_obj = oracle_solve(problem).objective_star
        return None, problem, oracle_obj
    name = scenario.generator
    if name not in GENERATORS:
        raise ScenarioError(
            f"unknown generator {name!r}; valid generators: "
            f"{', '.join(sorted(GENERATORS))}"
        )
    fn, required = GENERATORS[name]
    missing = [p for p in required if p not in scenario.params]
    if missing:
        raise ScenarioError(
            f"generator {name!r} missing required parameter(s): {', '.join(missing)}"
        )
    want_oracle = scenario.compute_oracle is not False
    try:
        instance, problem = fn(
            **scenario.params, seed=scenario.seed, with_oracle=want_oracle
        )
    except TypeError as e:
        raise ScenarioError(f"generator {name!r}: {e}") from None
    except ValueError as e:
        raise ScenarioError(f"generator {name!r}: {e}") from None
    oracle_obj = (
        instance.oracle.objective_star if instance.oracle is not None else None
    )
    return instance, problem, oracle_obj


def run_scenario(
    scenario: Scenario,
    out_dir,
    workers: int | None = None,
    allow_divergence=frozenset(),
) -> RunSummary:
    """Execute every scheme on one instance and write traces plus a summary.

    Solver errors are recorded per scheme without aborting the remaining
    schemes. I/O errors propagate as ``OSError``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    instance, problem, oracle_obj = _resolve_instance(scenario)
    clock = (lambda: 0.0) if scenario.timing == "deterministic" else time.perf_counter

    instance_doc = {"source": scenario.source_kind}
    if scenario.source_kind == "file":
        instance_doc["file"] = scenario.path
    else:
        instance_doc.update(
            {
                "generator": scenario.generator,
                "params": scenario.params,
                "seed": scenario.seed,
            }
        )
        write_problem(problem, out / "instance.json")
        if instance is not None and hasattr(instance, "ground_truth"):
            truth = dict(instance.ground_truth())
            truth["format_version"] = 1
            write_json_doc(truth, out / "ground_truth.json")

    ext = "csv" if scenario.trace_format == "csv" else "jsonl"
    entries = []
    for spec in scenario.schemes:
        config = replace(spec.config)
        if workers is not None:
            config.parallel_workers = workers
        try:
            report = solve(problem, config, clock=clock)
        except (ConfigurationError, IllPosedSubproblemError, OracleFailureError) as e:
            entries.append(
                SchemeRun(
                    label=spec.label,
                    scheme=spec.config.scheme,
                    status="error",
                    iterations=0,
                    objective=math.nan,
                    residual=math.nan,
                    wall_ms=math.nan,
                    error=f"{type(e).__name__}: {e}",
                )
            )
            continue
        emit_traces(report, scenario.trace_format, out / f"{spec.label}.{ext}")
        last = report.trace[-1]
        gap = (
            relative_objective_gap(last.objective, oracle_obj)
            if oracle_obj is not None
            else None
        )
        entries.append(
            SchemeRun(
                label=spec.label,
                scheme=spec.config.scheme,
                status=report.status,
                iterations=report.iterations,
                objective=last.objective,
                residual=last.primal_residual_norm,
                wall_ms=last.wall_ms,
                relative_gap=gap,
            )
        )
    summary = RunSummary(
        entries=entries, oracle_objective=oracle_obj, instance=instance_doc
    )
    write_summary(summary, out / "summary.json")
    return summary


def _summary_ok(summary: RunSummary, allow_divergence) -> bool:
    for e in summary.entries:
        if e.status == CONVERGED:
            continue
        if e.status == DIVERGED and (
            e.label in allow_divergence or e.scheme in allow_divergence
        ):
            continue
        return False
    return True


def _print_summary(summary: RunSummary, file=None) -> None:
    if file is None:
        file = sys.stdout
    if summary.oracle_objective is not None:
        print(f"oracle objective: {summary.oracle_objective:.12g}", file=file)
    for e in summary.entries:
        if e.error is not None:
            print(f"{e.label}: error ({e.error})", file=file)
            continue
        gap = f" gap={e.relative_gap:.3e}" if e.relative_gap is not None else ""
        print(
            f"{e.label}: {e.status} iters={e.iterations} "
            f"objective={e.objective:.12g} residual={e.residual:.3e}"
            f" wall_ms={e.wall_ms:.1f}{gap}",
            file=file,
        )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="blockadmm",
        description="Run block-splitting schemes on a scenario and emit traces.",
    )
    parser.add_argument("--scenario", required=True, help="scenario JSON file")
    parser.add_argument(
        "--out", default=None, help="output directory (default: scenario output_dir or 'out')"
    )
    parser.add_argument(
        "--workers", type=int, default=None, help="override parallel workers per scheme"
    )
    parser.add_argument(
        "--allow-divergence",
        default="",
        help="comma-separated scheme names/labels whose divergence is expected",
    )
    parser.add_argument("--quiet", action="store_true", help="suppress the summary table")
    args = parser.parse_args(argv)

    try:
        scenario = parse_scenario(args.scenario)
    except ScenarioError as e:
        print(f"scenario error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO

    out_dir = args.out or scenario.output_dir or "out"
    allow = frozenset(s.strip() for s in args.allow_divergence.split(",") if s.strip())
    try:
        summary = run_scenario(
            scenario, out_dir, workers=args.workers, allow_divergence=allow
        )
    except ScenarioError as e:
        print(f"scenario error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO

    if not args.quiet:
        _print_summary(summary)
    return EXIT_OK if _summary_ok(summary, allow) else EXIT_NOT_CONVERGED


if __name__ == "__main__":
    sys.exit(main())

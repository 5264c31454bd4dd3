"""Versioned file formats: problems, traces, scenarios, summaries.

All formats are structured text. Floating-point values are written with 17
significant digits so that parsing an emitted file recovers them exactly;
non-finite values appear as the strings ``"inf"``, ``"-inf"``, ``"nan"``
(in CSV traces, as the bare tokens ``inf``/``nan``, which ``float`` parses).
Unbounded box coordinates serialize as ``null``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .problem import BlockSpec, ProblemSpec, assemble_problem
from .prox import LocalSet, ObjectiveHandle
from .solvers import SCHEMES, ConfigurationError, SolveReport, SolverConfig, TraceRecord

__all__ = [
    "FORMAT_VERSION",
    "ScenarioError",
    "write_problem",
    "read_problem",
    "write_trace",
    "emit_traces",
    "read_trace",
    "write_json_doc",
    "SchemeSpec",
    "Scenario",
    "parse_scenario",
    "scenario_from_doc",
    "SchemeRun",
    "RunSummary",
    "relative_objective_gap",
    "write_summary",
]

FORMAT_VERSION = 1

TRACE_HEADER = "k,objective,primal_residual,iterate_change,wall_ms"


class ScenarioError(ValueError):
    """A scenario or problem document is malformed."""


# ---------------------------------------------------------------------------
# JSON emission with explicit float formatting
# ---------------------------------------------------------------------------


def _float_str(x: float) -> str:
    return format(float(x), ".17g")


def _emit(value, indent: int) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        x = float(value)
        if math.isnan(x):
            return '"nan"'
        if math.isinf(x):
            return '"inf"' if x > 0 else '"-inf"'
        return _float_str(x)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple, np.ndarray)):
        items = [_emit(v, indent) for v in value]
        return "[" + ", ".join(items) + "]"
    if isinstance(value, dict):
        pad = " " * (indent + 2)
        lines = ["{"]
        entries = []
        for key, v in value.items():
            entries.append(f"{pad}{json.dumps(str(key))}: {_emit(v, indent + 2)}")
        lines.append(",\n".join(entries))
        lines.append(" " * indent + "}")
        return "\n".join(lines)
    raise TypeError(f"cannot serialize value of type {type(value).__name__}")


def write_json_doc(doc: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_emit(doc, 0))
        fh.write("\n")


def _read_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as e:
            raise ScenarioError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from None


def _parse_special(v):
    if isinstance(v, str):
        return float(v)
    return v


# ---------------------------------------------------------------------------
# problem interchange files
# ---------------------------------------------------------------------------


def _set_to_doc(s: LocalSet) -> dict:
    if s.kind == "unbounded":
        return {"kind": "unbounded"}
    if s.kind == "nonneg":
        return {"kind": "nonneg"}
    lo = [None if np.isneginf(v) else float(v) for v in s.lo]
    hi = [None if np.isposinf(v) else float(v) for v in s.hi]
    return {"kind": "box", "lo": lo, "hi": hi}


def _set_from_doc(doc) -> LocalSet:
    kind = doc.get("kind")
    if kind == "unbounded":
        return LocalSet.unbounded()
    if kind == "nonneg":
        return LocalSet.nonneg()
    if kind == "box":
        lo = [(-math.inf if v is None else float(v)) for v in doc["lo"]]
        hi = [(math.inf if v is None else float(v)) for v in doc["hi"]]
        return LocalSet.box(lo, hi)
    raise ScenarioError(f"unknown local set kind {kind!r}")


def _handle_to_doc(h: ObjectiveHandle) -> dict:
    if h.kind == "zero":
        return {"kind": "zero"}
    if h.kind == "quadratic":
        return {
            "kind": "quadratic",
            "Q": [[float(v) for v in row] for row in h.Q],
            "q": [float(v) for v in h.q],
            "offset": h.offset,
        }
    if h.kind == "l1":
        doc = {"kind": "l1", "beta": h.beta}
        if h.weights is not None:
            doc["weights"] = [float(v) for v in h.weights]
        return doc
    if h.kind == "indicator":
        return {"kind": "indicator", "set": _set_to_doc(h.local_set)}
    if h.kind == "sum":
        return {"kind": "sum", "terms": [_handle_to_doc(t) for t in h.terms]}
    raise ScenarioError(f"unknown objective kind {h.kind!r}")


def _handle_from_doc(doc) -> ObjectiveHandle:
    kind = doc.get("kind")
    if kind == "zero":
        return ObjectiveHandle.zero()
    if kind == "quadratic":
        return ObjectiveHandle.quadratic(
            np.array(doc["Q"], dtype=float),
            np.array(doc["q"], dtype=float),
            offset=float(doc.get("offset", 0.0)),
        )
    if kind == "l1":
        weights = doc.get("weights")
        if weights is not None:
            weights = np.array(weights, dtype=float)
        return ObjectiveHandle.l1(float(doc["beta"]), weights=weights)
    if kind == "indicator":
        return ObjectiveHandle.indicator(_set_from_doc(doc["set"]))
    if kind == "sum":
        return ObjectiveHandle.sum_of(*(_handle_from_doc(t) for t in doc["terms"]))
    raise ScenarioError(f"unknown objective kind {kind!r}")


def write_problem(problem: ProblemSpec, path) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "blocks": [
            {
                "objective": _handle_to_doc(b.objective),
                "A": [[float(v) for v in row] for row in b.coupling],
                "local_set": _set_to_doc(b.local_set),
            }
            for b in problem.blocks
        ],
        "c": [float(v) for v in problem.rhs],
    }
    write_json_doc(doc, path)


def read_problem(path) -> ProblemSpec:
    doc = _read_json(path)
    if doc.get("format_version") != FORMAT_VERSION:
        raise ScenarioError(f"{path}: unsupported format_version")
    try:
        blocks = [
            BlockSpec(
                objective=_handle_from_doc(b["objective"]),
                coupling=np.array(b["A"], dtype=float),
                local_set=_set_from_doc(b["local_set"]),
            )
            for b in doc["blocks"]
        ]
        return assemble_problem(blocks, np.array(doc["c"], dtype=float))
    except KeyError as e:
        raise ScenarioError(f"{path}: missing field {e}") from None


# ---------------------------------------------------------------------------
# trace files
# ---------------------------------------------------------------------------


def write_trace(trace: list[TraceRecord], path, fmt: str = "csv") -> None:
    if fmt not in ("csv", "jsonl"):
        raise ValueError(f"unknown trace format {fmt!r}")
    with open(path, "w", encoding="utf-8") as fh:
        if fmt == "csv":
            fh.write(TRACE_HEADER + "\n")
            for rec in trace:
                fh.write(
                    f"{rec.k},{_float_str(rec.objective)},"
                    f"{_float_str(rec.primal_residual_norm)},"
                    f"{_float_str(rec.iterate_change)},{_float_str(rec.wall_ms)}\n"
                )
        else:
            for rec in trace:
                fh.write(
                    '{"k": %d, "objective": %s, "primal_residual": %s, '
                    '"iterate_change": %s, "wall_ms": %s}\n'
                    % (
                        rec.k,
                        _emit(rec.objective, 0),
                        _emit(rec.primal_residual_norm, 0),
                        _emit(rec.iterate_change, 0),
                        _emit(rec.wall_ms, 0),
                    )
                )


def emit_traces(report: SolveReport, fmt: str, path) -> None:
    """Write a solve report's trace to ``path`` in the requested format."""
    write_trace(report.trace, path, fmt)


def read_trace(path) -> list[TraceRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    out = []
    if lines and lines[0] == TRACE_HEADER:
        for ln in lines[1:]:
            parts = ln.split(",")
            out.append(
                TraceRecord(
                    k=int(parts[0]),
                    objective=float(parts[1]),
                    primal_residual_norm=float(parts[2]),
                    iterate_change=float(parts[3]),
                    wall_ms=float(parts[4]),
                )
            )
        return out
    for ln in lines:
        doc = json.loads(ln)
        out.append(
            TraceRecord(
                k=int(doc["k"]),
                objective=_parse_special(doc["objective"]),
                primal_residual_norm=_parse_special(doc["primal_residual"]),
                iterate_change=_parse_special(doc["iterate_change"]),
                wall_ms=_parse_special(doc["wall_ms"]),
            )
        )
    return out


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------

_SCHEME_KEYS = {
    "scheme",
    "label",
    "rho",
    "alpha",
    "gamma",
    "prox_policy",
    "eps_abs",
    "eps_rel",
    "max_iter",
    "parallel_workers",
}

_SCENARIO_KEYS = {
    "format_version",
    "instance",
    "schemes",
    "output_dir",
    "trace_format",
    "timing",
    "oracle",
}


@dataclass(eq=False)
class SchemeSpec:
    """One requested run: unique label plus its solver configuration."""

    label: str
    config: SolverConfig


@dataclass(eq=False)
class Scenario:
    """Parsed scenario: instance source, scheme list, output options."""

    source_kind: str  # "file" | "generator"
    path: str | None = None
    generator: str | None = None
    params: dict = field(default_factory=dict)
    seed: int | None = None
    schemes: list[SchemeSpec] = field(default_factory=list)
    output_dir: str | None = None
    trace_format: str = "csv"
    timing: str = "wall"
    compute_oracle: bool | None = None


def scenario_from_doc(doc: dict) -> Scenario:
    """Validate a scenario document and fill configuration defaults.

    Defaults follow :class:`SolverConfig`: ``rho = 1``, ``eps_abs = 1e-8``,
    ``eps_rel = 1e-6``, ``max_iter = 100000``.
    """
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a JSON object")
    unknown = set(doc) - _SCENARIO_KEYS
    if unknown:
        raise ScenarioError(f"unknown scenario field(s): {', '.join(sorted(unknown))}")
    if doc.get("format_version", FORMAT_VERSION) != FORMAT_VERSION:
        raise ScenarioError("unsupported scenario format_version")

    inst = doc.get("instance")
    if not isinstance(inst, dict):
        raise ScenarioError("field 'instance' is required and must be an object")
    if "file" in inst:
        source = Scenario(source_kind="file", path=str(inst["file"]))
    elif "generator" in inst:
        params = inst.get("params", {})
        if not isinstance(params, dict):
            raise ScenarioError("field 'instance.params' must be an object")
        seed = inst.get("seed", 0)
        if not isinstance(seed, int):
            raise ScenarioError("field 'instance.seed' must be an integer")
        source = Scenario(
            source_kind="generator",
            generator=str(inst["generator"]),
            params=dict(params),
            seed=seed,
        )
    else:
        raise ScenarioError("field 'instance' needs either 'file' or 'generator'")

    schemes_doc = doc.get("schemes")
    if not isinstance(schemes_doc, list) or not schemes_doc:
        raise ScenarioError("field 'schemes' must be a nonempty list")
    labels = set()
    for idx, entry in enumerate(schemes_doc):
        if not isinstance(entry, dict) or "scheme" not in entry:
            raise ScenarioError(f"schemes[{idx}]: each entry needs a 'scheme' field")
        unknown = set(entry) - _SCHEME_KEYS
        if unknown:
            raise ScenarioError(
                f"schemes[{idx}]: unknown field(s): {', '.join(sorted(unknown))}"
            )
        name = entry["scheme"]
        if name not in SCHEMES:
            raise ScenarioError(
                f"schemes[{idx}]: unknown scheme {name!r}; "
                f"valid schemes: {', '.join(SCHEMES)}"
            )
        overrides = {k: v for k, v in entry.items() if k not in ("scheme", "label")}
        config = SolverConfig(scheme=name, **overrides)
        try:
            config.validate()
        except ConfigurationError as e:
            raise ScenarioError(f"schemes[{idx}] ({name}): {e}") from None
        label = str(entry.get("label", name))
        if label in labels:
            raise ScenarioError(f"schemes[{idx}]: duplicate label {label!r}")
        labels.add(label)
        source.schemes.append(SchemeSpec(label=label, config=config))

    if "output_dir" in doc and doc["output_dir"] is not None:
        source.output_dir = str(doc["output_dir"])
    fmt = doc.get("trace_format", "csv")
    if fmt not in ("csv", "jsonl"):
        raise ScenarioError("field 'trace_format' must be 'csv' or 'jsonl'")
    source.trace_format = fmt
    timing = doc.get("timing", "wall")
    if timing not in ("wall", "deterministic"):
        raise ScenarioError("field 'timing' must be 'wall' or 'deterministic'")
    source.timing = timing
    if "oracle" in doc:
        if not isinstance(doc["oracle"], bool):
            raise ScenarioError("field 'oracle' must be a boolean")
        source.compute_oracle = doc["oracle"]
    return source


def parse_scenario(path) -> Scenario:
    return scenario_from_doc(_read_json(path))


# ---------------------------------------------------------------------------
# run summaries
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class SchemeRun:
    """Summary row for one scheme on the scenario's instance."""

    label: str
    scheme: str
    status: str
    iterations: int
    objective: float
    residual: float
    wall_ms: float
    relative_gap: float | None = None
    error: str | None = None


@dataclass(eq=False)
class RunSummary:
    """Comparison summary across the schemes of one scenario run."""

    entries: list[SchemeRun]
    oracle_objective: float | None = None
    instance: dict = field(default_factory=dict)

    def to_doc(self) -> dict:
        doc = {
            "format_version": FORMAT_VERSION,
            "instance": self.instance,
            "oracle_objective": self.oracle_objective,
            "schemes": [
                {
                    "label": e.label,
                    "scheme": e.scheme,
                    "status": e.status,
                    "iterations": e.iterations,
                    "objective": e.objective,
                    "residual": e.residual,
                    "wall_ms": e.wall_ms,
                    "relative_gap": e.relative_gap,
                    "error": e.error,
                }
                for e in self.entries
            ],
        }
        return doc


def relative_objective_gap(objective: float, oracle: float) -> float:
    """``|objective - oracle| / max(1, |oracle|)``."""
    return abs(objective - oracle) / max(1.0, abs(oracle))


def write_summary(summary: RunSummary, path) -> None:
    write_json_doc(summary.to_doc(), path)

"""Instance file formats, run reports, and deterministic serialization.

Flow instances use the DIMACS max-flow conventions: `c` comments,
`p max <nodes> <arcs>` (or `p min` when arcs carry unit costs),
`n <id> s|t` source/sink lines, and `a <tail> <head> <capacity>` arc
lines; `p min` arc lines take a fourth unit-cost field and an optional
fifth length field.  Node ids are 1-based in files and 0-based in
memory.  A `c mode undirected` directive line records the flow
convention so instances round-trip exactly.

Traffic instances use a simple TNTP-like pair of whitespace tables:
network rows `tail head capacity free_flow_time [alpha beta]` and demand
rows `origin destination demand`, `#` comments allowed.
"""

from __future__ import annotations

import json as _json
from dataclasses import dataclass, field

import numpy as np

from .ctap import BPR_ALPHA, BPR_BETA, OdDemand, TrafficNetwork, traffic_network
from .errors import (
    DuplicateProblemLineError,
    InstanceParseError,
    MissingSourceOrSinkError,
    NonPositiveDemandError,
)
from .graph import Graph, Mode, ViolationReport, build_graph

JSON_FLOAT_DIGITS = 17
CSV_FLOAT_DIGITS = 6


def format_float(value: float, digits: int = JSON_FLOAT_DIGITS) -> str:
    return f"{float(value):.{digits}g}"


def _emit(obj, digits: int) -> str:
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, str):
        return _json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(obj, digits)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_emit(v, digits) for v in obj) + "]"
    if isinstance(obj, dict):
        parts = (f"{_json.dumps(str(k))}: {_emit(v, digits)}" for k, v in obj.items())
        return "{" + ", ".join(parts) + "}"
    raise TypeError(f"cannot serialize {type(obj)!r}")


def dumps(obj, digits: int = JSON_FLOAT_DIGITS) -> str:
    """Deterministic JSON: insertion-ordered keys, floats at fixed
    significant digits, no whitespace variation between runs."""
    return _emit(obj, digits) + "\n"


@dataclass(frozen=True)
class FlowInstance:
    graph: Graph
    source: int
    sink: int
    kind: str  # "max" or "min"


def parse_flow_instance(text: str, allow_parallel: bool = False) -> FlowInstance:
    kind = None
    node_count = arc_count = None
    source = sink = None
    mode = Mode.DIRECTED
    arcs: list[tuple] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        tag = fields[0]
        if tag == "c":
            if fields[1:3] == ["mode", "undirected"]:
                mode = Mode.UNDIRECTED
            elif fields[1:3] == ["mode", "directed"]:
                mode = Mode.DIRECTED
            continue
        if tag == "p":
            if kind is not None:
                raise DuplicateProblemLineError("second problem line", line=lineno)
            if len(fields) != 4 or fields[1] not in ("max", "min"):
                raise InstanceParseError(f"bad problem line {line!r}", line=lineno)
            kind = fields[1]
            try:
                node_count, arc_count = int(fields[2]), int(fields[3])
            except ValueError:
                raise InstanceParseError(f"bad problem line {line!r}", line=lineno)
            continue
        if tag == "n":
            if kind is None:
                raise InstanceParseError("node line before problem line", line=lineno)
            if len(fields) != 3 or fields[2] not in ("s", "t"):
                raise InstanceParseError(f"bad node line {line!r}", line=lineno)
            try:
                node = int(fields[1]) - 1
            except ValueError:
                raise InstanceParseError(f"bad node id in {line!r}", line=lineno)
            if fields[2] == "s":
                source = node
            else:
                sink = node
            continue
        if tag == "a":
            if kind is None:
                raise InstanceParseError("arc line before problem line", line=lineno)
            want = (4,) if kind == "max" else (5, 6)
            if len(fields) not in want:
                raise InstanceParseError(
                    f"arc line has {len(fields) - 1} fields, expected "
                    f"{'3' if kind == 'max' else '4 or 5'}",
                    line=lineno,
                )
            try:
                tail, head = int(fields[1]) - 1, int(fields[2]) - 1
                cap = float(fields[3])
                cost = float(fields[4]) if len(fields) > 4 else 0.0
                length = float(fields[5]) if len(fields) > 5 else 1.0
            except ValueError:
                raise InstanceParseError(f"bad arc line {line!r}", line=lineno)
            arcs.append((tail, head, length, cap, cost))
            continue
        raise InstanceParseError(f"unknown line tag {tag!r}", line=lineno)

    if kind is None:
        raise InstanceParseError("missing problem line")
    if source is None or sink is None:
        raise MissingSourceOrSinkError("missing source or sink line")
    if arc_count is not None and arc_count != len(arcs):
        raise InstanceParseError(
            f"problem line declares {arc_count} arcs, file has {len(arcs)}"
        )
    graph = build_graph(node_count, arcs, mode, allow_parallel=allow_parallel)
    return FlowInstance(graph=graph, source=source, sink=sink, kind=kind)


def write_flow_instance(graph: Graph, source: int, sink: int, kind: str | None = None) -> str:
    """Inverse of parse_flow_instance; parse(write(g)) == g exactly."""
    plain = bool(np.all(graph.unit_cost == 0.0) and np.all(graph.length == 1.0))
    if kind is None:
        kind = "max" if plain else "min"
    if kind == "max" and not plain:
        raise ValueError("cannot write costs or lengths under 'p max'")
    lines = [f"c mode {graph.mode.value}", f"p {kind} {graph.node_count} {graph.arc_count}"]
    lines.append(f"n {source + 1} s")
    lines.append(f"n {sink + 1} t")
    lengths_trivial = bool(np.all(graph.length == 1.0))
    for a in graph.arcs:
        row = f"a {a.tail + 1} {a.head + 1} {format_float(a.capacity)}"
        if kind == "min":
            row += f" {format_float(a.unit_cost)}"
            if not lengths_trivial:
                row += f" {format_float(a.length)}"
        lines.append(row)
    return "\n".join(lines) + "\n"


def parse_traffic_instance(network_text: str, demand_text: str):
    """Parse the network/demand table pair into a TrafficNetwork and demands."""
    rows = []
    max_node = 0
    for lineno, raw in enumerate(network_text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) not in (4, 6):
            raise InstanceParseError(
                f"network row has {len(fields)} fields, expected 4 or 6", line=lineno
            )
        try:
            tail, head = int(fields[0]), int(fields[1])
            cap, t0 = float(fields[2]), float(fields[3])
            alpha = float(fields[4]) if len(fields) == 6 else BPR_ALPHA
            beta = float(fields[5]) if len(fields) == 6 else BPR_BETA
        except ValueError:
            raise InstanceParseError(f"bad network row {line!r}", line=lineno)
        max_node = max(max_node, tail, head)
        rows.append((tail - 1, head - 1, t0, cap, alpha, beta))
    if not rows:
        raise InstanceParseError("network file has no rows")
    graph = build_graph(
        max_node, [(t, h, t0, cap) for t, h, t0, cap, _, _ in rows], Mode.DIRECTED
    )
    network = traffic_network(
        graph,
        alpha=[r[4] for r in rows],
        beta=[r[5] for r in rows],
    )

    demands = []
    for lineno, raw in enumerate(demand_text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 3:
            raise InstanceParseError(
                f"demand row has {len(fields)} fields, expected 3", line=lineno
            )
        try:
            origin, dest, amount = int(fields[0]), int(fields[1]), float(fields[2])
        except ValueError:
            raise InstanceParseError(f"bad demand row {line!r}", line=lineno)
        try:
            demands.append(OdDemand(origin - 1, dest - 1, amount))
        except NonPositiveDemandError as exc:
            raise NonPositiveDemandError(f"line {lineno}: {exc}") from exc
    if not demands:
        raise InstanceParseError("demand file has no rows")
    return network, tuple(demands)


def write_traffic_instance(network: TrafficNetwork, demands) -> tuple[str, str]:
    lines = ["# tail head capacity free_flow_time alpha beta"]
    for a in network.graph.arcs:
        lines.append(
            f"{a.tail + 1} {a.head + 1} {format_float(a.capacity)} "
            f"{format_float(network.free_flow_time[a.id])} "
            f"{format_float(network.alpha[a.id])} {format_float(network.beta[a.id])}"
        )
    net_text = "\n".join(lines) + "\n"
    dem_lines = ["# origin destination demand"]
    for d in demands:
        dem_lines.append(f"{d.origin + 1} {d.destination + 1} {format_float(d.demand)}")
    return net_text, "\n".join(dem_lines) + "\n"


def violations_summary(report: ViolationReport, top: int = 10) -> dict:
    worst = [
        {
            "arc": v.arc_id,
            "flow": v.flow,
            "capacity": v.capacity,
            "rel_excess": v.rel_excess,
        }
        for v in report.capacity_violations[:top]
    ]
    return {
        "count": len(report.capacity_violations),
        "max_rel_excess": report.max_rel_excess,
        "worst": worst,
    }


@dataclass
class RunReport:
    """Everything needed to reproduce and audit one solver run."""

    kind: str
    instance: dict
    config: dict
    results: dict
    iterations: int
    wall_time_seconds: float
    violations: dict = field(default_factory=dict)
    trace_file: str | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "instance": self.instance,
            "config": self.config,
            "results": self.results,
            "iterations": self.iterations,
            "wall_time_seconds": self.wall_time_seconds,
            "violations": self.violations,
            "trace_file": self.trace_file,
        }


def _flatten(prefix: str, obj, out: list):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, out)
    elif isinstance(obj, (list, tuple, np.ndarray)):
        for i, v in enumerate(obj):
            _flatten(f"{prefix}[{i}]", v, out)
    else:
        out.append((prefix, obj))


def write_report(report: RunReport, format: str = "json") -> str:
    if format == "json":
        return dumps(report.to_dict())
    if format == "csv":
        rows: list = []
        _flatten("", report.to_dict(), rows)
        lines = ["key,value"]
        for key, value in rows:
            if isinstance(value, (float, np.floating)):
                value = format_float(value, CSV_FLOAT_DIGITS)
            elif value is None:
                value = ""
            lines.append(f"{key},{value}")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {format!r}")


def write_trace_csv(trace) -> str:
    """CSV for either solver trace type (assignment traces add rgap)."""
    if hasattr(trace, "rgap"):
        header = "iteration,l1_change,max_rel_excess,rgap"
        rows = zip(trace.iterations, trace.l1_change, trace.max_rel_excess, trace.rgap)
    else:
        header = "iteration,l1_change,max_rel_excess,linf_change,conservation_residual"
        rows = zip(
            trace.iterations,
            trace.l1_change,
            trace.max_rel_excess,
            trace.linf_change,
            trace.conservation_residual,
        )
    lines = [header]
    for row in rows:
        it, *vals = row
        lines.append(str(it) + "," + ",".join(f"{v:.10g}" for v in vals))
    return "\n".join(lines) + "\n"

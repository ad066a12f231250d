"""Semantic checks of a workflow against a registry.

``check`` never stops at the first problem. It walks every node and edge,
collects every finding, and returns them sorted by category and location so
the output is stable across runs.
"""

from __future__ import annotations

from .diagnostics import Diagnostic, ErrorCategory, Location, Severity, is_executable, sort_diagnostics
from .ir import Workflow, find_cycle, successors
from .registry import Registry, resolve_params

__all__ = ["check", "is_executable"]


def check(w: Workflow, r: Registry) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    schemas = {nid: r.get(n.type_name) for nid, n in w.nodes.items()}

    for nid, node in w.nodes.items():
        schema = schemas[nid]
        if schema is None:
            diags.append(Diagnostic(ErrorCategory.UNKNOWN_FUNCTION,
                                    f"unknown function type {node.type_name!r}", Location(node=nid)))
            continue
        _, param_diags = resolve_params(schema, node.params)
        for d in param_diags:
            param = d.location.param if d.location else None
            diags.append(Diagnostic(d.category, f"{nid}: {d.message}", Location(node=nid, param=param), d.severity))

    fed: set[tuple[str, str]] = set()
    for e in w.edges:
        fed.add((e.dst.node_id, e.dst.port_name))
        src_schema, dst_schema = schemas[e.src.node_id], schemas[e.dst.node_id]
        where = Location(node=e.dst.node_id, port=e.dst.port_name)
        src_port = dst_port = None
        if src_schema is not None:
            src_port = src_schema.output(e.src.port_name)
            if src_port is None:
                diags.append(Diagnostic(ErrorCategory.CONNECTION_ERROR,
                                        f"{e}: {src_schema.type_name} has no output {e.src.port_name!r}", where))
        if dst_schema is not None:
            dst_port = dst_schema.input(e.dst.port_name)
            if dst_port is None:
                diags.append(Diagnostic(ErrorCategory.CONNECTION_ERROR,
                                        f"{e}: {dst_schema.type_name} has no input {e.dst.port_name!r}", where))
        if src_port is not None and dst_port is not None and not src_port.modality.compatible(dst_port.modality):
            diags.append(Diagnostic(
                ErrorCategory.CONNECTION_ERROR,
                f"{e}: modality mismatch, {src_port.modality.value} output into {dst_port.modality.value} input",
                where,
            ))

    for nid, schema in schemas.items():
        if schema is None:
            continue
        for port in schema.inputs:
            if port.required and (nid, port.name) not in fed:
                diags.append(Diagnostic(ErrorCategory.TOPOLOGICAL_GAP,
                                        f"required input {nid}.{port.name} ({port.modality.value}) is not connected",
                                        Location(node=nid, port=port.name)))

    cycle = find_cycle(w)
    if cycle:
        diags.append(Diagnostic(ErrorCategory.CYCLE_OR_UNREACHABLE,
                                "cycle: " + " -> ".join(cycle + cycle[:1]), Location(node=min(cycle))))
    diags.extend(_unreachable(w, schemas))
    return sort_diagnostics(diags)


def _unreachable(w: Workflow, schemas) -> list[Diagnostic]:
    """Warn about nodes with no path to a terminal (output) node."""
    preds: dict[str, set[str]] = {n: set() for n in w.nodes}
    for n, outs in successors(w).items():
        for m in outs:
            preds[m].add(n)
    reached = {n for n, s in schemas.items() if s is not None and s.terminal}
    frontier = list(reached)
    while frontier:
        for p in preds[frontier.pop()]:
            if p not in reached:
                reached.add(p)
                frontier.append(p)
    return [
        Diagnostic(ErrorCategory.CYCLE_OR_UNREACHABLE, f"{n} does not reach any output node",
                   Location(node=n), Severity.WARNING)
        for n in sorted(w.nodes)
        if n not in reached
    ]

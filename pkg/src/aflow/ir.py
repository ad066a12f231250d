"""Workflow IR: node instances, their parameter bindings and port-to-port edges.

A :class:`Workflow` is the value every other module works on. Parsers build
one, the validator checks one, the executor runs one. Mutating methods
modify the workflow in place and return it, so construction chains read
like ``Workflow().add_node(...).connect(...)``; call :meth:`Workflow.copy`
before handing a workflow to code that should not see later edits.
"""

from __future__ import annotations

import heapq
import json
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping, Union

ParamValue = Union[bool, int, float, str]

IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


class Modality(str, Enum):
    IMAGE = "image"
    LATENT = "latent"
    CONDITIONING = "conditioning"
    TEXT = "text"
    AUDIO = "audio"
    VIDEO = "video"
    MESH = "mesh"
    MODEL = "model"
    MASK = "mask"
    NUMBER = "number"
    ANY = "any"

    def compatible(self, other: Modality) -> bool:
        return self is other or self is Modality.ANY or other is Modality.ANY


class WorkflowError(Exception):
    """Base class for structural violations of the workflow invariants."""


class DuplicateNodeId(WorkflowError):
    pass


class UnknownNode(WorkflowError):
    pass


class InputOccupied(WorkflowError):
    pass


class CycleError(WorkflowError):
    def __init__(self, cycle: list[str]):
        self.cycle = cycle
        super().__init__("cycle through " + " -> ".join(cycle))


def is_identifier(name: object) -> bool:
    return isinstance(name, str) and IDENT_RE.match(name) is not None


def check_param_value(value: object) -> ParamValue:
    if isinstance(value, bool) or isinstance(value, (int, str)):
        return value
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"parameter values must be finite, got {value!r}")
        return value
    raise TypeError(f"unsupported parameter value {value!r}")


@dataclass(frozen=True, order=True)
class PortRef:
    node_id: str
    port_name: str

    def __post_init__(self) -> None:
        if not self.node_id or not self.port_name:
            raise ValueError("port references need a node id and a port name")

    def __str__(self) -> str:
        return f"{self.node_id}.{self.port_name}"


@dataclass(frozen=True)
class Edge:
    src: PortRef
    dst: PortRef

    def __str__(self) -> str:
        return f"{self.src} -> {self.dst}"


@dataclass
class NodeInstance:
    id: str
    type_name: str
    params: dict[str, ParamValue] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not is_identifier(self.id):
            raise ValueError(f"invalid node id {self.id!r}")
        if not is_identifier(self.type_name):
            raise ValueError(f"invalid type name {self.type_name!r}")
        self.params = {str(k): check_param_value(v) for k, v in dict(self.params).items()}


@dataclass
class Workflow:
    nodes: dict[str, NodeInstance] = field(default_factory=dict)
    edges: list[Edge] = field(default_factory=list)
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        seen: set[PortRef] = set()
        for edge in self.edges:
            for end in (edge.src, edge.dst):
                if end.node_id not in self.nodes:
                    raise UnknownNode(end.node_id)
            if edge.dst in seen:
                raise InputOccupied(str(edge.dst))
            seen.add(edge.dst)

    # -- construction -----------------------------------------------------

    def add_node(self, id: str, type_name: str, params: Mapping[str, Any] | None = None) -> Workflow:
        if id in self.nodes:
            raise DuplicateNodeId(id)
        self.nodes[id] = NodeInstance(id, type_name, dict(params or {}))
        return self

    def remove_node(self, id: str) -> Workflow:
        """Remove a node together with every edge touching it."""
        if id not in self.nodes:
            raise UnknownNode(id)
        del self.nodes[id]
        self.edges = [e for e in self.edges if e.src.node_id != id and e.dst.node_id != id]
        return self

    def connect(self, src_node: str, src_output: str, dst_node: str, dst_input: str) -> Workflow:
        for node_id in (src_node, dst_node):
            if node_id not in self.nodes:
                raise UnknownNode(node_id)
        dst = PortRef(dst_node, dst_input)
        if any(e.dst == dst for e in self.edges):
            raise InputOccupied(str(dst))
        self.edges.append(Edge(PortRef(src_node, src_output), dst))
        return self

    def disconnect(self, dst_node: str, dst_input: str) -> Workflow:
        dst = PortRef(dst_node, dst_input)
        kept = [e for e in self.edges if e.dst != dst]
        if len(kept) == len(self.edges):
            raise UnknownNode(f"no edge feeds {dst}")
        self.edges = kept
        return self

    def set_param(self, node_id: str, name: str, value: ParamValue) -> Workflow:
        if node_id not in self.nodes:
            raise UnknownNode(node_id)
        self.nodes[node_id].params[name] = check_param_value(value)
        return self

    def copy(self) -> Workflow:
        return Workflow(
            {k: NodeInstance(n.id, n.type_name, dict(n.params)) for k, n in self.nodes.items()},
            list(self.edges),
            dict(self.metadata),
        )

    # -- views -------------------------------------------------------------

    def __len__(self) -> int:
        return len(self.nodes)

    def incoming_flows(self, node_id: str) -> list[Edge]:
        if node_id not in self.nodes:
            raise UnknownNode(node_id)
        return sorted((e for e in self.edges if e.dst.node_id == node_id), key=_edge_key)

    def outgoing_flows(self, node_id: str) -> list[Edge]:
        if node_id not in self.nodes:
            raise UnknownNode(node_id)
        return [e for e in self.edges if e.src.node_id == node_id]

    def sinks(self) -> list[str]:
        """Node ids with no outgoing edge, sorted."""
        sources = {e.src.node_id for e in self.edges}
        return sorted(n for n in self.nodes if n not in sources)

    def topological_order(self) -> list[str]:
        return topological_order(self)

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        w = canonicalize(self)
        return {
            "nodes": [{"id": n.id, "type": n.type_name, "params": dict(n.params)} for n in w.nodes.values()],
            "edges": [
                {"src": [e.src.node_id, e.src.port_name], "dst": [e.dst.node_id, e.dst.port_name]}
                for e in w.edges
            ],
            "metadata": dict(w.metadata),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> Workflow:
        w = cls(metadata={str(k): str(v) for k, v in doc.get("metadata", {}).items()})
        for node in doc.get("nodes", []):
            w.add_node(node["id"], node["type"], node.get("params", {}))
        for edge in doc.get("edges", []):
            (sn, sp), (dn, dp) = edge["src"], edge["dst"]
            w.connect(sn, sp, dn, dp)
        return w

    @classmethod
    def from_json(cls, text: str | bytes) -> Workflow:
        return cls.from_dict(json.loads(text))


def new_workflow() -> Workflow:
    return Workflow()


def _edge_key(e: Edge) -> tuple[str, str]:
    return (e.dst.node_id, e.dst.port_name)


def canonicalize(w: Workflow) -> Workflow:
    """Return a copy with nodes sorted by id, params by name and edges by destination."""
    nodes = {
        nid: NodeInstance(n.id, n.type_name, {k: n.params[k] for k in sorted(n.params)})
        for nid, n in sorted(w.nodes.items())
    }
    return Workflow(nodes, sorted(w.edges, key=_edge_key), {k: w.metadata[k] for k in sorted(w.metadata)})


def canonical_key(w: Workflow) -> str:
    """Byte-stable text of the (functions, parameters, topology) triple; metadata excluded."""
    d = w.to_dict()
    del d["metadata"]
    return json.dumps(d, sort_keys=True, ensure_ascii=False)


def canonical_equal(a: Workflow, b: Workflow) -> bool:
    return canonical_key(a) == canonical_key(b)


def successors(w: Workflow) -> dict[str, set[str]]:
    succ: dict[str, set[str]] = {n: set() for n in w.nodes}
    for e in w.edges:
        succ[e.src.node_id].add(e.dst.node_id)
    return succ


def topological_order(w: Workflow) -> list[str]:
    """Kahn's algorithm with a min-heap, so ties resolve to the smallest id."""
    succ = successors(w)
    indegree = {n: 0 for n in w.nodes}
    for n, outs in succ.items():
        for m in outs:
            indegree[m] += 1
    ready = [n for n, d in indegree.items() if d == 0]
    heapq.heapify(ready)
    order: list[str] = []
    while ready:
        n = heapq.heappop(ready)
        order.append(n)
        for m in succ[n]:
            indegree[m] -= 1
            if indegree[m] == 0:
                heapq.heappush(ready, m)
    if len(order) < len(w.nodes):
        raise CycleError(find_cycle(w, {n for n, d in indegree.items() if d > 0}))
    return order


def find_cycle(w: Workflow, candidates: Iterable[str] | None = None) -> list[str]:
    """Return the node ids of one cycle (first node not repeated), or [] if acyclic."""
    succ = successors(w)
    pool = sorted(candidates) if candidates is not None else sorted(w.nodes)
    state: dict[str, int] = {}
    for root in pool:
        if state.get(root):
            continue
        stack: list[tuple[str, list[str]]] = [(root, sorted(succ[root]))]
        path = [root]
        state[root] = 1
        while stack:
            node, pending = stack[-1]
            if not pending:
                stack.pop()
                path.pop()
                state[node] = 2
                continue
            nxt = pending.pop(0)
            if state.get(nxt) == 1:
                return path[path.index(nxt):]
            if not state.get(nxt):
                state[nxt] = 1
                path.append(nxt)
                stack.append((nxt, sorted(succ[nxt])))
    return []

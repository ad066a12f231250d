from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Protocol

from ..diagnostics import Diagnostic, is_executable
from ..ir import Modality, ParamValue, Workflow, topological_order
from ..registry import FunctionSchema, Registry, resolve_params
from ..validator import check


class PreconditionViolated(Exception):
    def __init__(self, message: str, diagnostics: list[Diagnostic] | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


class NodeFailure(Exception):
    """Raised by a backend when a single node cannot run."""


@dataclass(frozen=True)
class Artifact:
    modality: Modality
    token: str

    def __post_init__(self) -> None:
        if not self.token:
            raise ValueError("artifact token must be nonempty")


class Status(str, Enum):
    COMPLETED = "Completed"
    FAILED = "Failed"


@dataclass
class ExecutionTrace:
    order: list[str]
    outputs: dict[tuple[str, str], Artifact] = field(default_factory=dict)
    status: Status = Status.COMPLETED
    failure: tuple[str, str] | None = None

    @property
    def ok(self) -> bool:
        return self.status is Status.COMPLETED

    def to_dict(self) -> dict[str, Any]:
        return {
            "status": self.status.value,
            "order": list(self.order),
            "outputs": {
                f"{n}.{p}": {"modality": a.modality.value, "token": a.token}
                for (n, p), a in sorted(self.outputs.items())
            },
            "failure": {"node": self.failure[0], "message": self.failure[1]} if self.failure else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"


class Backend(Protocol):
    def run_node(
        self, node_id: str, schema: FunctionSchema, params: Mapping[str, ParamValue], inputs: Mapping[str, Artifact]
    ) -> dict[str, Artifact]:
        """Return one artifact per declared output port, or raise NodeFailure."""
        ...


def fingerprint(type_name: str, params: Mapping[str, ParamValue], inputs: Mapping[str, str], port: str = "") -> str:
    """Content hash of a node output: function, parameters, input tokens by port, and output port."""
    payload = json.dumps(
        [type_name, sorted(params.items()), sorted(inputs.items()), port],
        ensure_ascii=False,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode("utf-8", "surrogatepass")).hexdigest()[:32]


class SimulatedBackend:
    """Deterministic stand-in for generative models: outputs are content fingerprints."""

    def run_node(self, node_id, schema, params, inputs):
        tokens = {port: art.token for port, art in inputs.items()}
        return {
            out.name: Artifact(out.modality, fingerprint(schema.type_name, params, tokens, out.name))
            for out in schema.outputs
        }


def simulated_backend() -> SimulatedBackend:
    return SimulatedBackend()


def execute(
    w: Workflow,
    r: Registry,
    backend: Backend | None = None,
    seeds: Mapping[str, int] | None = None,
) -> ExecutionTrace:
    """Run every node once in topological order.

    ``seeds`` maps node ids to a seed that overrides the node's ``seed``
    parameter; it is ignored for functions without one.
    """
    diags = check(w, r)
    if not is_executable(diags):
        raise PreconditionViolated("workflow does not validate", diags)
    backend = backend or SimulatedBackend()
    seeds = seeds or {}
    order = topological_order(w)
    trace = ExecutionTrace(order)
    for nid in order:
        node = w.nodes[nid]
        schema = r.lookup(node.type_name)
        params, _ = resolve_params(schema, node.params)
        if nid in seeds and schema.param("seed") is not None:
            params["seed"] = seeds[nid]
        inputs = {e.dst.port_name: trace.outputs[(e.src.node_id, e.src.port_name)] for e in w.incoming_flows(nid)}
        try:
            produced = backend.run_node(nid, schema, params, inputs)
        except NodeFailure as exc:
            trace.status = Status.FAILED
            trace.failure = (nid, str(exc) or type(exc).__name__)
            return trace
        for out in schema.outputs:
            art = produced.get(out.name)
            if art is None or art.modality is not out.modality:
                trace.status = Status.FAILED
                trace.failure = (nid, f"backend returned no {out.modality.value} artifact for {out.name}")
                return trace
            trace.outputs[(nid, out.name)] = art
    return trace

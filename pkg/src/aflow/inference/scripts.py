"""Response scripts for the playback backend.

A script file is JSON, either ``{"responses": [...]}`` (one script replayed
afresh for every case) or ``{"scripts": {"<case id>": [...], "<case id>@<syntax>": [...]}}``.
The ``@syntax`` key wins over the bare id when both exist.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from ..frontends import SyntaxStyle, emit, emit_edges, emit_nodes, extension_for
from ..ir import NodeInstance, Workflow, canonicalize
from ..registry import ParamKind, Registry
from .lm import LmError, ScriptedLm


def answer(text: str, style: SyntaxStyle | str) -> str:
    """Wrap program text the way a chat model typically does."""
    style = SyntaxStyle.parse(style)
    return f"```{extension_for(style)[1:]}\n{text}\n```"


def two_stage_answers(w: Workflow, style: SyntaxStyle | str) -> list[str]:
    """Components answer then topology answer that together rebuild ``w``."""
    return [answer(emit_nodes(w, style), style), answer(emit_edges(w, style), style)]


def program_answer(w: Workflow, style: SyntaxStyle | str) -> str:
    return answer(emit(w, style), style)


@dataclass
class ScriptBook:
    """Hands out a fresh :class:`ScriptedLm` per case so cases never share playback state."""

    shared: list[str] | None = None
    per_case: dict[str, list[str]] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> ScriptBook:
        if "responses" in doc:
            responses = doc["responses"]
            if not isinstance(responses, list) or not all(isinstance(r, str) for r in responses):
                raise ValueError("'responses' must be a list of strings")
            return cls(shared=list(responses))
        scripts = doc.get("scripts")
        if not isinstance(scripts, dict):
            raise ValueError("script file needs 'responses' or 'scripts'")
        for key, value in scripts.items():
            if not isinstance(value, list) or not all(isinstance(r, str) for r in value):
                raise ValueError(f"script {key!r} must be a list of strings")
        return cls(per_case={k: list(v) for k, v in scripts.items()})

    @classmethod
    def load(cls, path: str | Path) -> ScriptBook:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict[str, Any]:
        if self.shared is not None:
            return {"responses": self.shared}
        return {"scripts": dict(sorted(self.per_case.items()))}

    def responses_for(self, case_id: str = "", syntax: SyntaxStyle | str | None = None) -> list[str]:
        if self.shared is not None:
            return list(self.shared)
        if syntax is not None:
            keyed = self.per_case.get(f"{case_id}@{SyntaxStyle.parse(syntax).value}")
            if keyed is not None:
                return list(keyed)
        if case_id in self.per_case:
            return list(self.per_case[case_id])
        raise LmError(f"no script for case {case_id!r}")

    def lm_for(self, case_id: str = "", syntax: SyntaxStyle | str | None = None) -> ScriptedLm:
        return ScriptedLm(self.responses_for(case_id, syntax))


FAULTS = ("gap", "bad_param", "unknown_type")


def inject_fault(w: Workflow, registry: Registry, kind: str) -> Workflow:
    """A copy of ``w`` with one repairable mistake of the given kind.

    ``gap`` drops the last connection into a required input, ``bad_param``
    pushes the first ranged parameter past its upper bound, and
    ``unknown_type`` renames the first node's function to one the catalog
    lacks. Raises ValueError when the workflow offers no place for the fault.
    """
    broken = w.copy()
    if kind == "gap":
        for edge in reversed(canonicalize(w).edges):
            schema = registry.get(w.nodes[edge.dst.node_id].type_name)
            port = schema.input(edge.dst.port_name) if schema else None
            if port is not None and port.required:
                return broken.disconnect(edge.dst.node_id, edge.dst.port_name)
    elif kind == "bad_param":
        for nid in sorted(w.nodes):
            schema = registry.get(w.nodes[nid].type_name)
            for p in schema.params if schema else ():
                if p.range is not None:
                    hi = p.range[1]
                    return broken.set_param(nid, p.name, int(hi) + 1 if p.kind is ParamKind.INT else float(hi) + 1.0)
    elif kind == "unknown_type":
        nid = sorted(w.nodes)[0]
        node = w.nodes[nid]
        broken.nodes[nid] = NodeInstance(nid, node.type_name + "Pro", dict(node.params))
        return broken
    raise ValueError(f"cannot inject {kind!r} into this workflow")

"""Two-stage inference (components, then topology) with retrieval and iterative refinement."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

from ..diagnostics import Diagnostic, ErrorCategory, Location, Severity, is_executable, sort_diagnostics
from ..executor.core import ExecutionTrace, PreconditionViolated, execute
from ..frontends import SyntaxStyle, emit, emit_nodes, parse, parse_statements
from ..frontends.common import EdgeDecl, NodeDecl, ParamSet, ParseOutcome, StatementList, UnrepresentableWorkflow, assemble
from ..ir import Modality, Workflow
from ..registry import Registry
from ..validator import check
from . import prompts
from .lm import EmptyResponse, LmBackend
from .store import Reference, ReferenceStore, top_k

DEFAULT_LIMIT = 3
DEFAULT_K = 3

Runner = Callable[[Workflow], ExecutionTrace]


class IterationLimitReached(RuntimeError):
    pass


@dataclass(frozen=True)
class TaskInput:
    name: str
    modality: Modality
    uri: str

    def to_dict(self) -> dict[str, str]:
        return {"name": self.name, "modality": self.modality.value, "uri": self.uri}

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> TaskInput:
        return cls(str(doc["name"]), Modality(doc["modality"]), str(doc.get("uri", "")))


@dataclass
class TaskSpec:
    description: str
    inputs: list[TaskInput] = field(default_factory=list)
    syntax: SyntaxStyle = SyntaxStyle.DECLARATIVE
    key_functions: list[str] | None = None

    def __post_init__(self) -> None:
        if not self.description or not self.description.strip():
            raise ValueError("task description must be nonempty")
        self.syntax = SyntaxStyle.parse(self.syntax)

    def to_dict(self) -> dict[str, Any]:
        return {
            "description": self.description,
            "inputs": [i.to_dict() for i in self.inputs],
            "syntax": self.syntax.value,
            "key_functions": self.key_functions,
        }


@dataclass
class Iteration:
    """One candidate program together with everything learned about it."""

    stage: str
    candidate: str
    outcome: ParseOutcome
    diagnostics: list[Diagnostic]
    trace: ExecutionTrace | None = None

    @property
    def compiled(self) -> bool:
        """Parsed and validated without errors (execution not considered)."""
        return self.outcome.workflow is not None and is_executable(
            d for d in self.diagnostics if not d.message.startswith(RUNTIME_PREFIX)
        )

    @property
    def executable(self) -> bool:
        return self.outcome.workflow is not None and is_executable(self.diagnostics)

    def to_dict(self) -> dict[str, Any]:
        return {
            "stage": self.stage,
            "candidate": self.candidate,
            "parsed": self.outcome.workflow is not None,
            "diagnostics": [d.to_dict() for d in self.diagnostics],
            "executable": self.executable,
            "trace": self.trace.to_dict() if self.trace else None,
        }


@dataclass
class Exchange:
    stage: str
    system: str
    user: str
    response: str

    def to_dict(self) -> dict[str, str]:
        return {"stage": self.stage, "system": self.system, "user": self.user, "response": self.response}


@dataclass
class InferenceSession:
    task: TaskSpec
    registry: Registry
    retrieved: list[Reference] = field(default_factory=list)
    iterations: list[Iteration] = field(default_factory=list)
    final: Workflow | None = None
    iteration_limit: int = DEFAULT_LIMIT
    exchanges: list[Exchange] = field(default_factory=list)
    runner: Runner | None = None
    draft: Workflow | None = None

    @property
    def refinements(self) -> int:
        return max(len(self.iterations) - 1, 0)

    @property
    def succeeded(self) -> bool:
        return self.final is not None

    @property
    def last(self) -> Iteration | None:
        return self.iterations[-1] if self.iterations else None

    @property
    def trace(self) -> ExecutionTrace | None:
        return self.last.trace if self.last else None

    def to_dict(self) -> dict[str, Any]:
        final_text = None
        if self.final is not None:
            try:
                final_text = emit(self.final, self.task.syntax)
            except UnrepresentableWorkflow:
                final_text = self.final.to_json()
        return {
            "prompt_version": prompts.PROMPT_VERSION,
            "task": self.task.to_dict(),
            "iteration_limit": self.iteration_limit,
            "references": [r.name for r in self.retrieved],
            "exchanges": [x.to_dict() for x in self.exchanges],
            "iterations": [it.to_dict() for it in self.iterations],
            "succeeded": self.succeeded,
            "final": final_text,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"


_FENCE_RE = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)


def extract_candidate(response: str) -> str:
    """First fenced code block, or the whole response when there is none."""
    m = _FENCE_RE.search(response)
    return (m.group(1) if m else response).strip()


def retrieve_references(store: ReferenceStore, task: TaskSpec, k: int = DEFAULT_K,
                        lm: LmBackend | None = None) -> list[Reference]:
    from .lm import stub_embedding

    query = lm.embed(task.description) if lm is not None else stub_embedding(task.description)
    return top_k(store, query, k)


def _ask(session: InferenceSession | None, lm: LmBackend, stage: str, system: str, user: str) -> str:
    response = lm.complete(system, user)
    if response is None or not response.strip():
        raise EmptyResponse(f"empty response in stage {stage!r}")
    if session is not None:
        session.exchanges.append(Exchange(stage, system, user, response))
    return response


def _warning(message: str, node: str | None = None, line: int | None = None) -> Diagnostic:
    # stage-contract violations: the statement is dropped, the answer is otherwise used
    return Diagnostic(ErrorCategory.INVALID_FORMAT, message, Location(node=node, line=line), Severity.WARNING)


@dataclass
class Draft:
    text: str
    workflow: Workflow | None
    diagnostics: list[Diagnostic]


def infer_components(task: TaskSpec, registry: Registry, refs: Sequence[Reference], lm: LmBackend,
                     session: InferenceSession | None = None) -> Draft:
    """First stage: ask for node declarations only and parse them as a fragment.

    Connections in the answer are dropped with a warning. Unknown types are
    kept; the validator flags them later.
    """
    system = prompts.system_prompt(task.syntax, registry, refs)
    text = extract_candidate(_ask(session, lm, "components", system, prompts.components_prompt(task)))
    parsed = parse_statements(text, task.syntax, fragment=True, predeclared=_declared_ids(text, task.syntax))
    kept = StatementList(diagnostics=list(parsed.diagnostics))
    for st in parsed.statements:
        if isinstance(st, EdgeDecl):
            kept.diagnostics.append(_warning(f"connection {st.src} -> {st.dst} ignored in the components stage",
                                             line=st.span.line))
        else:
            kept.statements.append(st)
    outcome = assemble(kept)
    return Draft(text, outcome.workflow, outcome.diagnostics)


def _declared_ids(text: str, style: SyntaxStyle) -> list[str]:
    # components answers in dataflow style may reference nodes in any order;
    # referencing is irrelevant there since edges are discarded
    if SyntaxStyle.parse(style) is not SyntaxStyle.DATAFLOW:
        return []
    return re.findall(r"(?m)^\s*([A-Za-z_][A-Za-z0-9_]*)\s*=", text)


def infer_topology(task: TaskSpec, registry: Registry, draft: Workflow, refs: Sequence[Reference],
                   lm: LmBackend, session: InferenceSession | None = None) -> tuple[str, ParseOutcome]:
    """Second stage: ask for the connections over a fixed node set and merge them into the draft.

    Returns the raw answer and a ParseOutcome whose workflow (when present)
    has exactly the draft's nodes.
    """
    if not draft.nodes:
        raise PreconditionViolated("topology stage needs at least one node")
    system = prompts.system_prompt(task.syntax, registry, refs)
    draft_text = emit_nodes(draft, task.syntax)
    text = extract_candidate(_ask(session, lm, "topology", system, prompts.topology_prompt(task, draft_text)))
    parsed = parse_statements(text, task.syntax, fragment=True, predeclared=list(draft.nodes))
    kept = StatementList(diagnostics=list(parsed.diagnostics))
    for st in parsed.statements:
        if isinstance(st, EdgeDecl):
            kept.statements.append(st)
        elif isinstance(st, NodeDecl):
            known = draft.nodes.get(st.id)
            if known is None:
                kept.diagnostics.append(_warning(f"node {st.id!r} was not in the component list; dropped",
                                                 node=st.id, line=st.span.line))
            elif known.type_name != st.type_name or any(known.params.get(n) != v for n, v, _ in st.params):
                kept.diagnostics.append(_warning(f"redeclaration of {st.id!r} differs from the component list; "
                                                 "kept the original", node=st.id, line=st.span.line))
        elif isinstance(st, ParamSet):
            kept.diagnostics.append(_warning(f"parameter change {st.node}.{st.name} ignored in the topology stage",
                                             node=st.node, line=st.span.line))
    return text, assemble(kept, base=draft)


def _runtime_diagnostic(w: Workflow, registry: Registry, trace: ExecutionTrace) -> Diagnostic:
    node_id, message = trace.failure or ("", "execution failed")
    category = ErrorCategory.CONNECTION_ERROR
    node = w.nodes.get(node_id)
    schema = registry.get(node.type_name) if node else None
    if schema is not None and any(re.search(rf"\b{re.escape(p.name)}\b", message) for p in schema.params):
        category = ErrorCategory.INVALID_PARAMETER
    return Diagnostic(category, f"{RUNTIME_PREFIX}{message}", Location(node=node_id or None))


RUNTIME_PREFIX = "execution failed: "


def _record(session: InferenceSession, stage: str, candidate: str, outcome: ParseOutcome) -> Iteration:
    diags = list(outcome.diagnostics)
    if outcome.workflow is not None:
        diags.extend(check(outcome.workflow, session.registry))
    it = Iteration(stage, candidate, outcome, sort_diagnostics(diags))
    session.iterations.append(it)
    if it.executable and session.runner is not None:
        it.trace = session.runner(outcome.workflow)
        if not it.trace.ok:
            it.diagnostics = sort_diagnostics(
                [*it.diagnostics, _runtime_diagnostic(outcome.workflow, session.registry, it.trace)])
    session.final = outcome.workflow if it.executable else None
    return it


def _parse_full(text: str, style: SyntaxStyle) -> ParseOutcome:
    return parse(text, style)


def _initial_two_stage(session: InferenceSession, lm: LmBackend) -> None:
    task, refs = session.task, session.retrieved
    draft = infer_components(task, session.registry, refs, lm, session)
    session.draft = draft.workflow
    if draft.workflow is None or not draft.workflow.nodes:
        if draft.workflow is not None:
            draft.diagnostics.append(Diagnostic(ErrorCategory.INVALID_FORMAT, "no functions were declared"))
        _record(session, "initial", draft.text, ParseOutcome(None, draft.diagnostics))
        return
    text, merged = infer_topology(task, session.registry, draft.workflow, refs, lm, session)
    merged.diagnostics[:0] = draft.diagnostics
    if merged.workflow is not None:
        try:
            candidate = emit(merged.workflow, task.syntax)
        except UnrepresentableWorkflow:
            candidate = draft.text + "\n" + text
        merged.workflow.metadata["syntax"] = task.syntax.value
    else:
        candidate = draft.text + "\n" + text
    _record(session, "initial", candidate, merged)


def refine(session: InferenceSession, lm: LmBackend) -> InferenceSession:
    """Show the last candidate and its diagnostics to the model and record the revised program."""
    last = session.last
    if last is None or last.executable:
        raise PreconditionViolated("nothing to refine: the last candidate has no errors")
    if session.refinements >= session.iteration_limit:
        raise IterationLimitReached(f"refinement limit {session.iteration_limit} reached")
    errors = [d for d in last.diagnostics if d.is_error]
    system = prompts.system_prompt(session.task.syntax, session.registry, session.retrieved)
    user = prompts.refine_prompt(session.task, last.candidate, errors)
    text = extract_candidate(_ask(session, lm, "refine", system, user))
    _record(session, "refine", text, _parse_full(text, session.task.syntax))
    return session


def sim_runner(registry: Registry, seeds=None, backend=None) -> Runner:
    return lambda w: execute(w, registry, backend, seeds)


def run_pipeline(task: TaskSpec, registry: Registry, store: ReferenceStore | None, lm: LmBackend,
                 limit: int = DEFAULT_LIMIT, *, k: int = DEFAULT_K, two_stage: bool = True,
                 runner: Runner | None = None) -> InferenceSession:
    """Retrieve, draft components, connect them, validate, then refine until clean or out of budget.

    ``runner`` executes each clean candidate; a failed run feeds refinement
    like any other error. A session that ends without a workflow is returned
    normally with ``final`` unset.
    """
    if limit < 0:
        raise ValueError("limit must be nonnegative")
    session = InferenceSession(task, registry, iteration_limit=limit, runner=runner)
    if store is not None and len(store):
        session.retrieved = retrieve_references(store, task, k, lm)
    if two_stage:
        _initial_two_stage(session, lm)
    else:
        system = prompts.system_prompt(task.syntax, registry, session.retrieved)
        text = extract_candidate(_ask(session, lm, "single", system, prompts.single_stage_prompt(task)))
        _record(session, "initial", text, _parse_full(text, task.syntax))
    while not session.last.executable and session.refinements < limit:
        refine(session, lm)
    return session

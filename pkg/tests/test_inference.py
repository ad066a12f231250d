from __future__ import annotations

import json
import socket

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aflow.diagnostics import ErrorCategory, Severity
from aflow.executor import ExecutionTrace, PreconditionViolated, Status
from aflow.frontends import SyntaxStyle, emit, emit_edges, emit_nodes, grammar
from aflow.inference import (
    EmptyResponse,
    EmptyStore,
    IterationLimitReached,
    LmError,
    OpenAICompatibleLm,
    Reference,
    ReferenceStore,
    ScriptBook,
    ScriptedLm,
    StoreError,
    TaskInput,
    TaskSpec,
    answer,
    cosine,
    extract_candidate,
    infer_components,
    infer_topology,
    inject_fault,
    program_answer,
    refine,
    retrieve_references,
    run_pipeline,
    sim_runner,
    stub_embedding,
    two_stage_answers,
)
from aflow.inference.pipeline import InferenceSession, RUNTIME_PREFIX
from aflow.inference.store import read_embedding, top_k, write_embedding
from aflow.ir import Modality, canonical_equal
from mock_servers import MockServer, openai_routes

STYLES = list(SyntaxStyle)
JUNK = "```\nthis is not a program at all ((\n```"


def task_for(style=SyntaxStyle.DECLARATIVE, key_functions=None):
    return TaskSpec("Blend a jungle photo with temple ruins", [TaskInput("jungle", Modality.IMAGE, "jungle.png")],
                    style, key_functions)


def node_multiset(w):
    return sorted((n.id, n.type_name, json.dumps(n.params, sort_keys=True)) for n in w.nodes.values())


# -- retrieval ----------------------------------------------------------------------


def test_retrieve_three_by_default(store):
    refs = retrieve_references(store, TaskSpec("blend two images into one picture"))
    assert len(store) == 16 and len(refs) == 3
    assert len({r.name for r in refs}) == 3


def test_self_similarity_wins(store):
    for entry in store:
        assert retrieve_references(store, TaskSpec(entry.task), k=1)[0].name == entry.name


def test_orthogonal_ties_follow_entry_order():
    basis = [[1.0 if i == j else 0.0 for j in range(4)] for i in range(4)]
    entries = [Reference(f"r{i}", f"t{i}", None, v) for i, v in enumerate(basis)]
    store = ReferenceStore(entries[1:] + entries[:1])
    assert [r.name for r in top_k(store, [0.0, 0.0, 0.0, 0.0] + [], k=3)] == ["r1", "r2", "r3"]
    assert [r.name for r in top_k(store, [0.0, 1.0, 1.0, 0.0], k=3)] == ["r1", "r2", "r3"]
    assert [r.name for r in top_k(store, [0.0, 0.0, 1.0, 1.0], k=4)] == ["r2", "r3", "r1", "r0"]


def test_retrieval_preconditions():
    with pytest.raises(EmptyStore):
        top_k(ReferenceStore([]), [1.0], k=3)
    with pytest.raises(ValueError):
        top_k(ReferenceStore([Reference("a", "a", None, [1.0])]), [1.0], k=0)
    with pytest.raises(StoreError):
        ReferenceStore([Reference("a", "a", None, [1.0]), Reference("b", "b", None, [1.0, 0.0])])


@given(st.text(min_size=0, max_size=60))
def test_stub_embedding_is_unit_or_zero(text):
    v = stub_embedding(text)
    norm = sum(x * x for x in v)
    assert len(v) == 256 and (norm == 0 or abs(norm - 1) < 1e-9)
    assert v == stub_embedding(text)
    if norm:
        assert abs(cosine(v, v) - 1) < 1e-9


def test_embedding_cache_round_trip(tmp_path, registry, store):
    src = next(iter(store))
    (tmp_path / f"{src.name}.task.txt").write_text(src.task)
    (tmp_path / f"{src.name}.adl").write_text(emit(src.workflow, SyntaxStyle.DECLARATIVE))
    calls = []

    def counting(text):
        calls.append(text)
        return stub_embedding(text)

    fresh = ReferenceStore.load(tmp_path, counting, registry)
    fresh.save_embeddings(tmp_path)
    assert len(calls) == 1
    again = ReferenceStore.load(tmp_path, counting, registry)
    assert len(calls) == 1
    cached = read_embedding(tmp_path / f"{src.name}.emb")
    assert len(cached) == 256
    assert all(abs(a - b) < 1e-6 for a, b in zip(cached, next(iter(again)).embedding))
    write_embedding(tmp_path / "x.emb", [0.5, -2.0])
    assert (tmp_path / "x.emb").read_bytes() == bytes.fromhex("0000003f000000c0")


def test_store_rejects_invalid_reference(tmp_path, registry):
    (tmp_path / "bad.task.txt").write_text("do a thing")
    (tmp_path / "bad.adl").write_text('workflow { node a = NoSuchNode(); }')
    with pytest.raises(StoreError):
        ReferenceStore.load(tmp_path, stub_embedding, registry)


# -- candidate extraction -----------------------------------------------------------


@pytest.mark.parametrize(
    "response, expected",
    [
        ("```adl\nworkflow {}\n```", "workflow {}"),
        ("Sure! Here you go:\n```\na\n```\nand also\n```\nb\n```", "a"),
        ("  workflow { }  ", "workflow { }"),
        ("```adf\n  x = Foo();\n\n```trailing", "x = Foo();"),
    ],
    ids=["fenced", "first-of-two", "bare", "strip"],
)
def test_extract_candidate(response, expected):
    assert extract_candidate(response) == expected


# -- components stage ---------------------------------------------------------------

TWO_NODES = {
    SyntaxStyle.DECLARATIVE: 'node ld = LoadImage(path="a.png");\nnode enc = VAEEncode();',
    SyntaxStyle.DATAFLOW: 'ld = LoadImage(path="a.png");\nenc = VAEEncode();',
    SyntaxStyle.PSEUDO_NATURAL: 'make LoadImage as ld.\nset ld path to "a.png".\nmake VAEEncode as enc.',
}


@pytest.mark.parametrize("style", STYLES, ids=lambda s: s.value)
def test_components_two_node_draft(registry, style):
    lm = ScriptedLm([answer(TWO_NODES[style], style)])
    draft = infer_components(task_for(style), registry, [], lm)
    assert sorted(draft.workflow.nodes) == ["enc", "ld"]
    assert draft.workflow.edges == [] and draft.diagnostics == []
    assert draft.workflow.nodes["ld"].params == {"path": "a.png"}


def test_components_malformed_text(registry):
    session = InferenceSession(task_for(), registry)
    draft = infer_components(task_for(), registry, [], ScriptedLm([JUNK]), session)
    assert draft.workflow is None
    assert {d.category for d in draft.diagnostics} == {ErrorCategory.INVALID_FORMAT}
    assert session.exchanges[0].stage == "components"


def test_components_drops_connections_with_warning(registry):
    text = TWO_NODES[SyntaxStyle.DECLARATIVE] + "\nld.IMAGE -> enc.pixels;"
    draft = infer_components(task_for(), registry, [], ScriptedLm([answer(text, "declarative")]))
    assert draft.workflow.edges == []
    assert [d.severity for d in draft.diagnostics] == [Severity.WARNING]


def test_components_keeps_unknown_types(registry):
    text = 'node up = MagicUpscaler(factor=2);'
    draft = infer_components(task_for(), registry, [], ScriptedLm([text]))
    assert draft.workflow.nodes["up"].type_name == "MagicUpscaler"


def test_key_functions_reach_the_prompt(registry):
    lm = ScriptedLm([TWO_NODES[SyntaxStyle.DECLARATIVE]])
    infer_components(task_for(key_functions=["ConditioningAverage", "KSampler"]), registry, [], lm)
    assert "ConditioningAverage" in lm.calls[0][1] and "KSampler" in lm.calls[0][1]


def test_empty_response_is_typed(registry):
    with pytest.raises(EmptyResponse):
        infer_components(task_for(), registry, [], ScriptedLm(["   \n"]))
    with pytest.raises(LmError):
        infer_components(task_for(), registry, [], ScriptedLm([]))


# -- topology stage -----------------------------------------------------------------


@pytest.mark.parametrize("style", STYLES, ids=lambda s: s.value)
def test_topology_rebuilds_golden(registry, blend, style):
    draft = infer_components(task_for(style), registry, [], ScriptedLm([answer(emit_nodes(blend, style), style)]))
    _, outcome = infer_topology(task_for(style), registry, draft.workflow, [],
                                ScriptedLm([answer(emit_edges(blend, style), style)]))
    assert outcome.diagnostics == [] and canonical_equal(outcome.workflow, blend)


@pytest.mark.parametrize("style", STYLES, ids=lambda s: s.value)
def test_topology_edge_to_missing_node(registry, blend, style):
    draft = blend.copy()
    draft.edges.clear()
    text = emit_edges(blend, style).replace("decode", "ghost", 1)
    _, outcome = infer_topology(task_for(style), registry, draft, [], ScriptedLm([text]))
    errors = [d for d in outcome.diagnostics if d.is_error]
    assert errors and {d.category for d in errors} == {ErrorCategory.CONNECTION_ERROR}
    assert outcome.workflow is not None and "ghost" not in outcome.workflow.nodes


def test_topology_extra_node_dropped(registry, blend):
    draft = blend.copy()
    draft.edges.clear()
    text = emit_edges(blend, "declarative") + '\nnode extra = LoadImage(path="x.png");'
    _, outcome = infer_topology(task_for(), registry, draft, [], ScriptedLm([text]))
    assert "extra" not in outcome.workflow.nodes
    assert [(d.severity, d.location.node) for d in outcome.diagnostics] == [(Severity.WARNING, "extra")]


def test_topology_param_change_ignored(registry, blend):
    draft = blend.copy()
    draft.edges.clear()
    text = emit_edges(blend, "pseudo_natural") + "\nset sampler steps to 99."
    _, outcome = infer_topology(task_for("pseudo_natural"), registry, draft, [], ScriptedLm([text]))
    assert outcome.workflow.nodes["sampler"].params["steps"] == 25
    assert [d.severity for d in outcome.diagnostics] == [Severity.WARNING]


def test_topology_needs_nodes(registry, blend):
    empty = blend.copy()
    empty.nodes.clear()
    empty.edges.clear()
    with pytest.raises(PreconditionViolated):
        infer_topology(task_for(), registry, empty, [], ScriptedLm(["x"]))


# -- refinement ---------------------------------------------------------------------


def gap_session(registry, blend, style=SyntaxStyle.DECLARATIVE, limit=3):
    broken = inject_fault(blend, registry, "gap")
    lm = ScriptedLm(two_stage_answers(broken, style))
    return run_pipeline(task_for(style), registry, None, lm, limit=0), broken


def test_refine_fixes_gap(registry, blend):
    session, _ = gap_session(registry, blend)
    assert {d.category for d in session.last.diagnostics if d.is_error} == {ErrorCategory.TOPOLOGICAL_GAP}
    session.iteration_limit = 3
    lm = ScriptedLm([program_answer(blend, "declarative")])
    refine(session, lm)
    assert len(session.iterations) == 2 and session.last.executable
    assert canonical_equal(session.final, blend)
    user = lm.calls[0][1]
    assert "TopologicalGap" in user and session.iterations[0].candidate in user


def test_refine_limit(registry, blend):
    session, _ = gap_session(registry, blend)
    session.iteration_limit = 2
    lm = ScriptedLm([JUNK] * 5)
    refine(session, lm)
    refine(session, lm)
    with pytest.raises(IterationLimitReached):
        refine(session, lm)
    assert session.refinements == 2 and lm.remaining == 3


def test_refine_clean_session(registry, blend):
    session = run_pipeline(task_for(), registry, None, ScriptedLm(two_stage_answers(blend, "declarative")))
    with pytest.raises(PreconditionViolated):
        refine(session, ScriptedLm([JUNK]))


# -- full pipeline ------------------------------------------------------------------


@pytest.mark.parametrize("style", STYLES, ids=lambda s: s.value)
def test_pipeline_happy_path(registry, store, goldens, style):
    for name in ("blend_images", "text_to_image", "image_to_video"):
        golden = goldens[name]
        session = run_pipeline(task_for(style), registry, store, ScriptedLm(two_stage_answers(golden, style)))
        assert session.succeeded and session.refinements == 0 and len(session.iterations) == 1
        assert canonical_equal(session.final, golden)


@pytest.mark.parametrize("fault", ["gap", "bad_param", "unknown_type"])
def test_pipeline_one_fix(registry, store, blend, fault):
    broken = inject_fault(blend, registry, fault)
    lm = ScriptedLm(two_stage_answers(broken, "declarative") + [program_answer(blend, "declarative")])
    session = run_pipeline(task_for(), registry, store, lm)
    assert session.succeeded and len(session.iterations) == 2
    assert not session.iterations[0].executable and session.iterations[1].executable


@pytest.mark.parametrize("limit", [0, 1, 3, 5])
def test_pipeline_never_fix(registry, store, blend, limit):
    broken = inject_fault(blend, registry, "gap")
    lm = ScriptedLm(two_stage_answers(broken, "declarative") + [JUNK] * limit)
    session = run_pipeline(task_for(), registry, store, lm, limit=limit)
    assert not session.succeeded and session.final is None
    assert len(session.iterations) == 1 + limit and session.refinements == limit
    assert lm.remaining == 0


def test_pipeline_negative_limit(registry, blend):
    with pytest.raises(ValueError):
        run_pipeline(task_for(), registry, None, ScriptedLm([]), limit=-1)


def test_single_stage_pipeline(registry, blend):
    session = run_pipeline(task_for(), registry, None, ScriptedLm([program_answer(blend, "declarative")]),
                           two_stage=False)
    assert session.succeeded and [x.stage for x in session.exchanges] == ["single"]


def test_runtime_failure_feeds_refinement(registry, blend):
    calls = []

    def flaky(w):
        calls.append(w)
        if len(calls) == 1:
            return ExecutionTrace([], status=Status.FAILED, failure=("sampler", "steps exceeds scheduler budget"))
        return sim_runner(registry)(w)

    lm = ScriptedLm(two_stage_answers(blend, "declarative") + [program_answer(blend, "declarative")])
    session = run_pipeline(task_for(), registry, None, lm, runner=flaky)
    first = session.iterations[0]
    assert not first.executable and first.compiled
    [runtime] = [d for d in first.diagnostics if d.message.startswith(RUNTIME_PREFIX)]
    assert runtime.category is ErrorCategory.INVALID_PARAMETER and runtime.location.node == "sampler"
    assert "steps exceeds" in lm.calls[-1][1]
    assert session.succeeded and session.trace.ok and len(calls) == 2


def test_runtime_failure_without_param_is_connection(registry, blend):
    failing = lambda w: ExecutionTrace([], status=Status.FAILED, failure=("decode", "tensor shape mismatch"))
    session = run_pipeline(task_for(), registry, None, ScriptedLm(two_stage_answers(blend, "declarative")),
                           limit=0, runner=failing)
    assert [d.category for d in session.last.diagnostics if d.is_error] == [ErrorCategory.CONNECTION_ERROR]
    assert not session.succeeded


# -- session invariants -------------------------------------------------------------

SCENARIOS = ["clean", "gap", "bad_param", "unknown_type", "junk"]


def scripted(registry, golden, scenario, style, repairs):
    """Responses for a scenario: clean, a fault repaired after ``repairs`` junk attempts, or never parseable."""
    if scenario == "clean":
        return two_stage_answers(golden, style)
    if scenario == "junk":
        return [JUNK] * 10
    broken = inject_fault(golden, registry, scenario)
    return two_stage_answers(broken, style) + [JUNK] * repairs + [program_answer(golden, style)]


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(SCENARIOS), st.sampled_from(STYLES), st.integers(0, 4), st.integers(0, 4),
       st.integers(1, 3), st.integers(0, 15))
def test_session_invariants(registry, store, goldens, scenario, style, repairs, limit, k, golden_index):
    golden = list(goldens.values())[golden_index]
    lm = ScriptedLm(scripted(registry, golden, scenario, style, repairs) + [JUNK] * 10)
    session = run_pipeline(task_for(style), registry, store, lm, limit=limit, k=k)

    assert session.refinements <= limit and len(session.iterations) <= 1 + limit
    assert (session.final is not None) == session.last.executable
    # stage separation: the merged candidate keeps the component node multiset
    if session.draft is not None and session.iterations[0].outcome.workflow is not None:
        assert node_multiset(session.iterations[0].outcome.workflow) == node_multiset(session.draft)
    # prompt hygiene
    assert len(session.retrieved) == k
    for system, _ in lm.calls:
        assert grammar(style) in system
        assert system.count("### Reference ") == k
        assert all(name in system for name in registry.names())
    # determinism
    again = run_pipeline(task_for(style), registry, store,
                         ScriptedLm(scripted(registry, golden, scenario, style, repairs) + [JUNK] * 10),
                         limit=limit, k=k)
    assert again.to_json() == session.to_json()


def test_transcript_contents(registry, store, blend):
    broken = inject_fault(blend, registry, "bad_param")
    lm = ScriptedLm(two_stage_answers(broken, "dataflow") + [program_answer(blend, "dataflow")])
    doc = json.loads(run_pipeline(task_for("dataflow"), registry, store, lm).to_json())
    assert doc["prompt_version"] and doc["succeeded"] and doc["iteration_limit"] == 3
    assert [x["stage"] for x in doc["exchanges"]] == ["components", "topology", "refine"]
    assert doc["iterations"][0]["diagnostics"][0]["category"] == "InvalidParameter"
    assert len(doc["references"]) == 3 and doc["final"] == emit(blend, "dataflow")


def test_scripted_lm_serializes_concurrent_calls():
    import threading

    lm = ScriptedLm([str(i) for i in range(200)])
    got = []
    threads = [threading.Thread(target=lambda: got.extend(lm.complete("s", "u") for _ in range(50)))
               for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sorted(got, key=int) == [str(i) for i in range(200)] and len(lm.calls) == 200


def test_scriptbook_formats():
    book = ScriptBook.from_dict({"scripts": {"a": ["1"], "a@dataflow": ["2"]}})
    assert book.responses_for("a", "dataflow") == ["2"]
    assert book.responses_for("a", "declarative") == ["1"]
    with pytest.raises(LmError):
        book.responses_for("b")
    shared = ScriptBook.from_dict({"responses": ["x"]})
    assert shared.lm_for("anything").complete("s", "u") == "x"
    with pytest.raises(ValueError):
        ScriptBook.from_dict({"scripts": {"a": [1]}})
    assert ScriptBook.from_dict(book.to_dict()) == book


def test_task_spec_requires_description():
    with pytest.raises(ValueError):
        TaskSpec("   ")


# -- live backend against a local mock ----------------------------------------------


def test_openai_compatible_wire_format(registry, blend):
    routes = openai_routes(two_stage_answers(blend, "declarative"), dim=8)
    with MockServer(routes) as server:
        lm = OpenAICompatibleLm(server.url + "/v1", "test-model", key="sk-test", embed_model="emb")
        session = run_pipeline(task_for(), registry, None, lm)
        vec = lm.embed("hello")
    assert session.succeeded and len(vec) == 8
    chats = [(body, headers) for method, path, body, headers in server.requests if path.endswith("/chat/completions")]
    body, headers = chats[0]
    assert body["model"] == "test-model" and body["temperature"] == 0
    assert [m["role"] for m in body["messages"]] == ["system", "user"]
    assert headers["Authorization"] == "Bearer sk-test"


def test_openai_empty_reply_and_unreachable():
    with MockServer(openai_routes([""])) as server:
        with pytest.raises(EmptyResponse):
            OpenAICompatibleLm(server.url + "/v1", "m").complete("s", "u")
    with pytest.raises(LmError):
        OpenAICompatibleLm("http://127.0.0.1:9/v1", "m", timeout=2).complete("s", "u")


def test_from_env(monkeypatch):
    monkeypatch.setenv("AFLOW_LM_URL", "http://lm.local/v1")
    monkeypatch.setenv("AFLOW_LM_MODEL", "m1")
    monkeypatch.delenv("AFLOW_EMBED_MODEL", raising=False)
    lm = OpenAICompatibleLm.from_env()
    assert (lm.url, lm.model, lm.embed_model) == ("http://lm.local/v1", "m1", None)
    assert lm.embed("two words") == stub_embedding("two words")


def test_scripted_runs_touch_no_network(registry, store, blend, monkeypatch):
    def refuse(*args, **kwargs):
        raise AssertionError("network access attempted")

    monkeypatch.setattr(socket, "socket", refuse)
    monkeypatch.setattr(socket, "create_connection", refuse)
    broken = inject_fault(blend, registry, "gap")
    lm = ScriptedLm(two_stage_answers(broken, "declarative") + [program_answer(blend, "declarative")])
    session = run_pipeline(task_for(), registry, store, lm, runner=sim_runner(registry))
    assert session.succeeded and session.trace.ok

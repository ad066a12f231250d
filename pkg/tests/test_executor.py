from __future__ import annotations

import json
import random

import pytest

from aflow.executor import (
    Artifact,
    NodeFailure,
    PreconditionViolated,
    SimulatedBackend,
    Status,
    execute,
    fingerprint,
    simulated_backend,
)
from aflow.ir import Modality, new_workflow
from aflow.registry import resolve_params
from gen import random_workflow
from oracles import oracle_tokens


def test_single_leaf_node(registry):
    w = new_workflow().add_node("ld", "LoadImage", {"path": "a.png"})
    trace = execute(w, registry, simulated_backend())
    assert trace.ok and trace.order == ["ld"]
    assert trace.outputs[("ld", "IMAGE")].token == fingerprint("LoadImage", {"path": "a.png"}, {}, "IMAGE")
    assert len(trace.outputs) == 2  # IMAGE and MASK


def test_golden_fixtures_match_oracle(goldens, registry):
    for name, w in goldens.items():
        trace = execute(w, registry)
        expected = oracle_tokens(w, registry)
        assert {k: a.token for k, a in trace.outputs.items()} == expected, name


@pytest.mark.parametrize("seed", range(25))
def test_random_workflows_match_oracle(registry, seed):
    w = random_workflow(random.Random(seed), registry, 12)
    trace = execute(w, registry)
    assert trace.ok
    pos = {n: i for i, n in enumerate(trace.order)}
    assert all(pos[e.src.node_id] < pos[e.dst.node_id] for e in w.edges)
    assert {k: a.token for k, a in trace.outputs.items()} == oracle_tokens(w, registry)


class FailAt(SimulatedBackend):
    def __init__(self, node_id: str):
        self.node_id = node_id

    def run_node(self, node_id, schema, params, inputs):
        if node_id == self.node_id:
            raise NodeFailure("out of memory")
        return super().run_node(node_id, schema, params, inputs)


def test_failure_aborts_and_records_node(blend, registry):
    trace = execute(blend, registry, FailAt("sampler"))
    assert trace.status is Status.FAILED and trace.failure == ("sampler", "out of memory")
    ran = {n for n, _ in trace.outputs}
    assert "sampler" not in ran and not ran & {"decode", "save"}
    assert trace.order.index("sampler") < trace.order.index("decode")


class WrongModality(SimulatedBackend):
    def run_node(self, node_id, schema, params, inputs):
        out = super().run_node(node_id, schema, params, inputs)
        if schema.type_name == "VAEDecode":
            return {k: Artifact(Modality.TEXT, a.token) for k, a in out.items()}
        return out


def test_backend_contract_is_enforced(blend, registry):
    trace = execute(blend, registry, WrongModality())
    assert trace.status is Status.FAILED and trace.failure[0] == "decode"


def test_invalid_workflow_is_refused(blend, registry):
    blend.disconnect("sampler", "model")
    with pytest.raises(PreconditionViolated) as info:
        execute(blend, registry)
    assert info.value.diagnostics


def test_determinism(blend, registry):
    assert execute(blend, registry).to_json() == execute(blend.copy(), registry).to_json()


def test_fingerprint_sensitivity_and_order_independence():
    base = fingerprint("KSampler", {"seed": 1, "steps": 20}, {"model": "m", "positive": "p"}, "LATENT")
    assert base == fingerprint("KSampler", {"steps": 20, "seed": 1}, {"positive": "p", "model": "m"}, "LATENT")
    assert base != fingerprint("KSampler", {"seed": 2, "steps": 20}, {"model": "m", "positive": "p"}, "LATENT")
    assert base != fingerprint("KSampler", {"seed": 1, "steps": 20}, {"model": "m", "positive": "q"}, "LATENT")
    assert base != fingerprint("KSampler", {"seed": 1, "steps": 20}, {"model": "m", "positive": "p"}, "OTHER")


def test_tokens_do_not_collide_across_fixtures(goldens, registry):
    preimage: dict[str, tuple] = {}
    for w in goldens.values():
        trace = execute(w, registry)
        for (nid, port), art in trace.outputs.items():
            node = w.nodes[nid]
            params, _ = resolve_params(registry.lookup(node.type_name), node.params)
            inputs = tuple(sorted((e.dst.port_name, trace.outputs[(e.src.node_id, e.src.port_name)].token)
                                  for e in w.incoming_flows(nid)))
            key = (node.type_name, tuple(sorted(params.items())), inputs, port)
            assert preimage.setdefault(art.token, key) == key


def test_seeds_override_only_where_declared(blend, registry):
    plain = execute(blend, registry)
    seeded = execute(blend, registry, seeds={"sampler": 99, "save": 5})
    assert plain.outputs[("sampler", "LATENT")] != seeded.outputs[("sampler", "LATENT")]
    assert plain.outputs[("ckpt", "MODEL")] == seeded.outputs[("ckpt", "MODEL")]
    explicit = blend.copy().set_param("sampler", "seed", 99)
    assert execute(explicit, registry).outputs == seeded.outputs


def test_dataflow_isolation(goldens, registry):
    w = goldens["image_merge"]
    full = execute(w, registry)
    trimmed = w.copy().remove_node("preview")
    assert execute(trimmed, registry).outputs[("save", "PATH")] == full.outputs[("save", "PATH")]


def test_trace_json_keys(blend, registry):
    doc = json.loads(execute(blend, registry).to_json())
    assert list(doc) == ["status", "order", "outputs", "failure"]
    assert doc["status"] == "Completed" and "save.PATH" in doc["outputs"]

from __future__ import annotations

import json

import pytest

from aflow.diagnostics import Severity
from aflow.executor import (
    ComfyImportError,
    LiveTimeout,
    NetworkError,
    PreconditionViolated,
    Status,
    export_comfy,
    import_comfy,
    submit_live,
)
from aflow.executor.comfy import prompt_order
from aflow.frontends import SyntaxStyle, parse
from aflow.ir import NodeInstance, canonical_equal
from mock_servers import MockServer, comfy_routes

TWO_NODE = 'workflow { node ld = LoadImage(path="a.png"); node enc = VAEEncode(); ld.IMAGE -> enc.pixels; }'


def test_two_node_export_golden(registry):
    w = parse(TWO_NODE, SyntaxStyle.DECLARATIVE).workflow
    doc = json.loads(export_comfy(w, registry))
    assert doc == {
        "enc": {"class_type": "VAEEncode", "inputs": {"pixels": ["ld", 0]}},
        "ld": {"class_type": "LoadImage", "inputs": {"path": "a.png"}},
    }


def test_output_index_follows_schema_order(blend, registry):
    doc = json.loads(export_comfy(blend, registry))
    # CheckpointLoaderSimple outputs are (MODEL, CLIP, VAE)
    assert doc["decode"]["inputs"]["vae"] == ["ckpt", 2]
    assert doc["sampler"]["inputs"]["model"] == ["ckpt", 0]


def test_round_trip_on_every_golden(goldens, registry):
    for name, w in goldens.items():
        back, diags = import_comfy(export_comfy(w, registry), registry)
        assert diags == [] and canonical_equal(back, w), name


def test_fill_defaults_is_complete(blend, registry):
    doc = json.loads(export_comfy(blend, registry, fill_defaults=True))
    sampler = doc["sampler"]["inputs"]
    for p in registry.lookup("KSampler").params:
        assert p.name in sampler


def test_export_refuses_invalid(blend, registry):
    blend.nodes["save"] = NodeInstance("save", "NoSuchSaver", {})
    with pytest.raises(PreconditionViolated):
        export_comfy(blend, registry)


def test_import_extra_field_is_kept_as_metadata(registry):
    doc = {"ld": {"class_type": "LoadImage", "inputs": {"path": "a.png", "upload": "image"}}}
    w, diags = import_comfy(json.dumps(doc), registry)
    assert w.nodes["ld"].params == {"path": "a.png"}
    assert w.metadata["comfy.extra.ld.upload"] == '"image"'
    assert [d.severity for d in diags] == [Severity.WARNING]


@pytest.mark.parametrize(
    "doc, where",
    [
        ({"ld": {"class_type": "LoadImage", "inputs": {}}, "enc": {"class_type": "VAEEncode",
                                                            "inputs": {"pixels": ["ld", 7]}}}, "enc"),
        ({"enc": {"class_type": "VAEEncode", "inputs": {"pixels": ["ghost", 0]}}}, "enc"),
        ({"x": {"inputs": {}}}, "x"),
        ({"x": {"class_type": "LoadImage", "inputs": []}}, "x"),
    ],
    ids=["index-out-of-range", "unknown-source", "no-class-type", "inputs-not-object"],
)
def test_import_errors_carry_location(registry, doc, where):
    with pytest.raises(ComfyImportError) as info:
        import_comfy(json.dumps(doc), registry)
    assert where in info.value.location


def test_import_numeric_ids_and_unknown_types(registry):
    doc = {
        "3": {"class_type": "LoadImage", "inputs": {"path": "p.png"}},
        "7": {"class_type": "FancyUpscaler", "inputs": {"image": ["3", 0], "factor": 2}},
        "9": {"class_type": "SaveImage", "inputs": {"images": ["7", 0]}},
    }
    w, _ = import_comfy(doc, registry)
    assert w.metadata["comfy.id.n_3"] == "3"
    assert [str(e) for e in w.edges][-1].startswith("n_7.output_0")
    assert w.nodes["n_7"].params == {"factor": 2}


def test_prompt_order_is_topological(blend, registry):
    doc = json.loads(export_comfy(blend, registry))
    assert prompt_order(doc) == blend.topological_order()


def test_live_completed(blend, registry):
    with MockServer(comfy_routes("ok")) as server:
        trace = submit_live(export_comfy(blend, registry, fill_defaults=True), server.url, poll_interval=0.01)
    assert trace.status is Status.COMPLETED
    assert trace.outputs[("save", "images_0")].token == "output/blend_00001_.png"
    posted = [body for method, path, body, _ in server.requests if path == "/prompt"][0]
    assert posted["prompt"]["sampler"]["class_type"] == "KSampler" and posted["client_id"]
    assert sum(path.startswith("/history/") for _, path, _, _ in server.requests) == 2


def test_live_node_failure(blend, registry):
    with MockServer(comfy_routes("fail")) as server:
        trace = submit_live(export_comfy(blend, registry), server.url, poll_interval=0.01)
    assert trace.status is Status.FAILED and trace.failure == ("sampler", "CUDA out of memory")


def test_live_rejected_prompt(blend, registry):
    with MockServer(comfy_routes("reject")) as server:
        trace = submit_live(export_comfy(blend, registry), server.url)
    assert trace.status is Status.FAILED and trace.failure[0] == "sampler"
    assert "bigger than max" in trace.failure[1]


def test_live_timeout(blend, registry):
    with MockServer(comfy_routes("hang")) as server:
        with pytest.raises(LiveTimeout):
            submit_live(export_comfy(blend, registry), server.url, timeout=0.2, poll_interval=0.02)


def test_unreachable_endpoint(blend, registry):
    with pytest.raises(NetworkError):
        submit_live(export_comfy(blend, registry), "http://127.0.0.1:9", timeout=1)

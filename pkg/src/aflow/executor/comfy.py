"""ComfyUI interop: API-prompt export/import and live submission over HTTP.

The API prompt maps node ids to ``{"class_type", "inputs"}``. Literal inputs
are parameter values; links are ``[source_node_id, output_index]`` where the
index is the position of the port in the source schema's outputs.
"""

from __future__ import annotations

import heapq
import json
import logging
import os
import re
import socket
import time
import urllib.error
import urllib.request
import uuid
from typing import Any, Mapping

from ..diagnostics import Diagnostic, ErrorCategory, Location, Severity, is_executable
from ..ir import IDENT_RE, Modality, Workflow, canonicalize, check_param_value, is_identifier
from ..registry import Registry, resolve_params
from ..validator import check
from .core import Artifact, ExecutionTrace, PreconditionViolated, Status

log = logging.getLogger(__name__)

DEFAULT_ENDPOINT = "http://127.0.0.1:8188"
DEFAULT_TIMEOUT = 600.0
DEFAULT_POLL_INTERVAL = 1.0


class ExportUnsupported(ValueError):
    pass


class ComfyImportError(ValueError):
    def __init__(self, message: str, location: str | None = None):
        super().__init__(f"{location}: {message}" if location else message)
        self.location = location


class NetworkError(ConnectionError):
    pass


class LiveTimeout(TimeoutError):
    pass


def default_endpoint() -> str:
    return os.environ.get("AFLOW_COMFY_URL", DEFAULT_ENDPOINT)


# -- export / import ----------------------------------------------------------


def export_prompt(w: Workflow, r: Registry, *, fill_defaults: bool = False) -> dict[str, Any]:
    diags = check(w, r)
    if not is_executable(diags):
        raise PreconditionViolated("workflow does not validate; refusing to export", diags)
    w = canonicalize(w)
    prompt: dict[str, Any] = {}
    for nid, node in w.nodes.items():
        schema = r.lookup(node.type_name)
        inputs: dict[str, Any] = dict(resolve_params(schema, node.params)[0] if fill_defaults else node.params)
        for e in w.incoming_flows(nid):
            if e.dst.port_name in inputs:
                raise ExportUnsupported(f"{nid}: {e.dst.port_name!r} is both a parameter and a link")
            src_schema = r.lookup(w.nodes[e.src.node_id].type_name)
            inputs[e.dst.port_name] = [e.src.node_id, src_schema.output_index(e.src.port_name)]
        prompt[nid] = {"class_type": node.type_name, "inputs": inputs}
    return prompt


def export_comfy(w: Workflow, r: Registry, *, fill_defaults: bool = False) -> bytes:
    """Serialize as a ComfyUI API prompt.

    Only the parameters written in the workflow are exported unless
    ``fill_defaults`` is set; a live server wants every widget value, while
    the plain export round-trips through :func:`import_comfy`.
    """
    doc = export_prompt(w, r, fill_defaults=fill_defaults)
    return (json.dumps(doc, indent=2, ensure_ascii=False) + "\n").encode()


def _is_link(value: Any) -> bool:
    return (
        isinstance(value, list)
        and len(value) == 2
        and isinstance(value[0], (str, int))
        and not isinstance(value[0], bool)
        and isinstance(value[1], int)
        and not isinstance(value[1], bool)
    )


def _local_id(raw: str, taken: set[str]) -> str:
    if is_identifier(raw) and raw not in taken:
        return raw
    base = re.sub(r"[^A-Za-z0-9_]", "_", raw)
    if not base or not IDENT_RE.match(base):
        base = "n_" + base
    candidate, i = base, 1
    while candidate in taken:
        i += 1
        candidate = f"{base}_{i}"
    return candidate


def import_comfy(doc: bytes | str | Mapping[str, Any], r: Registry) -> tuple[Workflow, list[Diagnostic]]:
    """Rebuild a workflow from an API prompt.

    Unknown function types are kept (the validator reports them). Literal
    inputs that match neither a parameter nor an input port are dropped from
    the node, recorded in ``metadata`` under ``comfy.extra.<node>.<field>``,
    and reported as warnings.
    """
    if isinstance(doc, (bytes, str)):
        try:
            doc = json.loads(doc)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ComfyImportError(f"not JSON: {exc}") from exc
    if not isinstance(doc, Mapping):
        raise ComfyImportError("API prompt must be a JSON object")
    prompt = doc.get("prompt", doc) if isinstance(doc.get("prompt"), Mapping) else doc

    w = Workflow(metadata={"source": "comfy"})
    diags: list[Diagnostic] = []
    ids: dict[str, str] = {}
    for raw_id, entry in prompt.items():
        where = f"node {raw_id}"
        if not isinstance(entry, Mapping) or not isinstance(entry.get("class_type"), str):
            raise ComfyImportError("entry needs a class_type", where)
        if not is_identifier(entry["class_type"]):
            raise ComfyImportError(f"class_type {entry['class_type']!r} is not an identifier", where)
        if not isinstance(entry.get("inputs", {}), Mapping):
            raise ComfyImportError("inputs must be an object", where)
        nid = _local_id(str(raw_id), set(ids.values()))
        ids[str(raw_id)] = nid
        if nid != str(raw_id):
            w.metadata[f"comfy.id.{nid}"] = str(raw_id)
        w.add_node(nid, entry["class_type"])

    links = []
    for raw_id, entry in prompt.items():
        nid = ids[str(raw_id)]
        schema = r.get(entry["class_type"])
        for key, value in entry.get("inputs", {}).items():
            where = f"node {raw_id} input {key!r}"
            if _is_link(value):
                links.append((where, nid, key, value))
                continue
            known = schema is None or schema.param(key) is not None
            scalar = isinstance(value, (bool, int, float, str))
            if known and scalar:
                try:
                    w.set_param(nid, key, check_param_value(value))
                    continue
                except (TypeError, ValueError) as exc:
                    raise ComfyImportError(str(exc), where) from exc
            if schema is not None and schema.input(key) is not None:
                raise ComfyImportError("input port given a literal instead of a link", where)
            w.metadata[f"comfy.extra.{nid}.{key}"] = json.dumps(value, ensure_ascii=False)
            diags.append(Diagnostic(
                ErrorCategory.INVALID_PARAMETER,
                f"field {key!r} is not a parameter of {entry['class_type']}; preserved in metadata",
                Location(node=nid, param=key if is_identifier(key) else None),
                Severity.WARNING,
            ))

    for where, nid, key, (src_raw, index) in links:
        src_raw = str(src_raw)
        if src_raw not in ids:
            raise ComfyImportError(f"link to unknown node {src_raw!r}", where)
        if not is_identifier(key):
            raise ComfyImportError("input name is not an identifier", where)
        src = ids[src_raw]
        src_schema = r.get(w.nodes[src].type_name)
        if src_schema is not None:
            if not 0 <= index < len(src_schema.outputs):
                raise ComfyImportError(
                    f"output index {index} out of range for {src_schema.type_name} "
                    f"({len(src_schema.outputs)} outputs)", where)
            port = src_schema.outputs[index].name
        else:
            if index < 0:
                raise ComfyImportError(f"negative output index {index}", where)
            port = f"output_{index}"
        w.connect(src, port, nid, key)
    return w, diags


# -- live submission ----------------------------------------------------------


def _http_json(url: str, payload: Any | None = None, timeout: float = 30.0) -> Any:
    data = None
    headers = {"Accept": "application/json"}
    if payload is not None:
        data = json.dumps(payload).encode()
        headers["Content-Type"] = "application/json"
    req = urllib.request.Request(url, data=data, headers=headers, method="POST" if data is not None else "GET")
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return json.loads(resp.read() or b"null")
    except urllib.error.HTTPError as exc:
        body = exc.read()
        try:
            return {"__http_error__": exc.code, **json.loads(body)}
        except (json.JSONDecodeError, TypeError):
            raise NetworkError(f"{url}: HTTP {exc.code}") from exc
    except (urllib.error.URLError, socket.timeout, ConnectionError, ValueError) as exc:
        raise NetworkError(f"{url}: {getattr(exc, 'reason', exc)}") from exc


def fetch_object_info(endpoint: str | None = None, timeout: float = 30.0) -> Any:
    base = (endpoint or default_endpoint()).rstrip("/")
    return _http_json(f"{base}/object_info", timeout=timeout)


def prompt_order(prompt: Mapping[str, Any]) -> list[str]:
    """Topological order of an API prompt by its links, smallest id first on ties."""
    deps = {str(k): set() for k in prompt}
    for k, entry in prompt.items():
        for value in (entry.get("inputs") or {}).values():
            if _is_link(value) and str(value[0]) in deps:
                deps[str(k)].add(str(value[0]))
    users: dict[str, set[str]] = {k: set() for k in deps}
    for k, ds in deps.items():
        for d in ds:
            users[d].add(k)
    indeg = {k: len(ds) for k, ds in deps.items()}
    ready = [k for k, d in indeg.items() if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        k = heapq.heappop(ready)
        order.append(k)
        for u in users[k]:
            indeg[u] -= 1
            if indeg[u] == 0:
                heapq.heappush(ready, u)
    return order


_OUTPUT_MODALITY = {
    "images": Modality.IMAGE,
    "gifs": Modality.VIDEO,
    "videos": Modality.VIDEO,
    "video": Modality.VIDEO,
    "audio": Modality.AUDIO,
    "meshes": Modality.MESH,
    "3d": Modality.MESH,
    "text": Modality.TEXT,
}


def _collect_outputs(entry: Mapping[str, Any]) -> dict[tuple[str, str], Artifact]:
    outputs: dict[tuple[str, str], Artifact] = {}
    for node_id, node_out in (entry.get("outputs") or {}).items():
        if not isinstance(node_out, Mapping):
            continue
        for key, items in node_out.items():
            if not isinstance(items, list):
                continue
            for i, item in enumerate(items):
                if isinstance(item, Mapping) and item.get("filename"):
                    token = "/".join(p for p in (item.get("type"), item.get("subfolder"), item["filename"]) if p)
                else:
                    token = json.dumps(item, ensure_ascii=False)
                outputs[(str(node_id), f"{key}_{i}")] = Artifact(_OUTPUT_MODALITY.get(key, Modality.ANY), token)
    return outputs


def _execution_error(status: Mapping[str, Any]) -> tuple[str, str] | None:
    for msg in reversed(status.get("messages") or []):
        if isinstance(msg, list) and len(msg) >= 2 and msg[0] == "execution_error" and isinstance(msg[1], Mapping):
            detail = msg[1]
            text = detail.get("exception_message") or detail.get("exception_type") or "execution error"
            return str(detail.get("node_id", "?")), str(text).strip()
    return None


def submit_live(
    doc: bytes | Mapping[str, Any],
    endpoint: str | None = None,
    *,
    timeout: float = DEFAULT_TIMEOUT,
    poll_interval: float = DEFAULT_POLL_INTERVAL,
    client_id: str | None = None,
) -> ExecutionTrace:
    """Queue an API prompt on a ComfyUI server and wait for its history entry.

    Remote node errors come back as a Failed trace; transport problems raise
    NetworkError and running past ``timeout`` raises LiveTimeout.
    """
    prompt = json.loads(doc) if isinstance(doc, (bytes, str)) else dict(doc)
    base = (endpoint or default_endpoint()).rstrip("/")
    order = prompt_order(prompt)
    trace = ExecutionTrace(order)
    resp = _http_json(f"{base}/prompt", {"prompt": prompt, "client_id": client_id or uuid.uuid4().hex})
    if not isinstance(resp, Mapping):
        raise NetworkError(f"{base}/prompt: unexpected response {resp!r}")
    if "__http_error__" in resp or resp.get("node_errors") and not resp.get("prompt_id"):
        node_errors = resp.get("node_errors") or {}
        node = sorted(node_errors)[0] if node_errors else "?"
        errors = (node_errors.get(node) or {}).get("errors") or [resp.get("error") or {}]
        message = errors[0].get("message", "prompt rejected") if isinstance(errors[0], Mapping) else str(errors[0])
        trace.status, trace.failure = Status.FAILED, (str(node), str(message))
        return trace
    prompt_id = resp.get("prompt_id")
    if not prompt_id:
        raise NetworkError(f"{base}/prompt: no prompt_id in response")

    deadline = time.monotonic() + timeout
    while True:
        history = _http_json(f"{base}/history/{prompt_id}")
        entry = history.get(prompt_id) if isinstance(history, Mapping) else None
        if isinstance(entry, Mapping):
            status = entry.get("status") or {}
            failure = _execution_error(status)
            if status.get("status_str") == "error" or failure:
                trace.outputs = _collect_outputs(entry)
                trace.status, trace.failure = Status.FAILED, failure or ("?", "remote execution failed")
                return trace
            if status.get("completed", "outputs" in entry and not status):
                trace.outputs = _collect_outputs(entry)
                return trace
        if time.monotonic() >= deadline:
            raise LiveTimeout(f"prompt {prompt_id} did not finish within {timeout}s")
        log.debug("waiting for prompt %s", prompt_id)
        time.sleep(poll_interval)

"""In-process HTTP servers that speak just enough of the ComfyUI and OpenAI wire formats."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Callable


class _Handler(BaseHTTPRequestHandler):
    server: "MockServer._Server"

    def log_message(self, *args) -> None:  # keep test output quiet
        pass

    def _reply(self, status: int, doc: Any) -> None:
        body = json.dumps(doc).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self) -> None:
        self._reply(*self.server.owner.route("GET", self.path, None, dict(self.headers)))

    def do_POST(self) -> None:
        length = int(self.headers.get("Content-Length") or 0)
        body = json.loads(self.rfile.read(length) or b"null")
        self._reply(*self.server.owner.route("POST", self.path, body, dict(self.headers)))


class MockServer:
    class _Server(ThreadingHTTPServer):
        owner: "MockServer"

    def __init__(self, routes: Callable[[str, str, Any], tuple[int, Any]]):
        self.routes = routes
        self.requests: list[tuple[str, str, Any, dict]] = []
        self._server = self._Server(("127.0.0.1", 0), _Handler)
        self._server.owner = self
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    def route(self, method, path, body, headers):
        self.requests.append((method, path, body, headers))
        return self.routes(method, path, body)

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def __enter__(self) -> MockServer:
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self._server.shutdown()
        self._server.server_close()


def comfy_routes(scenario: str, object_info: dict | None = None, pending_polls: int = 1):
    """ComfyUI behaviour: ``ok``, ``fail`` (node raises), ``reject`` (validation error) or ``hang``."""
    polls = {"n": 0}

    def routes(method, path, body):
        if method == "GET" and path == "/object_info":
            return 200, object_info or {}
        if method == "POST" and path == "/prompt":
            if scenario == "reject":
                return 400, {"error": {"type": "prompt_outputs_failed_validation", "message": "Prompt invalid"},
                             "node_errors": {"sampler": {"errors": [{"message": "Value 500 bigger than max 100"}]}}}
            return 200, {"prompt_id": "job-1", "number": 0, "node_errors": {}}
        if method == "GET" and path == "/history/job-1":
            polls["n"] += 1
            if scenario == "hang" or polls["n"] <= pending_polls:
                return 200, {}
            if scenario == "fail":
                return 200, {"job-1": {"outputs": {}, "status": {
                    "status_str": "error", "completed": False,
                    "messages": [["execution_start", {"prompt_id": "job-1"}],
                                 ["execution_error", {"node_id": "sampler", "exception_message": "CUDA out of memory",
                                                      "exception_type": "RuntimeError"}]]}}}
            return 200, {"job-1": {
                "outputs": {"save": {"images": [{"filename": "blend_00001_.png", "subfolder": "", "type": "output"}]}},
                "status": {"status_str": "success", "completed": True, "messages": []}}}
        return 404, {"error": "not found"}

    return routes


def openai_routes(replies: list[str], dim: int = 8):
    queue = list(replies)

    def routes(method, path, body):
        if path == "/v1/chat/completions":
            text = queue.pop(0) if queue else ""
            return 200, {"choices": [{"message": {"role": "assistant", "content": text}}]}
        if path == "/v1/embeddings":
            return 200, {"data": [{"embedding": [float(len(body["input"]) % 7 + i) for i in range(dim)]}]}
        return 404, {"error": "not found"}

    return routes

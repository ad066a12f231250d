"""Language-model backends: a scripted playback backend and an OpenAI-compatible HTTP client."""

from __future__ import annotations

import hashlib
import json
import math
import os
import re
import socket
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Protocol, Sequence


class LmError(Exception):
    pass


class EmptyResponse(LmError):
    pass


class LmBackend(Protocol):
    def complete(self, system: str, user: str) -> str: ...

    def embed(self, text: str) -> list[float]: ...


EMBED_DIM = 256
_WORD_RE = re.compile(r"[a-z0-9]+")


def stub_embedding(text: str, dim: int = EMBED_DIM) -> list[float]:
    """Hashed bag-of-words vector, L2-normalized; deterministic across processes."""
    vec = [0.0] * dim
    for word in _WORD_RE.findall(text.lower()):
        digest = hashlib.sha256(word.encode()).digest()
        vec[int.from_bytes(digest[:4], "little") % dim] += 1.0
    norm = math.sqrt(sum(v * v for v in vec))
    return [v / norm for v in vec] if norm else vec


@dataclass
class ScriptedLm:
    """Plays back a fixed list of responses and records every prompt it receives.

    Running past the end of the script raises LmError. Calls are serialized so
    a single script can be shared between threads, although its transcript is
    only meaningful when the caller is sequential.
    """

    responses: Sequence[str]
    embed_dim: int = EMBED_DIM
    calls: list[tuple[str, str]] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def complete(self, system: str, user: str) -> str:
        with self._lock:
            index = len(self.calls)
            self.calls.append((system, user))
            if index >= len(self.responses):
                raise LmError(f"script exhausted after {len(self.responses)} responses")
            return self.responses[index]

    def embed(self, text: str) -> list[float]:
        return stub_embedding(text, self.embed_dim)

    @property
    def remaining(self) -> int:
        return max(len(self.responses) - len(self.calls), 0)


class StubEmbedder:
    """Backend that only embeds; completing is an error. Useful for retrieval-only tools."""

    def complete(self, system: str, user: str) -> str:
        raise LmError("no language model configured")

    def embed(self, text: str) -> list[float]:
        return stub_embedding(text)


class OpenAICompatibleLm:
    """Chat-completions and embeddings over the OpenAI wire format."""

    def __init__(self, url: str, model: str, key: str | None = None, embed_model: str | None = None,
                 timeout: float = 120.0, temperature: float = 0.0):
        self.url = url.rstrip("/")
        self.model = model
        self.key = key
        self.embed_model = embed_model
        self.timeout = timeout
        self.temperature = temperature

    @classmethod
    def from_env(cls, **overrides) -> OpenAICompatibleLm:
        env = {
            "url": os.environ.get("AFLOW_LM_URL"),
            "model": os.environ.get("AFLOW_LM_MODEL"),
            "key": os.environ.get("AFLOW_LM_KEY"),
            "embed_model": os.environ.get("AFLOW_EMBED_MODEL"),
        }
        env.update({k: v for k, v in overrides.items() if v is not None})
        if not env["url"] or not env["model"]:
            raise LmError("set AFLOW_LM_URL and AFLOW_LM_MODEL (or pass --lm-url/--lm-model)")
        return cls(**env)

    def _post(self, path: str, payload: dict) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.key:
            headers["Authorization"] = f"Bearer {self.key}"
        req = urllib.request.Request(self.url + path, json.dumps(payload).encode(), headers, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return json.loads(resp.read())
        except urllib.error.HTTPError as exc:
            raise LmError(f"{path}: HTTP {exc.code}: {exc.read()[:500]!r}") from exc
        except (urllib.error.URLError, socket.timeout, ConnectionError, json.JSONDecodeError) as exc:
            raise LmError(f"{path}: {getattr(exc, 'reason', exc)}") from exc

    def complete(self, system: str, user: str) -> str:
        doc = self._post("/chat/completions", {
            "model": self.model,
            "temperature": self.temperature,
            "messages": [{"role": "system", "content": system}, {"role": "user", "content": user}],
        })
        try:
            text = doc["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise LmError(f"malformed completion response: {doc!r:.300}") from exc
        if not text or not text.strip():
            raise EmptyResponse("language model returned an empty response")
        return text

    def embed(self, text: str) -> list[float]:
        if not self.embed_model:
            return stub_embedding(text)
        doc = self._post("/embeddings", {"model": self.embed_model, "input": text})
        try:
            return [float(x) for x in doc["data"][0]["embedding"]]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise LmError("malformed embedding response") from exc

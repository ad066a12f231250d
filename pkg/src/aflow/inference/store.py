"""Reference programs for retrieval-augmented prompting."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

from ..diagnostics import is_executable
from ..frontends import SyntaxStyle, parse
from ..ir import Workflow
from ..registry import Registry
from ..validator import check


class EmptyStore(LookupError):
    pass


class StoreError(ValueError):
    pass


@dataclass
class Reference:
    name: str
    task: str
    workflow: Workflow
    embedding: list[float]


def cosine(a: Sequence[float], b: Sequence[float]) -> float:
    if len(a) != len(b):
        raise ValueError(f"embedding dimensions differ ({len(a)} vs {len(b)})")
    dot = sum(x * y for x, y in zip(a, b))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(y * y for y in b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return dot / (na * nb)


def read_embedding(path: Path) -> list[float]:
    raw = path.read_bytes()
    if len(raw) % 4:
        raise StoreError(f"{path}: size is not a multiple of 4 bytes")
    return list(struct.unpack(f"<{len(raw) // 4}f", raw))


def write_embedding(path: Path, vec: Sequence[float]) -> None:
    path.write_bytes(struct.pack(f"<{len(vec)}f", *vec))


class ReferenceStore:
    def __init__(self, entries: Sequence[Reference] = ()):
        self.entries = list(entries)
        dims = {len(e.embedding) for e in self.entries}
        if len(dims) > 1:
            raise StoreError(f"mixed embedding dimensions {sorted(dims)}")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @classmethod
    def load(cls, directory: str | Path, embed: Callable[[str], list[float]],
             registry: Registry | None = None, use_cache: bool = True) -> ReferenceStore:
        """Load ``<name>.task.txt`` + ``<name>.adl`` pairs, embedding tasks that lack a ``.emb`` cache.

        With a registry, every reference must validate cleanly.
        """
        directory = Path(directory)
        entries = []
        for task_path in sorted(directory.glob("*.task.txt")):
            name = task_path.name[: -len(".task.txt")]
            program_path = directory / f"{name}.adl"
            if not program_path.exists():
                raise StoreError(f"{task_path}: missing {program_path.name}")
            outcome = parse(program_path.read_text(encoding="utf-8"), SyntaxStyle.DECLARATIVE)
            if outcome.workflow is None:
                raise StoreError(f"{program_path}: " + "; ".join(map(str, outcome.diagnostics)))
            if registry is not None and not is_executable(check(outcome.workflow, registry)):
                raise StoreError(f"{program_path}: reference program does not validate")
            task = task_path.read_text(encoding="utf-8").strip()
            emb_path = directory / f"{name}.emb"
            vec = read_embedding(emb_path) if use_cache and emb_path.exists() else embed(task)
            entries.append(Reference(name, task, outcome.workflow, list(vec)))
        return cls(entries)

    def save_embeddings(self, directory: str | Path) -> None:
        for e in self.entries:
            write_embedding(Path(directory) / f"{e.name}.emb", e.embedding)


def bundled_references_dir() -> Path:
    return Path(str(resources.files("aflow").joinpath("data/references")))


def top_k(store: ReferenceStore, query: Sequence[float], k: int = 3) -> list[Reference]:
    if not len(store):
        raise EmptyStore("reference store is empty")
    if k < 1:
        raise ValueError("k must be at least 1")
    scored = sorted(((-cosine(query, e.embedding), i) for i, e in enumerate(store.entries)))
    return [store.entries[i] for _, i in scored[:k]]

"""Language-model inference of workflows: retrieval, two-stage drafting, refinement."""

from .lm import EmptyResponse, LmBackend, LmError, OpenAICompatibleLm, ScriptedLm, StubEmbedder, stub_embedding
from .pipeline import (
    DEFAULT_K,
    DEFAULT_LIMIT,
    Draft,
    InferenceSession,
    Iteration,
    IterationLimitReached,
    TaskInput,
    TaskSpec,
    extract_candidate,
    infer_components,
    infer_topology,
    refine,
    retrieve_references,
    run_pipeline,
    sim_runner,
)
from .prompts import PROMPT_VERSION
from .scripts import FAULTS, ScriptBook, answer, inject_fault, program_answer, two_stage_answers
from .store import EmptyStore, Reference, ReferenceStore, StoreError, bundled_references_dir, cosine

__all__ = [
    "DEFAULT_K",
    "DEFAULT_LIMIT",
    "Draft",
    "EmptyResponse",
    "FAULTS",
    "EmptyStore",
    "InferenceSession",
    "Iteration",
    "IterationLimitReached",
    "LmBackend",
    "LmError",
    "OpenAICompatibleLm",
    "PROMPT_VERSION",
    "Reference",
    "ReferenceStore",
    "ScriptBook",
    "ScriptedLm",
    "StoreError",
    "StubEmbedder",
    "TaskInput",
    "TaskSpec",
    "answer",
    "bundled_references_dir",
    "cosine",
    "extract_candidate",
    "infer_components",
    "inject_fault",
    "infer_topology",
    "program_answer",
    "refine",
    "retrieve_references",
    "run_pipeline",
    "sim_runner",
    "stub_embedding",
    "two_stage_answers",
]

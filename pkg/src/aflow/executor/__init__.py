"""Topological execution against pluggable backends, plus the ComfyUI bridge."""

from .comfy import (
    ComfyImportError,
    ExportUnsupported,
    LiveTimeout,
    NetworkError,
    export_comfy,
    export_prompt,
    import_comfy,
    submit_live,
)
from .core import (
    Artifact,
    Backend,
    ExecutionTrace,
    NodeFailure,
    PreconditionViolated,
    SimulatedBackend,
    Status,
    execute,
    fingerprint,
    simulated_backend,
)

__all__ = [
    "Artifact",
    "Backend",
    "ComfyImportError",
    "ExecutionTrace",
    "ExportUnsupported",
    "LiveTimeout",
    "NetworkError",
    "NodeFailure",
    "PreconditionViolated",
    "SimulatedBackend",
    "Status",
    "execute",
    "export_comfy",
    "export_prompt",
    "fingerprint",
    "import_comfy",
    "simulated_backend",
    "submit_live",
]

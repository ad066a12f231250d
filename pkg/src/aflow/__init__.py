"""Symbolic workflow toolkit for generative pipelines.

A workflow is a set of typed functions with bound parameters and the data
flows between their ports. This package parses three textual syntaxes into
one IR, validates it against a function catalog, executes it on a simulated
or ComfyUI backend, and infers workflows from task descriptions with a
language model.
"""

from .diagnostics import Diagnostic, ErrorCategory, Location, Severity, is_executable
from .frontends import SyntaxStyle, convert, emit, parse
from .ir import Edge, Modality, NodeInstance, PortRef, Workflow, canonical_equal, canonicalize, topological_order
from .registry import FunctionSchema, Registry, bundled_catalog, load_catalog
from .validator import check

__version__ = "0.1.0"

__all__ = [
    "Diagnostic",
    "Edge",
    "ErrorCategory",
    "FunctionSchema",
    "Location",
    "Modality",
    "NodeInstance",
    "PortRef",
    "Registry",
    "Severity",
    "SyntaxStyle",
    "Workflow",
    "bundled_catalog",
    "canonical_equal",
    "canonicalize",
    "check",
    "convert",
    "emit",
    "is_executable",
    "load_catalog",
    "parse",
    "topological_order",
]

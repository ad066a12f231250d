"""Parsers and printers for the declarative, dataflow and pseudo-natural syntaxes.

All three produce the same :class:`~aflow.ir.Workflow`. Parsing is purely
structural: function types and port names are not checked against a
catalog here, that is the validator's job.
"""

from __future__ import annotations

from enum import Enum
from pathlib import Path
from typing import Iterable

from ..ir import Workflow
from . import dataflow, declarative, pseudo_natural
from .common import ParseOutcome, Span, StatementList, UnrepresentableWorkflow, assemble


class SyntaxStyle(str, Enum):
    DECLARATIVE = "declarative"
    DATAFLOW = "dataflow"
    PSEUDO_NATURAL = "pseudo_natural"

    @classmethod
    def parse(cls, value: str | SyntaxStyle) -> SyntaxStyle:
        if isinstance(value, SyntaxStyle):
            return value
        return cls(value.replace("-", "_"))


EXTENSIONS = {
    ".adl": SyntaxStyle.DECLARATIVE,
    ".adf": SyntaxStyle.DATAFLOW,
    ".apn": SyntaxStyle.PSEUDO_NATURAL,
}
_MODULES = {
    SyntaxStyle.DECLARATIVE: declarative,
    SyntaxStyle.DATAFLOW: dataflow,
    SyntaxStyle.PSEUDO_NATURAL: pseudo_natural,
}


def style_for_path(path: str | Path) -> SyntaxStyle | None:
    return EXTENSIONS.get(Path(path).suffix.lower())


def extension_for(style: SyntaxStyle) -> str:
    return next(ext for ext, s in EXTENSIONS.items() if s is style)


def grammar(style: SyntaxStyle) -> str:
    return _MODULES[SyntaxStyle.parse(style)].GRAMMAR


def parse_statements(text: str, style: SyntaxStyle, *, fragment: bool = False,
                     predeclared: Iterable[str] = ()) -> StatementList:
    style = SyntaxStyle.parse(style)
    if style is SyntaxStyle.DECLARATIVE:
        return declarative.parse_statements(text, fragment=fragment)
    if style is SyntaxStyle.DATAFLOW:
        return dataflow.parse_statements(text, predeclared=predeclared)
    return pseudo_natural.parse_statements(text)


def parse(text: str, style: SyntaxStyle | str) -> ParseOutcome:
    style = SyntaxStyle.parse(style)
    outcome = assemble(parse_statements(text, style))
    if outcome.workflow is not None:
        outcome.workflow.metadata["syntax"] = style.value
    return outcome


def emit(w: Workflow, style: SyntaxStyle | str) -> str:
    return _MODULES[SyntaxStyle.parse(style)].emit(w)


def emit_nodes(w: Workflow, style: SyntaxStyle | str) -> str:
    """Only the node declarations (with parameters), no connections."""
    return _MODULES[SyntaxStyle.parse(style)].emit_nodes(w)


def emit_edges(w: Workflow, style: SyntaxStyle | str) -> str:
    """Only the connections. Dataflow has no standalone edge form, so the whole program is returned."""
    style = SyntaxStyle.parse(style)
    if style is SyntaxStyle.DATAFLOW:
        return dataflow.emit(w)
    return _MODULES[style].emit_edges(w)


def convert(text: str, from_style: SyntaxStyle | str, to_style: SyntaxStyle | str) -> tuple[str | None, ParseOutcome]:
    """Re-express a program in another syntax.

    Returns ``(text, outcome)``; text is None when parsing failed, in which
    case ``outcome.diagnostics`` explains why.
    """
    outcome = parse(text, from_style)
    if outcome.workflow is None:
        return None, outcome
    return emit(outcome.workflow, to_style), outcome


__all__ = [
    "EXTENSIONS",
    "ParseOutcome",
    "Span",
    "SyntaxStyle",
    "UnrepresentableWorkflow",
    "convert",
    "emit",
    "emit_edges",
    "emit_nodes",
    "extension_for",
    "grammar",
    "parse",
    "parse_statements",
    "style_for_path",
]

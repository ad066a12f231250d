"""Statement model, token cursor and workflow assembly shared by the parsers."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Union

from ..diagnostics import Diagnostic, ErrorCategory, Location, Severity
from ..ir import ParamValue, PortRef, Workflow
from .lexer import EOF, ERROR, NUMBER, PUNCT, STRING, WORD, Token


@dataclass(frozen=True)
class Span:
    line: int
    column: int
    end_line: int
    end_column: int

    def to_dict(self) -> dict[str, int]:
        return dict(self.__dict__)


@dataclass
class NodeDecl:
    id: str
    type_name: str
    params: list[tuple[str, ParamValue, Token]]
    span: Span


@dataclass
class EdgeDecl:
    src: PortRef
    dst: PortRef
    span: Span


@dataclass
class ParamSet:
    node: str
    name: str
    value: ParamValue
    span: Span


Statement = Union[NodeDecl, EdgeDecl, ParamSet]


@dataclass
class ParseOutcome:
    workflow: Workflow | None
    diagnostics: list[Diagnostic] = field(default_factory=list)
    source_spans: dict[str, Span] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.workflow is not None

    @property
    def errors(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.is_error]


@dataclass
class StatementList:
    statements: list[Statement] = field(default_factory=list)
    diagnostics: list[Diagnostic] = field(default_factory=list)


class UnrepresentableWorkflow(ValueError):
    """The workflow cannot be written in the requested syntax."""


class ParseError(Exception):
    def __init__(self, token: Token, message: str):
        super().__init__(message)
        self.token = token
        self.message = message

    def diagnostic(self) -> Diagnostic:
        return format_error(self.token, self.message)


def format_error(token: Token, message: str, category: ErrorCategory = ErrorCategory.INVALID_FORMAT,
                 severity: Severity = Severity.ERROR) -> Diagnostic:
    return Diagnostic(category, message, Location(line=token.line, column=token.column), severity)


class Cursor:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self, offset: int = 0) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.peek()
        if tok.kind != EOF:
            self.pos += 1
        return tok

    @property
    def prev(self) -> Token:
        return self.tokens[max(self.pos - 1, 0)]

    def at_end(self) -> bool:
        return self.peek().kind == EOF

    def fail(self, expected: str) -> ParseError:
        tok = self.peek()
        if tok.kind == ERROR:
            return ParseError(tok, str(tok.value))
        return ParseError(tok, f"expected {expected}, found {tok.describe()}")

    def punct(self, text: str) -> Token:
        if not self.peek().is_punct(text):
            raise self.fail(repr(text))
        return self.next()

    def word(self, what: str = "identifier") -> str:
        if self.peek().kind != WORD:
            raise self.fail(what)
        return self.next().text

    def keyword(self, text: str) -> Token:
        if not self.peek().is_word(text, fold=True):
            raise self.fail(repr(text))
        return self.next()

    def literal(self) -> ParamValue:
        tok = self.peek()
        if tok.kind in (NUMBER, STRING):
            self.next()
            return tok.value  # type: ignore[return-value]
        if tok.is_word("true") or tok.is_word("false"):
            self.next()
            return tok.text == "true"
        raise self.fail("a literal value")

    def skip_past(self, terminators: Iterable[str], stop_before: Iterable[str] = ()) -> None:
        """Error recovery: drop tokens through the next terminator."""
        terms, stops = set(terminators), set(stop_before)
        while not self.at_end():
            tok = self.peek()
            if tok.kind == PUNCT and tok.text in stops:
                return
            self.next()
            if tok.kind == PUNCT and tok.text in terms:
                return

    def span_from(self, start: Token) -> Span:
        end = self.prev
        return Span(start.line, start.column, end.line, end.column + max(len(end.text), 1) - 1)


def format_value(value: ParamValue) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    return json.dumps(value, ensure_ascii=False)


def _span_location(span: Span) -> Location:
    return Location(line=span.line, column=span.column)


def assemble(parsed: StatementList, base: Workflow | None = None) -> ParseOutcome:
    """Turn a statement list into a workflow, reporting structural conflicts.

    Edges that reference undeclared nodes or already-fed inputs are dropped
    with a ConnectionError; duplicate declarations are InvalidFormat.
    """
    diags = list(parsed.diagnostics)
    spans: dict[str, Span] = {}
    w = base.copy() if base is not None else Workflow()
    for st in parsed.statements:
        if isinstance(st, NodeDecl):
            if st.id in w.nodes:
                diags.append(Diagnostic(ErrorCategory.INVALID_FORMAT, f"duplicate node id {st.id!r}",
                                        Location(node=st.id, line=st.span.line, column=st.span.column)))
                continue
            params: dict[str, ParamValue] = {}
            for name, value, tok in st.params:
                if name in params:
                    diags.append(format_error(tok, f"duplicate argument {name!r} for node {st.id!r}"))
                    continue
                params[name] = value
            w.add_node(st.id, st.type_name, params)
            spans[f"node:{st.id}"] = st.span
        elif isinstance(st, ParamSet):
            if st.node not in w.nodes:
                diags.append(Diagnostic(ErrorCategory.INVALID_FORMAT,
                                        f"parameter set on undeclared node {st.node!r}", _span_location(st.span)))
            elif st.name in w.nodes[st.node].params:
                diags.append(Diagnostic(ErrorCategory.INVALID_FORMAT,
                                        f"parameter {st.name!r} of {st.node!r} set twice", _span_location(st.span)))
            else:
                w.set_param(st.node, st.name, st.value)
        else:
            missing = [n for n in (st.src.node_id, st.dst.node_id) if n not in w.nodes]
            if missing:
                diags.append(Diagnostic(
                    ErrorCategory.CONNECTION_ERROR,
                    f"edge {st.src} -> {st.dst} references undeclared node {missing[0]!r}",
                    Location(node=st.dst.node_id, port=st.dst.port_name, line=st.span.line, column=st.span.column),
                ))
                continue
            if any(e.dst == st.dst for e in w.edges):
                diags.append(Diagnostic(
                    ErrorCategory.CONNECTION_ERROR,
                    f"input {st.dst} is already fed; edge from {st.src} ignored",
                    Location(node=st.dst.node_id, port=st.dst.port_name, line=st.span.line, column=st.span.column),
                ))
                continue
            w.connect(st.src.node_id, st.src.port_name, st.dst.node_id, st.dst.port_name)
            spans[f"edge:{st.dst}"] = st.span
    fatal = any(d.is_error and d.category is ErrorCategory.INVALID_FORMAT for d in diags)
    return ParseOutcome(None if fatal else w, diags, spans)

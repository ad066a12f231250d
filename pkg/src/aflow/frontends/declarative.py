"""Declarative syntax: node declarations and connection statements inside a workflow block.

    workflow {
      node ld = LoadImage(path="a.png");
      node enc = VAEEncode();
      ld.IMAGE -> enc.pixels;
    }
"""

from __future__ import annotations

from ..ir import PortRef, Workflow, canonicalize
from .common import Cursor, EdgeDecl, NodeDecl, ParseError, StatementList, format_value
from .lexer import WORD, tokenize

GRAMMAR = """\
Declarative syntax. A program is one block:
  workflow {
    node <id> = <Type>(<param>=<value>, ...);   # declare a function with its parameters
    <id>.<OUTPUT> -> <id>.<input>;              # connect an output port to an input port
  }
Values: "double-quoted strings", integers, decimals, true/false. Comments start with #.
Each input port receives at most one connection."""


def _statement(cur: Cursor, out: StatementList) -> None:
    start = cur.peek()
    if start.is_word("node") and cur.peek(1).kind == WORD:
        cur.next()
        node_id = cur.word("node id")
        cur.punct("=")
        type_name = cur.word("function type")
        cur.punct("(")
        params = []
        while not cur.peek().is_punct(")"):
            key_tok = cur.peek()
            key = cur.word("parameter name")
            cur.punct("=")
            params.append((key, cur.literal(), key_tok))
            if not cur.peek().is_punct(","):
                break
            cur.next()
        cur.punct(")")
        cur.punct(";")
        out.statements.append(NodeDecl(node_id, type_name, params, cur.span_from(start)))
        return
    if start.kind == WORD and cur.peek(1).is_punct("."):
        src_node = cur.word()
        cur.punct(".")
        src_port = cur.word("output port")
        cur.punct("->")
        dst_node = cur.word("node id")
        cur.punct(".")
        dst_port = cur.word("input port")
        cur.punct(";")
        out.statements.append(EdgeDecl(PortRef(src_node, src_port), PortRef(dst_node, dst_port), cur.span_from(start)))
        return
    if start.is_word("node"):
        cur.next()
        raise cur.fail("node id")
    raise cur.fail("'node' declaration or connection")


def _statements(cur: Cursor, out: StatementList, closer: str | None) -> None:
    while not cur.at_end() and not (closer and cur.peek().is_punct(closer)):
        try:
            _statement(cur, out)
        except ParseError as err:
            out.diagnostics.append(err.diagnostic())
            cur.skip_past([";"], stop_before=[closer] if closer else [])


def parse_statements(text: str, *, fragment: bool = False) -> StatementList:
    """Parse a program; with ``fragment`` the workflow wrapper is optional."""
    cur = Cursor(tokenize(text))
    out = StatementList()
    wrapped = cur.peek().is_word("workflow") and cur.peek(1).is_punct("{")
    if not wrapped:
        if not fragment:
            out.diagnostics.append(cur.fail("'workflow {'").diagnostic())
            if cur.peek().is_word("workflow"):
                cur.next()
        _statements(cur, out, None)
        return out
    cur.next()
    cur.next()
    _statements(cur, out, "}")
    try:
        cur.punct("}")
        if not cur.at_end():
            raise cur.fail("end of input after the workflow block")
    except ParseError as err:
        out.diagnostics.append(err.diagnostic())
    return out


def emit(w: Workflow) -> str:
    w = canonicalize(w)
    if not w.nodes and not w.edges:
        return "workflow { }"
    lines = ["workflow {"]
    for n in w.nodes.values():
        args = ", ".join(f"{k}={format_value(v)}" for k, v in n.params.items())
        lines.append(f"  node {n.id} = {n.type_name}({args});")
    for e in w.edges:
        lines.append(f"  {e.src} -> {e.dst};")
    lines.append("}")
    return "\n".join(lines)


def emit_nodes(w: Workflow) -> str:
    """Node declarations only, as a fragment."""
    w = canonicalize(w)
    return "\n".join(
        f"node {n.id} = {n.type_name}({', '.join(f'{k}={format_value(v)}' for k, v in n.params.items())});"
        for n in w.nodes.values()
    )


def emit_edges(w: Workflow) -> str:
    return "\n".join(f"{e.src} -> {e.dst};" for e in canonicalize(w).edges)

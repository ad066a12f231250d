"""Dataflow syntax: one assignment per node, port arguments reference earlier nodes.

    ld = LoadImage(path="a.png");
    enc = VAEEncode(pixels = ld.IMAGE);

Statement order is the execution order, so a reference to a node that has not
been assigned yet is a format error.
"""

from __future__ import annotations

from typing import Iterable

from ..ir import CycleError, PortRef, Workflow, canonicalize, topological_order
from .common import Cursor, EdgeDecl, NodeDecl, ParseError, StatementList, UnrepresentableWorkflow, format_value
from .lexer import WORD, tokenize

GRAMMAR = """\
Dataflow syntax. One statement per function, in execution order:
  <id> = <Type>(<param>=<value>, ..., <input>=<id>.<OUTPUT>, ...);
An argument written <id>.<OUTPUT> feeds that output into the named input port;
any other argument is a parameter value. A node can only be referenced after
its own statement. Values: "double-quoted strings", integers, decimals,
true/false. Comments start with #."""


def _statement(cur: Cursor, out: StatementList, defined: set[str]) -> None:
    start = cur.peek()
    node_id = cur.word("node id")
    cur.punct("=")
    type_name = cur.word("function type")
    cur.punct("(")
    params = []
    edges = []
    while not cur.peek().is_punct(")"):
        key_tok = cur.peek()
        key = cur.word("argument name")
        cur.punct("=")
        if cur.peek().kind == WORD and cur.peek(1).is_punct("."):
            ref_tok = cur.peek()
            src_node = cur.next().text
            cur.punct(".")
            src_port = cur.word("output port")
            if src_node not in defined:
                raise ParseError(ref_tok, f"use before definition: {src_node!r} is not assigned yet")
            edges.append(EdgeDecl(PortRef(src_node, src_port), PortRef(node_id, key), cur.span_from(key_tok)))
            params.append((key, None, key_tok))
        else:
            params.append((key, cur.literal(), key_tok))
        if not cur.peek().is_punct(","):
            break
        cur.next()
    cur.punct(")")
    cur.punct(";")
    seen: set[str] = set()
    for key, _, tok in params:
        if key in seen:
            raise ParseError(tok, f"duplicate argument {key!r} for node {node_id!r}")
        seen.add(key)
    literal_params = [p for p in params if p[1] is not None]
    out.statements.append(NodeDecl(node_id, type_name, literal_params, cur.span_from(start)))
    out.statements.extend(edges)
    defined.add(node_id)


def parse_statements(text: str, *, predeclared: Iterable[str] = ()) -> StatementList:
    cur = Cursor(tokenize(text))
    out = StatementList()
    defined = set(predeclared)
    while not cur.at_end():
        try:
            _statement(cur, out, defined)
        except ParseError as err:
            out.diagnostics.append(err.diagnostic())
            cur.skip_past([";"])
    return out


def _call(w: Workflow, node_id: str, ports: bool) -> str:
    n = w.nodes[node_id]
    args = [f"{k}={format_value(v)}" for k, v in n.params.items()]
    if ports:
        for e in w.incoming_flows(node_id):
            if e.dst.port_name in n.params:
                raise UnrepresentableWorkflow(
                    f"{node_id}: {e.dst.port_name!r} is both a parameter and a connected input"
                )
            args.append(f"{e.dst.port_name}={e.src}")
    return f"{node_id} = {n.type_name}({', '.join(args)});"


def emit(w: Workflow) -> str:
    w = canonicalize(w)
    try:
        order = topological_order(w)
    except CycleError as exc:
        raise UnrepresentableWorkflow(f"dataflow syntax cannot express a cycle ({exc})") from exc
    return "\n".join(_call(w, n, True) for n in order)


def emit_nodes(w: Workflow) -> str:
    w = canonicalize(w)
    return "\n".join(_call(w, n, False) for n in w.nodes)

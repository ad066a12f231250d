"""Pseudo-natural syntax: a closed set of sentence templates, one per line or period.

    load image "a.png" as ld.
    encode ld into enc.
    set enc tile_size to 512.
    feed ckpt VAE into enc vae.

Every sentence compiles to node declarations, parameter bindings or
connections. It reads like English but has a fixed grammar; anything outside
the templates is a format error.
"""

from __future__ import annotations

from ..ir import PortRef, Workflow, canonicalize
from .common import Cursor, EdgeDecl, NodeDecl, ParamSet, ParseError, StatementList, format_value
from .lexer import tokenize

GRAMMAR = """\
Pseudo-natural syntax. Each sentence ends with a period:
  make <Type> as <id> [with <param> = <value> [and <param> = <value> ...]].
  set <id> <param> to <value>.
  feed <id> <OUTPUT> into <id> <input>.      (also: connect <id> <OUTPUT> to <id> <input>.)
Shorthands:
  load image "<path>" as <id>.              -> LoadImage(path)
  load checkpoint "<name>" as <id>.         -> CheckpointLoaderSimple(ckpt_name)
  encode <src> into <id>.                   -> VAEEncode fed by <src>.IMAGE
  blend <a> and <b> as <id>.                -> ConditioningAverage of <a> and <b>
  sample <src> as <id>.                     -> KSampler fed by <src>.LATENT
  decode <src> as <id>.                     -> VAEDecode fed by <src>.LATENT
  save <src> as <id>.                       -> SaveImage fed by <src>.IMAGE
Values: "double-quoted strings", integers, decimals, true/false. Comments start with #."""

# verb -> (type, [(src output, dst input) per operand])
_UNARY = {
    "encode": ("VAEEncode", ("IMAGE", "pixels")),
    "sample": ("KSampler", ("LATENT", "latent_image")),
    "decode": ("VAEDecode", ("LATENT", "samples")),
    "save": ("SaveImage", ("IMAGE", "images")),
}
_LOADERS = {
    "image": ("LoadImage", "path"),
    "checkpoint": ("CheckpointLoaderSimple", "ckpt_name"),
}


def _binder(cur: Cursor) -> None:
    if cur.peek().is_word("as", fold=True) or cur.peek().is_word("into", fold=True):
        cur.next()
        return
    raise cur.fail("'as' or 'into'")


def _sentence(cur: Cursor, out: StatementList) -> None:
    start = cur.peek()
    verb = cur.word("a sentence verb").lower()
    if verb == "make":
        type_name = cur.word("function type")
        cur.keyword("as")
        node_id = cur.word("node id")
        params = []
        if cur.peek().is_word("with", fold=True):
            cur.next()
            while True:
                key_tok = cur.peek()
                key = cur.word("parameter name")
                cur.punct("=")
                params.append((key, cur.literal(), key_tok))
                if cur.peek().is_word("and", fold=True) or cur.peek().is_punct(","):
                    cur.next()
                    continue
                break
        cur.punct(".")
        out.statements.append(NodeDecl(node_id, type_name, params, cur.span_from(start)))
    elif verb == "set":
        node_id = cur.word("node id")
        name = cur.word("parameter name")
        cur.keyword("to")
        value = cur.literal()
        cur.punct(".")
        out.statements.append(ParamSet(node_id, name, value, cur.span_from(start)))
    elif verb in ("feed", "connect"):
        src_node = cur.word("node id")
        src_port = cur.word("output port")
        cur.keyword("into" if verb == "feed" else "to")
        dst_node = cur.word("node id")
        dst_port = cur.word("input port")
        cur.punct(".")
        out.statements.append(EdgeDecl(PortRef(src_node, src_port), PortRef(dst_node, dst_port), cur.span_from(start)))
    elif verb == "load":
        kind_tok = cur.peek()
        kind = cur.word("'image' or 'checkpoint'").lower()
        if kind not in _LOADERS:
            raise ParseError(kind_tok, f"cannot load {kind!r}; expected 'image' or 'checkpoint'")
        type_name, param = _LOADERS[kind]
        value_tok = cur.peek()
        value = cur.literal()
        if not isinstance(value, str):
            raise ParseError(value_tok, "expected a quoted name to load")
        cur.keyword("as")
        node_id = cur.word("node id")
        cur.punct(".")
        out.statements.append(NodeDecl(node_id, type_name, [(param, value, value_tok)], cur.span_from(start)))
    elif verb in _UNARY:
        type_name, (src_port, dst_port) = _UNARY[verb]
        src = cur.word("node id")
        _binder(cur)
        node_id = cur.word("node id")
        cur.punct(".")
        span = cur.span_from(start)
        out.statements.append(NodeDecl(node_id, type_name, [], span))
        out.statements.append(EdgeDecl(PortRef(src, src_port), PortRef(node_id, dst_port), span))
    elif verb == "blend":
        first = cur.word("node id")
        cur.keyword("and")
        second = cur.word("node id")
        _binder(cur)
        node_id = cur.word("node id")
        cur.punct(".")
        span = cur.span_from(start)
        out.statements.append(NodeDecl(node_id, "ConditioningAverage", [], span))
        out.statements.append(EdgeDecl(PortRef(first, "CONDITIONING"), PortRef(node_id, "conditioning_to"), span))
        out.statements.append(EdgeDecl(PortRef(second, "CONDITIONING"), PortRef(node_id, "conditioning_from"), span))
    else:
        raise ParseError(start, f"unknown sentence verb {start.text!r}")


def parse_statements(text: str) -> StatementList:
    cur = Cursor(tokenize(text))
    out = StatementList()
    while not cur.at_end():
        try:
            _sentence(cur, out)
        except ParseError as err:
            out.diagnostics.append(err.diagnostic())
            cur.skip_past(["."])
    return out


def _node_sentences(w: Workflow) -> list[str]:
    lines = []
    for n in w.nodes.values():
        lines.append(f"make {n.type_name} as {n.id}.")
        lines.extend(f"set {n.id} {k} to {format_value(v)}." for k, v in n.params.items())
    return lines


def emit(w: Workflow) -> str:
    w = canonicalize(w)
    lines = _node_sentences(w)
    lines.extend(f"feed {e.src.node_id} {e.src.port_name} into {e.dst.node_id} {e.dst.port_name}." for e in w.edges)
    return "\n".join(lines)


def emit_nodes(w: Workflow) -> str:
    return "\n".join(_node_sentences(canonicalize(w)))


def emit_edges(w: Workflow) -> str:
    return "\n".join(
        f"feed {e.src.node_id} {e.src.port_name} into {e.dst.node_id} {e.dst.port_name}."
        for e in canonicalize(w).edges
    )

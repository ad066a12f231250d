"""Tokenizer shared by all three syntaxes."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass

WORD = "word"
NUMBER = "number"
STRING = "string"
PUNCT = "punct"
ERROR = "error"
EOF = "eof"

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n\f\v]+)
  | (?P<comment>\#[^\n]*)
  | (?P<number>-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<open_string>"(?:[^"\\\n]|\\.)*)
  | (?P<punct>->|[{}();,.=])
    """,
    re.VERBOSE,
)
_STRING_DECODER = json.JSONDecoder(strict=False)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    value: object
    line: int
    column: int

    def is_punct(self, text: str) -> bool:
        return self.kind == PUNCT and self.text == text

    def is_word(self, text: str | None = None, *, fold: bool = False) -> bool:
        if self.kind != WORD:
            return False
        if text is None:
            return True
        return (self.text.lower() if fold else self.text) == text

    def describe(self) -> str:
        if self.kind == EOF:
            return "end of input"
        return repr(self.text)


def tokenize(text: str) -> list[Token]:
    """Split ``text`` into tokens. Never raises; bad input becomes ERROR tokens."""
    tokens: list[Token] = []
    pos, line, line_start = 0, 1, 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            tokens.append(Token(ERROR, text[pos], f"unexpected character {text[pos]!r}", line, col))
            pos += 1
            continue
        kind = m.lastgroup
        lexeme = m.group()
        if kind == "number":
            value: object
            if any(c in lexeme for c in ".eE"):
                value = float(lexeme)
                if not math.isfinite(value):
                    tokens.append(Token(ERROR, lexeme, f"number {lexeme} is out of range", line, col))
                else:
                    tokens.append(Token(NUMBER, lexeme, value, line, col))
            else:
                tokens.append(Token(NUMBER, lexeme, int(lexeme), line, col))
        elif kind == "word":
            tokens.append(Token(WORD, lexeme, lexeme, line, col))
        elif kind == "string":
            try:
                tokens.append(Token(STRING, lexeme, _STRING_DECODER.decode(lexeme), line, col))
            except json.JSONDecodeError:
                tokens.append(Token(ERROR, lexeme, "invalid escape sequence in string literal", line, col))
        elif kind == "open_string":
            tokens.append(Token(ERROR, lexeme, "unterminated string literal", line, col))
        elif kind == "punct":
            tokens.append(Token(PUNCT, lexeme, lexeme, line, col))
        newlines = lexeme.count("\n")
        if newlines:
            line += newlines
            line_start = pos + lexeme.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token(EOF, "", None, line, pos - line_start + 1))
    return tokens

from __future__ import annotations

import re
from dataclasses import dataclass

from .ast import Span


class RuleSyntaxError(Exception):
    """Raised on malformed rule source; carries position and expected tokens."""

    def __init__(self, message: str, span: Span, expected: tuple[str, ...] = ()):
        self.span = span
        self.expected = tuple(sorted(set(expected)))
        detail = f" (expected one of: {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{span.line}:{span.col}: {message}{detail}")


@dataclass(frozen=True)
class Token:
    kind: str  # NUMBER, IDENT, KEYWORD, OP, EOF
    text: str
    span: Span


KEYWORDS = {"rule", "pred", "condition", "action", "in"}

# longest operators first
_OPS = ["@[", "->", "&&", "||", "<=", ">=", "==",
        "+", "-", "*", "/", "^", "<", ">", "!", ".", ",", "(", ")", "{", "}", "[", "]", "=", "@"]

_TOKEN_RE = re.compile(
    r"(?P<ws>[ \t\r\n]+)"
    r"|(?P<comment>//[^\n]*)"
    r"|(?P<number>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>" + "|".join(re.escape(o) for o in _OPS) + ")"
)


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        span = Span(line, pos - line_start + 1)
        if m is None:
            raise RuleSyntaxError(f"unexpected character {source[pos]!r}", span)
        kind = m.lastgroup
        text = m.group()
        if kind == "number":
            tokens.append(Token("NUMBER", text, span))
        elif kind == "ident":
            tokens.append(Token("KEYWORD" if text in KEYWORDS else "IDENT", text, span))
        elif kind == "op":
            tokens.append(Token("OP", text, span))
        newlines = text.count("\n")
        if newlines:
            line += newlines
            line_start = pos + text.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("EOF", "", Span(line, pos - line_start + 1)))
    return tokens

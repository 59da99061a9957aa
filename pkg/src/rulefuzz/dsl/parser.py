"""Recursive-descent parser for rule files.

Grammar (loosest binding first)::

    file      := (ruleDef | predDef)*
    ruleDef   := 'rule' IDENT '(' params ')' '{' binding* condition action? '}'
    binding   := IDENT '=' expr
    condition := 'condition' '{' expr '}'
    action    := 'action' '{' call* '}'
    predDef   := 'pred' IDENT '(' params ')' '{' expr '}'

    expr  := and ('||' and)*
    and   := not ('&&' not)*
    not   := '!' not | cmp
    cmp   := sum (('<' | '>' | '<=' | '>=' | '==' | 'in') sum)?
    sum   := prod (('+' | '-') prod)*
    prod  := pow (('*' | '/') pow)*
    pow   := unary ('^' pow)?
    unary := '-' unary | postfix
    postfix := primary ('.' IDENT ('(' args ')')?)*
    primary := NUMBER | IDENT qualifier? ('(' args ')')? | '(' expr (',' expr)? ')'
    qualifier := '@[' expr ']' '@'? | '[' expr ']'
    arg   := IDENT '->' expr | IDENT '=' expr | expr

Upper-case identifiers other than ``NOW`` are enum literals. A method call on
a path or pipeline must be one of the pipeline stages below.
"""

from __future__ import annotations

import re

from . import ast as A
from .lexer import RuleSyntaxError, Token, tokenize

STAGES = {"filter", "sortDesc", "first", "take"}
NAMED_ARGS = {"min", "max", "capacity", "categories"}
_ENUM_RE = re.compile(r"^[A-Z][A-Z0-9_]*$")
_CMP = {"<", ">", "<=", ">=", "=="}
_PRIMARY_START = ("NUMBER", "IDENT", "'('", "'-'", "'!'")


class Parser:
    def __init__(self, source: str):
        self.toks = tokenize(source)
        self.i = 0

    # -- token helpers -------------------------------------------------
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, text: str) -> bool:
        t = self.tok
        return t.kind in ("OP", "KEYWORD") and t.text == text

    def advance(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def fail(self, expected, message: str | None = None):
        t = self.tok
        shown = "end of input" if t.kind == "EOF" else repr(t.text)
        raise RuleSyntaxError(message or f"unexpected {shown}", t.span, tuple(expected))

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.fail([f"'{text}'"])
        return self.advance()

    def ident(self) -> Token:
        if self.tok.kind != "IDENT":
            self.fail(["IDENT"])
        return self.advance()

    # -- declarations --------------------------------------------------
    def parse_file(self) -> A.RuleFile:
        rules, preds = [], []
        while self.tok.kind != "EOF":
            if self.at("rule"):
                rules.append(self.rule_def())
            elif self.at("pred"):
                preds.append(self.pred_def())
            else:
                self.fail(["'rule'", "'pred'"])
        return A.RuleFile(tuple(rules), tuple(preds))

    def params(self) -> tuple[str, ...]:
        self.expect("(")
        out = []
        if not self.at(")"):
            out.append(self.ident().text)
            while self.at(","):
                self.advance()
                out.append(self.ident().text)
        self.expect(")")
        return tuple(out)

    def pred_def(self) -> A.PredDef:
        span = self.advance().span
        name = self.ident().text
        params = self.params()
        self.expect("{")
        body = self.expr()
        self.expect("}")
        return A.PredDef(name, params, body, span)

    def rule_def(self) -> A.RuleDef:
        span = self.advance().span
        name = self.ident().text
        params = self.params()
        self.expect("{")
        bindings = []
        while self.tok.kind == "IDENT" and self.peek().text == "=":
            target = self.advance().text
            self.advance()
            bindings.append((target, self.expr()))
        if not self.at("condition"):
            self.fail(["'condition'", "IDENT"])
        self.advance()
        self.expect("{")
        cond = self.expr()
        self.expect("}")
        actions = []
        if self.at("action"):
            self.advance()
            self.expect("{")
            while not self.at("}"):
                t = self.ident()
                self.expect("(")
                args = []
                if not self.at(")"):
                    args.append(self.expr())
                    while self.at(","):
                        self.advance()
                        args.append(self.expr())
                self.expect(")")
                actions.append(A.ActionDescr(t.text, tuple(args), t.span))
            self.advance()
        self.expect("}")
        return A.RuleDef(name, params, tuple(bindings), cond, tuple(actions), span)

    # -- expressions ---------------------------------------------------
    def expr(self):
        left = self.and_expr()
        while self.at("||"):
            t = self.advance()
            left = A.Binary("||", left, self.and_expr(), t.span)
        return left

    def and_expr(self):
        left = self.not_expr()
        while self.at("&&"):
            t = self.advance()
            left = A.Binary("&&", left, self.not_expr(), t.span)
        return left

    def not_expr(self):
        if self.at("!"):
            t = self.advance()
            return A.Not(self.not_expr(), t.span)
        return self.cmp_expr()

    def cmp_expr(self):
        left = self.sum_expr()
        if self.tok.kind == "OP" and self.tok.text in _CMP or self.at("in"):
            t = self.advance()
            left = A.Binary(t.text, left, self.sum_expr(), t.span)
        return left

    def sum_expr(self):
        left = self.prod_expr()
        while self.tok.kind == "OP" and self.tok.text in ("+", "-"):
            t = self.advance()
            left = A.Binary(t.text, left, self.prod_expr(), t.span)
        return left

    def prod_expr(self):
        left = self.pow_expr()
        while self.tok.kind == "OP" and self.tok.text in ("*", "/"):
            t = self.advance()
            left = A.Binary(t.text, left, self.pow_expr(), t.span)
        return left

    def pow_expr(self):
        base = self.unary()
        if self.at("^"):
            t = self.advance()
            return A.Binary("^", base, self.pow_expr(), t.span)
        return base

    def unary(self):
        if self.at("-"):
            t = self.advance()
            return A.Neg(self.unary(), t.span)
        return self.postfix()

    def postfix(self):
        node = self.primary()
        while self.at("."):
            self.advance()
            name_tok = self.ident()
            if self.at("("):
                if name_tok.text not in STAGES:
                    raise RuleSyntaxError(f"unknown pipeline stage {name_tok.text!r}",
                                          name_tok.span, tuple(sorted(STAGES)))
                args, named = self.args()
                if named:
                    raise RuleSyntaxError("pipeline stages take no named arguments", name_tok.span)
                stage = A.Stage(name_tok.text, args, name_tok.span)
                if isinstance(node, A.Pipeline):
                    node = A.Pipeline(node.source, node.stages + (stage,), node.span)
                else:
                    node = A.Pipeline(node, (stage,), name_tok.span)
            elif isinstance(node, A.VarPath):
                node = A.VarPath(node.parts + (name_tok.text,), node.span)
            else:
                node = A.Field(node, name_tok.text, name_tok.span)
        return node

    def primary(self):
        t = self.tok
        if t.kind == "NUMBER":
            self.advance()
            return A.NumberLit(float(t.text), t.span)
        if t.kind == "IDENT":
            self.advance()
            qualifier = None
            if self.at("@[") or self.at("["):
                self.advance()
                qualifier = self.expr()
                self.expect("]")
                if self.at("@"):
                    self.advance()
                if not self.at("("):
                    self.fail(["'('"], "qualifier must be followed by an argument list")
            if self.at("("):
                args, named = self.args()
                return A.Call(t.text, args, named, qualifier, t.span)
            if t.text != "NOW" and _ENUM_RE.match(t.text):
                return A.EnumLit(t.text, t.span)
            return A.VarPath((t.text,), t.span)
        if self.at("("):
            self.advance()
            first = self.expr()
            if self.at(","):
                self.advance()
                second = self.expr()
                self.expect(")")
                return A.Tuple2(first, second, t.span)
            self.expect(")")
            return first
        self.fail(_PRIMARY_START)

    def args(self):
        self.expect("(")
        args, named = [], []
        if not self.at(")"):
            self.arg(args, named)
            while self.at(","):
                self.advance()
                self.arg(args, named)
        self.expect(")")
        return tuple(args), tuple(named)

    def arg(self, args: list, named: list):
        t = self.tok
        if t.kind == "IDENT" and self.peek().text == "->":
            self.advance()
            self.advance()
            args.append(A.Lambda(t.text, self.expr(), t.span))
            return
        if t.kind == "IDENT" and self.peek().kind == "OP" and self.peek().text == "=":
            if t.text not in NAMED_ARGS:
                raise RuleSyntaxError(f"unknown named argument {t.text!r}", t.span,
                                      tuple(sorted(NAMED_ARGS)))
            if any(k == t.text for k, _ in named):
                raise RuleSyntaxError(f"duplicate named argument {t.text!r}", t.span)
            self.advance()
            self.advance()
            named.append((t.text, self.expr()))
            return
        if named:
            self.fail([], "positional argument after named argument")
        args.append(self.expr())


def parse(source: str) -> A.RuleFile:
    """Parse rule source text into a :class:`RuleFile`."""
    return Parser(source).parse_file()


def parse_expr(source: str):
    p = Parser(source)
    e = p.expr()
    if p.tok.kind != "EOF":
        p.fail(["end of input"])
    return e

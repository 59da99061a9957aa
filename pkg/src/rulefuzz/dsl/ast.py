"""Syntax tree for rule files.

Nodes are frozen dataclasses. Source spans are carried on every node but are
excluded from equality, so two trees parsed from differently formatted text
compare equal when their structure matches.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union


@dataclass(frozen=True)
class Span:
    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


NOSPAN = Span(0, 0)


def _span() -> Span:
    return field(default=NOSPAN, compare=False, repr=False)


@dataclass(frozen=True)
class NumberLit:
    value: float
    span: Span = _span()


@dataclass(frozen=True)
class EnumLit:
    name: str
    span: Span = _span()


@dataclass(frozen=True)
class VarPath:
    parts: tuple[str, ...]
    span: Span = _span()

    @property
    def dotted(self) -> str:
        return ".".join(self.parts)


@dataclass(frozen=True)
class Field:
    """Field access on a non-path expression, e.g. ``xs.first().type``."""

    target: "Expr"
    name: str
    span: Span = _span()


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"
    span: Span = _span()


@dataclass(frozen=True)
class Neg:
    operand: "Expr"
    span: Span = _span()


@dataclass(frozen=True)
class Not:
    operand: "Expr"
    span: Span = _span()


@dataclass(frozen=True)
class Lambda:
    param: str
    body: "Expr"
    span: Span = _span()


@dataclass(frozen=True)
class Tuple2:
    first: "Expr"
    second: "Expr"
    span: Span = _span()


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple["Expr", ...] = ()
    named: tuple[tuple[str, "Expr"], ...] = ()
    qualifier: Optional["Expr"] = None
    span: Span = _span()

    def kwarg(self, key: str) -> Optional["Expr"]:
        for k, v in self.named:
            if k == key:
                return v
        return None


@dataclass(frozen=True)
class Stage:
    """One pipeline stage: ``filter``, ``sortDesc``, ``first`` or ``take``."""

    name: str
    args: tuple["Expr", ...] = ()
    span: Span = _span()


@dataclass(frozen=True)
class Pipeline:
    source: "Expr"
    stages: tuple[Stage, ...]
    span: Span = _span()


Expr = Union[NumberLit, EnumLit, VarPath, Field, Binary, Neg, Not, Lambda, Tuple2, Call, Pipeline]


@dataclass(frozen=True)
class ActionDescr:
    callee: str
    args: tuple[Expr, ...]
    span: Span = _span()


@dataclass(frozen=True)
class RuleDef:
    name: str
    params: tuple[str, ...]
    bindings: tuple[tuple[str, Expr], ...]
    condition: Expr
    actions: tuple[ActionDescr, ...]
    span: Span = _span()


@dataclass(frozen=True)
class PredDef:
    name: str
    params: tuple[str, ...]
    body: Expr
    span: Span = _span()


@dataclass(frozen=True)
class RuleFile:
    rules: tuple[RuleDef, ...] = ()
    preds: tuple[PredDef, ...] = ()

    def pred(self, name: str) -> Optional[PredDef]:
        for p in self.preds:
            if p.name == name:
                return p
        return None

    def rule(self, name: str) -> Optional[RuleDef]:
        for r in self.rules:
            if r.name == name:
                return r
        return None


def children(node) -> list:
    """Direct sub-expressions in source order."""
    if isinstance(node, (Binary,)):
        return [node.left, node.right]
    if isinstance(node, (Neg, Not)):
        return [node.operand]
    if isinstance(node, Field):
        return [node.target]
    if isinstance(node, Lambda):
        return [node.body]
    if isinstance(node, Tuple2):
        return [node.first, node.second]
    if isinstance(node, Call):
        out = [node.qualifier] if node.qualifier is not None else []
        return out + list(node.args) + [v for _, v in node.named]
    if isinstance(node, Pipeline):
        out = [node.source]
        for st in node.stages:
            out.extend(st.args)
        return out
    return []


def walk(node):
    """Pre-order traversal."""
    yield node
    for c in children(node):
        yield from walk(c)


def flatten(op: str, node) -> list:
    """Operands of a chain of the same associative connective."""
    if isinstance(node, Binary) and node.op == op:
        return flatten(op, node.left) + flatten(op, node.right)
    return [node]

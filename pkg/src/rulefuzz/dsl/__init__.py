"""Rule language: lexer, parser, printer and type checker."""

from .ast import RuleFile, RuleDef, PredDef, Span
from .lexer import RuleSyntaxError
from .parser import parse, parse_expr
from .printer import format_file, expr_str
from .types import (
    RuleTypeError,
    Schema,
    TrainableDescr,
    TypedRuleFile,
    list_trainables,
    typecheck,
)

__all__ = [
    "RuleFile", "RuleDef", "PredDef", "Span", "RuleSyntaxError", "RuleTypeError",
    "Schema", "TrainableDescr", "TypedRuleFile", "parse", "parse_expr", "format_file",
    "expr_str", "typecheck", "list_trainables", "load",
]


def load(source: str, schema: Schema) -> TypedRuleFile:
    """Parse and type-check in one step."""
    return typecheck(parse(source), schema)

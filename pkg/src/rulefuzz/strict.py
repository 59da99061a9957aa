"""Exact interpreter for type-checked rules; the labeling oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

from .dsl import ast as A
from .dsl.printer import expr_str
from .dsl.types import EnumSetT, TypedRuleFile


class EvalError(Exception):
    pass


class EmptyPipeline(EvalError):
    """``first()`` applied to an empty list."""


@dataclass(frozen=True)
class Decision:
    fired: bool
    action: Optional[str]
    conjunct_bits: tuple[bool, ...]

    @property
    def stratum(self) -> str:
        return "".join("1" if b else "0" for b in self.conjunct_bits)


def conjuncts(rule: A.RuleDef) -> list:
    return A.flatten("&&", rule.condition)


class StrictEvaluator:
    """Evaluates expressions of one typed rule file.

    ``empty_pipelines`` counts comparisons that were decided false because a
    ``first()`` stage met an empty list.
    """

    def __init__(self, typed: TypedRuleFile):
        self.typed = typed
        self.schema = typed.schema
        self.empty_pipelines = 0
        aliases: dict[str, str] = {}
        for amap in self.schema.field_aliases.values():
            aliases.update(amap)
        self._aliases = aliases

    # -- expressions ------------------------------------------------------
    def eval(self, e, env: dict):
        return getattr(self, "v_" + type(e).__name__)(e, env)

    def v_NumberLit(self, e, env):
        return e.value

    def v_EnumLit(self, e, env):
        return self.typed.enum_values[id(e)]

    def get_field(self, obj, name):
        if isinstance(obj, dict):
            if name in obj:
                return obj[name]
            canon = self._aliases.get(name)
            if canon in obj:
                return obj[canon]
        raise EvalError(f"record has no field {name!r}")

    def v_VarPath(self, e, env):
        try:
            val = env[e.parts[0]]
        except KeyError:
            raise EvalError(f"unbound variable {e.parts[0]!r}") from None
        for part in e.parts[1:]:
            val = self.get_field(val, part)
        return val

    def v_Field(self, e, env):
        return self.get_field(self.eval(e.target, env), e.name)

    def v_Neg(self, e, env):
        return -self.eval(e.operand, env)

    def v_Not(self, e, env):
        return not self.eval(e.operand, env)

    def v_Binary(self, e, env):
        op = e.op
        if op == "&&":
            return bool(self.eval(e.left, env)) and bool(self.eval(e.right, env))
        if op == "||":
            if isinstance(self.typed.types.get(id(e)), EnumSetT):
                return frozenset(self.typed.types[id(e)].values)
            return bool(self.eval(e.left, env)) or bool(self.eval(e.right, env))
        if op in ("<", ">", "<=", ">=", "=="):
            try:
                a = self.eval(e.left, env)
                b = self.eval(e.right, env)
            except EmptyPipeline:
                self.empty_pipelines += 1
                return False
            if op == "==":
                return a in b if isinstance(b, frozenset) else a == b
            return {"<": a < b, ">": a > b, "<=": a <= b, ">=": a >= b}[op]
        a = self.eval(e.left, env)
        b = self.eval(e.right, env)
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            if b == 0:
                raise EvalError("division by zero")
            return a / b
        if op == "^":
            return a ** int(b)
        if op == "in":
            return any(x is a or x == a for x in b)
        raise EvalError(f"unknown operator {op!r}")

    def v_Tuple2(self, e, env):
        return (self.eval(e.first, env), self.eval(e.second, env))

    def v_Call(self, e, env):
        if id(e) in self.typed.sites:
            raise EvalError(f"{e.name} is trainable and has no strict meaning")
        if e.name == "sqrt":
            return math.sqrt(self.eval(e.args[0], env))
        return bool(self.eval(self.typed.file.pred(e.name).body, self.call_env(e, env)))

    def call_env(self, call: A.Call, env: dict) -> dict:
        """Environment for the body of the predicate ``call`` refers to."""
        pred = self.typed.file.pred(call.name)
        inner = {"NOW": env.get("NOW")}
        for name, arg in zip(pred.params, call.args):
            inner[name] = self.eval(arg, env)
        return inner

    def v_Pipeline(self, e, env):
        items = list(self.eval(e.source, env))
        for st in e.stages:
            if st.name == "filter":
                lam = st.args[0]
                items = [x for x in items if self.eval(lam.body, {**env, lam.param: x})]
            elif st.name == "sortDesc":
                lam = st.args[0]
                # sorted(..., reverse=True) keeps input order among equal keys
                items = sorted(items, key=lambda x: self.eval(lam.body, {**env, lam.param: x}), reverse=True)
            elif st.name == "first":
                if not items:
                    raise EmptyPipeline(f"first() on empty list at {st.span}")
                items = items[0]
            elif st.name == "take":
                items = items[: int(self.eval(st.args[0], env))]
        return items

    # -- rules --------------------------------------------------------------
    def rule_env(self, rule: A.RuleDef, roots: dict) -> dict:
        env = dict(roots)
        for name, e in rule.bindings:
            if id(e) in self.typed.selections:
                cond = e.stages[0].args[0]
                matches = [x for x in self.eval(e.source, env) if self.eval(cond, {**env, name: x})]
                if not matches:
                    raise EvalError(f"binding {name!r}: no element satisfies {expr_str(cond)}")
                env[name] = matches[0]
            else:
                env[name] = self.eval(e, env)
        return env

    def eval_rule(self, rule: A.RuleDef, roots: dict) -> Decision:
        env = self.rule_env(rule, roots)
        bits = tuple(bool(self.eval(c, env)) for c in conjuncts(rule))
        fired = all(bits)
        action = None
        if fired and rule.actions:
            action = "; ".join(f"{a.callee}({', '.join(expr_str(x) for x in a.args)})" for a in rule.actions)
        return Decision(fired, action, bits)


def eval_expr(typed: TypedRuleFile, expr, env: dict):
    return StrictEvaluator(typed).eval(expr, env)


def eval_rule(typed: TypedRuleFile, rule_name: str, roots: dict) -> Decision:
    rule = typed.file.rule(rule_name)
    if rule is None:
        raise EvalError(f"no rule named {rule_name!r}")
    return StrictEvaluator(typed).eval_rule(rule, roots)


def eval_pred(typed: TypedRuleFile, pred_name: str, roots: dict) -> bool:
    """Evaluate a predicate whose parameters are bound by name from ``roots``."""
    pred = typed.file.pred(pred_name)
    if pred is None:
        raise EvalError(f"no predicate named {pred_name!r}")
    env = {"NOW": roots.get("NOW")}
    for p in pred.params:
        env[p] = roots[p]
    return bool(StrictEvaluator(typed).eval(pred.body, env))


class Oracle:
    """Labels records with the strict semantics of one rule or predicate."""

    def __init__(self, typed: TypedRuleFile, name: str, env_builder: Callable[[dict], dict]):
        self.typed = typed
        self.name = name
        self.env_builder = env_builder
        self.evaluator = StrictEvaluator(typed)
        self.rule = typed.file.rule(name)
        if self.rule is None and typed.file.pred(name) is None:
            raise EvalError(f"no rule or predicate named {name!r}")

    def decide(self, record: dict) -> Decision:
        roots = self.env_builder(record)
        if self.rule is not None:
            return self.evaluator.eval_rule(self.rule, roots)
        pred = self.typed.file.pred(self.name)
        env = {"NOW": roots.get("NOW"), **{p: roots[p] for p in pred.params}}
        v = bool(self.evaluator.eval(pred.body, env))
        return Decision(v, None, (v,))

    def label(self, record: dict) -> int:
        return int(self.decide(record).fired)


def oracle_label(typed: TypedRuleFile, rule_name: str, record: dict, env_builder) -> int:
    return Oracle(typed, rule_name, env_builder).label(record)

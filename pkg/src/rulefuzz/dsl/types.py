"""Semantic types, schemas and the type checker."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from . import ast as A


class RuleTypeError(Exception):
    def __init__(self, message: str, span: A.Span = A.NOSPAN):
        self.span = span
        super().__init__(f"{span}: {message}" if span != A.NOSPAN else message)


# -- types -------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    unit: str = ""

    def __str__(self):
        return f"Number[{self.unit}]" if self.unit else "Number"


@dataclass(frozen=True)
class BoolT:
    def __str__(self):
        return "Bool"


@dataclass(frozen=True)
class EnumT:
    domain: str

    def __str__(self):
        return self.domain


@dataclass(frozen=True)
class EnumSetT:
    domain: str
    values: tuple[str, ...]

    def __str__(self):
        return f"{{{', '.join(self.values)}}}"


@dataclass(frozen=True)
class RecordT:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class ListT:
    elem: "Type"
    length: Optional[int] = None

    def __str__(self):
        return f"List[{self.elem}]" if self.length is None else f"List[{self.elem}; {self.length}]"


@dataclass(frozen=True)
class Pos2D:
    unit: str = ""

    def __str__(self):
        return "Position2D"


Type = Union[Num, BoolT, EnumT, EnumSetT, RecordT, ListT, Pos2D]
BOOL = BoolT()


@dataclass
class Schema:
    """Domain model against which rules are checked.

    ``param_types`` types parameters of ``pred``/``rule`` declarations by name;
    ``roots`` are the names a rule parameter or binding may draw from.
    """

    name: str
    enums: dict[str, tuple[str, ...]]
    records: dict[str, dict[str, Type]]
    param_types: dict[str, Type]
    roots: dict[str, Type] = field(default_factory=dict)
    globals: dict[str, Type] = field(default_factory=lambda: {"NOW": Num("s")})
    enum_aliases: dict[str, str] = field(default_factory=dict)
    field_aliases: dict[str, dict[str, str]] = field(default_factory=dict)

    def canonical_enum(self, name: str) -> Optional[tuple[str, str]]:
        name = self.enum_aliases.get(name, name)
        for domain, values in self.enums.items():
            if name in values:
                return domain, name
        return None

    def field_name(self, record: str, name: str) -> str:
        return self.field_aliases.get(record, {}).get(name, name)

    def field_type(self, record: str, name: str) -> Optional[Type]:
        return self.records.get(record, {}).get(self.field_name(record, name))


# -- trainable descriptors ----------------------------------------------

TRAINABLE_KINDS = {
    "isAboveThreshold": "AboveThreshold",
    "isBelowThreshold": "BelowThreshold",
    "hasRightValue1D": "RightValue1D",
    "hasRightValue2D": "RightValue2D",
    "hasRightCategories": "RightCategories",
}
INTRINSICS = {"sqrt"}


@dataclass(frozen=True)
class TrainableDescr:
    kind: str
    site_id: str
    min: Union[float, tuple[float, float], None] = None
    max: Union[float, tuple[float, float], None] = None
    capacity: Optional[int] = None
    categories: Optional[int] = None
    qualifier_key: Optional[str] = None
    take: Optional[int] = None
    category_values: tuple[str, ...] = ()
    call: A.Call = field(default=None, compare=False, repr=False)

    @property
    def qualifier_domain(self) -> str:
        return "resolved at dataset-bind time" if self.qualifier_key else "-"

    def param_count(self, n_qualifier: int = 1) -> int:
        """Closed-form parameter count of the compiled block."""
        per = {
            "AboveThreshold": 1,
            "BelowThreshold": 1,
            "RightValue1D": (self.capacity or 0) + 1,
            "RightValue2D": (self.capacity or 0) ** 2 + 1,
        }.get(self.kind)
        if per is None:
            c, m = self.capacity, self.categories * self.take
            per = c * m + 2 * c + 1
        return per * (n_qualifier if self.qualifier_key else 1)


@dataclass
class TypedRuleFile:
    file: A.RuleFile
    schema: Schema
    types: dict[int, Type]
    trainables: list[TrainableDescr]
    sites: dict[int, TrainableDescr]
    trainable_preds: set[str]
    enum_values: dict[int, str]
    selections: set[int]

    def type_of(self, node) -> Type:
        return self.types[id(node)]

    def has_trainable(self, node) -> bool:
        for n in A.walk(node):
            if isinstance(n, A.Call) and (id(n) in self.sites or n.name in self.trainable_preds):
                return True
        return False


def const_value(e) -> Optional[float]:
    """Fold a constant numeric expression; None when not constant."""
    if isinstance(e, A.NumberLit):
        return e.value
    if isinstance(e, A.Neg):
        v = const_value(e.operand)
        return None if v is None else -v
    if isinstance(e, A.Binary) and e.op in "+-*/":
        a, b = const_value(e.left), const_value(e.right)
        if a is None or b is None:
            return None
        if e.op == "/" and b == 0:
            return None
        return {"+": a + b, "-": a - b, "*": a * b, "/": a / b if b else None}[e.op]
    return None


# -- checker -------------------------------------------------------------

_ARITH = {"+", "-", "*", "/"}
_ORDER = {"<", ">", "<=", ">="}


class _Checker:
    def __init__(self, rf: A.RuleFile, schema: Schema):
        self.rf = rf
        self.schema = schema
        self.types: dict[int, Type] = {}
        self.sites: dict[int, TrainableDescr] = {}
        self.trainables: list[TrainableDescr] = []
        self.enum_values: dict[int, str] = {}
        self.selections: set[int] = set()
        self.owner = ""
        self.ordinal = 0

    def set(self, node, t: Type) -> Type:
        self.types[id(node)] = t
        return t

    # -- declarations ---------------------------------------------------
    def run(self) -> TypedRuleFile:
        names = [p.name for p in self.rf.preds]
        for n in names:
            if names.count(n) > 1:
                raise RuleTypeError(f"duplicate predicate {n!r}")
        self.check_call_graph()
        for p in self.rf.preds:
            self.owner, self.ordinal = p.name, 0
            scope = {name: self.param_type(name, p.span) for name in p.params}
            t = self.expr(p.body, scope)
            if t != BOOL:
                raise RuleTypeError(f"predicate {p.name!r}: Bool expected, got {t}", p.span)
        for r in self.rf.rules:
            self.owner, self.ordinal = r.name, 0
            scope = dict(self.schema.roots)
            for name in r.params:
                if name in self.schema.roots:
                    scope[name] = self.schema.roots[name]
                else:
                    scope[name] = self.param_type(name, r.span)
            for name, e in r.bindings:
                scope[name] = self.binding(name, e, scope)
            t = self.expr(r.condition, scope)
            if t != BOOL:
                raise RuleTypeError(f"rule {r.name!r}: condition must be Bool, got {t}", r.condition.span)
            for act in r.actions:
                for a in act.args:
                    if isinstance(a, A.VarPath):
                        self.expr(a, scope)
        return TypedRuleFile(self.rf, self.schema, self.types, self.trainables, self.sites,
                             self.trainable_pred_names(), self.enum_values, self.selections)

    def param_type(self, name: str, span) -> Type:
        t = self.schema.param_types.get(name) or self.schema.roots.get(name)
        if t is None:
            raise RuleTypeError(f"cannot type parameter {name!r}: not in schema", span)
        return t

    def call_targets(self, node) -> set[str]:
        return {n.name for n in A.walk(node) if isinstance(n, A.Call)}

    def check_call_graph(self):
        graph = {p.name: self.call_targets(p.body) & {q.name for q in self.rf.preds} for p in self.rf.preds}
        state: dict[str, int] = {}

        def visit(n, stack):
            if state.get(n) == 1:
                cycle = " -> ".join(stack[stack.index(n):] + [n])
                raise RuleTypeError(f"recursive predicate call: {cycle}", self.rf.pred(n).span)
            if state.get(n) == 2:
                return
            state[n] = 1
            for m in sorted(graph[n]):
                visit(m, stack + [n])
            state[n] = 2

        for n in graph:
            visit(n, [])

    def trainable_pred_names(self) -> set[str]:
        direct = {}
        for p in self.rf.preds:
            calls = [n for n in A.walk(p.body) if isinstance(n, A.Call)]
            direct[p.name] = (any(id(c) in self.sites for c in calls), {c.name for c in calls})
        out: set[str] = set()
        changed = True
        while changed:
            changed = False
            for name, (has, callees) in direct.items():
                if name not in out and (has or callees & out):
                    out.add(name)
                    changed = True
        return out

    def binding(self, name: str, e, scope) -> Type:
        # `x = coll.filter(cond)` selects the single element named `x`
        if (isinstance(e, A.Pipeline) and len(e.stages) == 1 and e.stages[0].name == "filter"
                and len(e.stages[0].args) == 1 and not isinstance(e.stages[0].args[0], A.Lambda)):
            src = self.expr(e.source, scope)
            if not isinstance(src, ListT):
                raise RuleTypeError(f"filter source must be a list, got {src}", e.span)
            cond = self.expr(e.stages[0].args[0], {**scope, name: src.elem})
            if cond != BOOL:
                raise RuleTypeError(f"filter condition: Bool expected, got {cond}", e.span)
            self.selections.add(id(e))
            return self.set(e, src.elem)
        return self.expr(e, scope)

    # -- expressions ----------------------------------------------------
    def expr(self, e, scope) -> Type:
        method = getattr(self, "e_" + type(e).__name__)
        return self.set(e, method(e, scope))

    def e_NumberLit(self, e, scope):
        return Num()

    def e_EnumLit(self, e, scope):
        hit = self.schema.canonical_enum(e.name)
        if hit is None:
            raise RuleTypeError(f"unknown enum literal {e.name!r}", e.span)
        self.enum_values[id(e)] = hit[1]
        return EnumT(hit[0])

    def e_VarPath(self, e, scope):
        head = e.parts[0]
        if head in scope:
            t = scope[head]
        elif head in self.schema.globals:
            t = self.schema.globals[head]
        else:
            raise RuleTypeError(f"unresolved path {e.dotted!r}", e.span)
        for part in e.parts[1:]:
            t = self.field(t, part, e)
        return t

    def field(self, t, name, e):
        if not isinstance(t, RecordT):
            raise RuleTypeError(f"unresolved path {getattr(e, 'dotted', name)!r}: {t} has no field {name!r}", e.span)
        ft = self.schema.field_type(t.name, name)
        if ft is None:
            raise RuleTypeError(f"unresolved path {getattr(e, 'dotted', name)!r}: {t} has no field {name!r}", e.span)
        return ft

    def e_Field(self, e, scope):
        return self.field(self.expr(e.target, scope), e.name, e)

    def e_Neg(self, e, scope):
        t = self.expr(e.operand, scope)
        if not isinstance(t, Num):
            raise RuleTypeError(f"Number expected, got {t}", e.span)
        return t

    def e_Not(self, e, scope):
        t = self.expr(e.operand, scope)
        if t != BOOL:
            raise RuleTypeError(f"Bool expected, got {t}", e.span)
        return BOOL

    def e_Lambda(self, e, scope):
        raise RuleTypeError("lambda only allowed as a pipeline stage argument", e.span)

    def e_Tuple2(self, e, scope):
        raise RuleTypeError("tuple only allowed as min/max of a 2D trainable predicate", e.span)

    def e_Binary(self, e, scope):
        op = e.op
        lt = self.expr(e.left, scope)
        rt = self.expr(e.right, scope)
        if op in _ARITH:
            self.need_num(lt, e.left)
            self.need_num(rt, e.right)
            if op in "+-":
                return Num(self.unify_units(lt, rt, e))
            return Num(_combine_unit(lt.unit, rt.unit, op))
        if op == "^":
            self.need_num(lt, e.left)
            n = const_value(e.right)
            if n is None or n < 1 or not float(n).is_integer():
                raise RuleTypeError("exponent must be a positive integer constant", e.right.span)
            return Num(f"{lt.unit}^{int(n)}" if lt.unit else "")
        if op in _ORDER:
            self.need_num(lt, e.left)
            self.need_num(rt, e.right)
            self.unify_units(lt, rt, e)
            return BOOL
        if op == "==":
            if isinstance(lt, Num) and isinstance(rt, Num):
                self.unify_units(lt, rt, e)
                return BOOL
            if isinstance(lt, EnumT) and isinstance(rt, (EnumT, EnumSetT)) and lt.domain == rt.domain:
                return BOOL
            raise RuleTypeError(f"cannot compare {lt} with {rt}", e.span)
        if op == "in":
            if isinstance(rt, ListT) and rt.elem == lt:
                return BOOL
            raise RuleTypeError(f"membership test of {lt} in {rt}", e.span)
        if op == "||" and isinstance(lt, (EnumT, EnumSetT)) and isinstance(rt, (EnumT, EnumSetT)):
            if lt.domain != rt.domain:
                raise RuleTypeError(f"enum alternatives from different domains: {lt}, {rt}", e.span)
            return EnumSetT(lt.domain, self.enum_members(e.left) + self.enum_members(e.right))
        if op in ("&&", "||"):
            for side, t in ((e.left, lt), (e.right, rt)):
                if t != BOOL:
                    raise RuleTypeError(f"Bool expected, got {t}", side.span)
            return BOOL
        raise RuleTypeError(f"unknown operator {op!r}", e.span)

    def enum_members(self, e) -> tuple[str, ...]:
        if isinstance(e, A.EnumLit):
            return (self.enum_values[id(e)],)
        return self.types[id(e)].values

    def need_num(self, t, e):
        if not isinstance(t, Num):
            raise RuleTypeError(f"Number expected, got {t}", e.span)

    def unify_units(self, a: Num, b: Num, e) -> str:
        if a.unit and b.unit and a.unit != b.unit:
            raise RuleTypeError(f"unit mismatch: {a.unit} vs {b.unit}", e.span)
        return a.unit or b.unit

    def e_Pipeline(self, e, scope):
        t = self.expr(e.source, scope)
        if not isinstance(t, ListT):
            raise RuleTypeError(f"pipeline source must be a list, got {t}", e.source.span)
        for st in e.stages:
            if not isinstance(t, ListT):
                raise RuleTypeError(f"stage {st.name!r} applied to {t}", st.span)
            if st.name in ("filter", "sortDesc"):
                if len(st.args) != 1 or not isinstance(st.args[0], A.Lambda):
                    raise RuleTypeError(f"{st.name} expects one lambda argument", st.span)
                lam = st.args[0]
                bt = self.expr(lam.body, {**scope, lam.param: t.elem})
                want = BOOL if st.name == "filter" else None
                if st.name == "filter" and bt != want:
                    raise RuleTypeError(f"filter lambda: Bool expected, got {bt}", lam.span)
                if st.name == "sortDesc" and not isinstance(bt, Num):
                    raise RuleTypeError(f"sortDesc key: Number expected, got {bt}", lam.span)
                t = ListT(t.elem, None)
            elif st.name == "first":
                if st.args:
                    raise RuleTypeError("first() takes no arguments", st.span)
                t = t.elem
            elif st.name == "take":
                n = const_value(st.args[0]) if len(st.args) == 1 else None
                if n is None or n < 1 or not float(n).is_integer():
                    raise RuleTypeError("take(n) needs a positive integer constant", st.span)
                t = ListT(t.elem, int(n))
        return t

    # -- calls ------------------------------------------------------------
    def e_Call(self, e, scope):
        if e.name in TRAINABLE_KINDS:
            return self.trainable(e, scope)
        if e.qualifier is not None:
            raise RuleTypeError(f"qualifier on non-trainable call {e.name!r}", e.span)
        if e.name in INTRINSICS:
            if len(e.args) != 1 or e.named:
                raise RuleTypeError("sqrt takes one argument", e.span)
            t = self.expr(e.args[0], scope)
            self.need_num(t, e.args[0])
            return Num(_sqrt_unit(t.unit))
        pred = self.rf.pred(e.name)
        if pred is None:
            raise RuleTypeError(f"unresolved call target {e.name!r}", e.span)
        if e.named:
            raise RuleTypeError(f"predicate {e.name!r} takes no named arguments", e.span)
        if len(e.args) != len(pred.params):
            raise RuleTypeError(f"{e.name!r} expects {len(pred.params)} arguments, got {len(e.args)}", e.span)
        for a, pname in zip(e.args, pred.params):
            at = self.expr(a, scope)
            want = self.param_type(pname, pred.span)
            if at != want:
                raise RuleTypeError(f"argument {pname!r} of {e.name!r}: {want} expected, got {at}", a.span)
        return BOOL

    def const_arg(self, e, key, required=True):
        v = e.kwarg(key)
        if v is None:
            if required:
                raise RuleTypeError(f"{e.name}: missing named argument {key!r}", e.span)
            return None
        c = const_value(v)
        if c is None:
            raise RuleTypeError(f"{e.name}: {key} must be a numeric constant", v.span)
        return c

    def int_arg(self, e, key):
        c = self.const_arg(e, key)
        if c < 1 or not float(c).is_integer():
            raise RuleTypeError(f"{e.name}: {key} must be a positive integer", e.kwarg(key).span)
        return int(c)

    def pair_arg(self, e, key):
        v = e.kwarg(key)
        if v is None:
            raise RuleTypeError(f"{e.name}: missing named argument {key!r}", e.span)
        if not isinstance(v, A.Tuple2):
            raise RuleTypeError(f"{e.name}: {key} must be a pair (a, b)", v.span)
        a, b = const_value(v.first), const_value(v.second)
        if a is None or b is None:
            raise RuleTypeError(f"{e.name}: {key} must be a constant pair", v.span)
        self.set(v, Pos2D())
        return (a, b)

    def trainable(self, e, scope):
        kind = TRAINABLE_KINDS[e.name]
        allowed = {"AboveThreshold": {"min", "max"}, "BelowThreshold": {"min", "max"},
                   "RightValue1D": {"min", "max", "capacity"}, "RightValue2D": {"min", "max", "capacity"},
                   "RightCategories": {"categories", "capacity"}}[kind]
        extra = {k for k, _ in e.named} - allowed
        if extra:
            raise RuleTypeError(f"{e.name}: unexpected named argument(s) {sorted(extra)}", e.span)
        if len(e.args) != 1:
            raise RuleTypeError(f"{e.name} takes exactly one positional argument", e.span)
        qkey = None
        if e.qualifier is not None:
            qt = self.expr(e.qualifier, scope)
            if not isinstance(qt, EnumT) or not isinstance(e.qualifier, A.VarPath):
                raise RuleTypeError("qualifier must be an enum-valued path", e.qualifier.span)
            qkey = e.qualifier.dotted
        xt = self.expr(e.args[0], scope)
        kw: dict = {}
        if kind in ("AboveThreshold", "BelowThreshold", "RightValue1D"):
            self.need_num(xt, e.args[0])
            lo, hi = self.const_arg(e, "min"), self.const_arg(e, "max")
            if not lo < hi:
                raise RuleTypeError(f"{e.name}: min < max required", e.span)
            kw.update(min=lo, max=hi)
            if kind == "RightValue1D":
                kw["capacity"] = self.int_arg(e, "capacity")
        elif kind == "RightValue2D":
            if not isinstance(xt, Pos2D):
                raise RuleTypeError(f"{e.name}: Position2D expected, got {xt}", e.args[0].span)
            lo, hi = self.pair_arg(e, "min"), self.pair_arg(e, "max")
            if not (lo[0] < hi[0] and lo[1] < hi[1]):
                raise RuleTypeError(f"{e.name}: min < max required componentwise", e.span)
            kw.update(min=lo, max=hi, capacity=self.int_arg(e, "capacity"))
        else:
            if not isinstance(xt, ListT) or xt.length is None:
                raise RuleTypeError(f"{e.name}: fixed-length list expected (use take(n)), got {xt}",
                                    e.args[0].span)
            values = self.category_values(e.args[0], xt.elem)
            m = self.int_arg(e, "categories")
            if m != len(values):
                raise RuleTypeError(f"{e.name}: categories={m} but the domain has {len(values)} values "
                                    f"({', '.join(values)})", e.span)
            kw.update(categories=m, capacity=self.int_arg(e, "capacity"), take=xt.length,
                      category_values=values)
        descr = TrainableDescr(kind, f"{self.owner}.{self.ordinal}", qualifier_key=qkey, call=e, **kw)
        self.ordinal += 1
        self.sites[id(e)] = descr
        self.trainables.append(descr)
        return BOOL

    def category_field(self, elem) -> Optional[str]:
        if isinstance(elem, RecordT):
            enum_fields = [k for k, v in self.schema.records[elem.name].items() if isinstance(v, EnumT)]
            if len(enum_fields) == 1:
                return enum_fields[0]
        return None

    def category_values(self, pipe, elem) -> tuple[str, ...]:
        if isinstance(elem, EnumT):
            domain = elem.domain
            fname = None
        else:
            fname = self.category_field(elem)
            if fname is None:
                raise RuleTypeError(f"cannot derive categories from {elem}", pipe.span)
            domain = self.schema.records[elem.name][fname].domain
        allowed = list(self.schema.enums[domain])
        if isinstance(pipe, A.Pipeline):
            for st in pipe.stages:
                if st.name == "filter":
                    body = st.args[0].body
                    if isinstance(body, A.Binary) and body.op == "==":
                        rt = self.types.get(id(body.right))
                        if isinstance(rt, EnumSetT):
                            allowed = [v for v in allowed if v in rt.values]
                        elif isinstance(rt, EnumT) and isinstance(body.right, A.EnumLit):
                            allowed = [self.enum_values[id(body.right)]]
        return tuple(allowed)


def _combine_unit(a: str, b: str, op: str) -> str:
    if not a and not b:
        return ""
    if not b:
        return a
    if not a:
        return b if op == "*" else f"1/{b}"
    return f"{a}{op}{b}"


def _sqrt_unit(u: str) -> str:
    if u.endswith("^2"):
        return u[:-2]
    return f"sqrt({u})" if u else ""


def typecheck(rf: A.RuleFile, schema: Schema) -> TypedRuleFile:
    """Annotate every expression with a type and collect trainable sites."""
    return _Checker(rf, schema).run()


def list_trainables(typed: TypedRuleFile) -> list[TrainableDescr]:
    """Trainable sites in source order (predicates, then rules)."""
    return list(typed.trainables)

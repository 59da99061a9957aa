"""Canonical pretty-printer. Output re-parses to a structurally equal tree."""

from __future__ import annotations

from . import ast as A


def fmt_number(v: float) -> str:
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def expr_str(e) -> str:
    if isinstance(e, A.NumberLit):
        return fmt_number(e.value)
    if isinstance(e, A.EnumLit):
        return e.name
    if isinstance(e, A.VarPath):
        return e.dotted
    if isinstance(e, A.Field):
        return f"{_atom(e.target)}.{e.name}"
    if isinstance(e, A.Binary):
        return f"({expr_str(e.left)} {e.op} {expr_str(e.right)})"
    if isinstance(e, A.Neg):
        return f"-{_atom(e.operand)}"
    if isinstance(e, A.Not):
        return f"(!{_atom(e.operand)})"
    if isinstance(e, A.Lambda):
        return f"{e.param} -> {expr_str(e.body)}"
    if isinstance(e, A.Tuple2):
        return f"({expr_str(e.first)}, {expr_str(e.second)})"
    if isinstance(e, A.Call):
        parts = [expr_str(a) for a in e.args] + [f"{k}={expr_str(v)}" for k, v in e.named]
        qual = f"@[{expr_str(e.qualifier)}]" if e.qualifier is not None else ""
        return f"{e.name}{qual}({', '.join(parts)})"
    if isinstance(e, A.Pipeline):
        out = _atom(e.source)
        for st in e.stages:
            out += f".{st.name}({', '.join(expr_str(a) for a in st.args)})"
        return out
    raise TypeError(f"not an expression: {e!r}")


def _atom(e) -> str:
    s = expr_str(e)
    if isinstance(e, (A.NumberLit, A.EnumLit, A.VarPath, A.Call, A.Pipeline, A.Field, A.Binary, A.Tuple2)):
        return s
    return f"({s})"


def format_file(rf: A.RuleFile) -> str:
    out = []
    for r in rf.rules:
        out.append(f"rule {r.name}({', '.join(r.params)}) {{")
        for name, e in r.bindings:
            out.append(f"    {name} = {expr_str(e)}")
        out.append(f"    condition {{ {expr_str(r.condition)} }}")
        if r.actions:
            acts = " ".join(f"{a.callee}({', '.join(expr_str(x) for x in a.args)})" for a in r.actions)
            out.append(f"    action {{ {acts} }}")
        out.append("}")
    for p in rf.preds:
        out.append(f"pred {p.name}({', '.join(p.params)}) {{ {expr_str(p.body)} }}")
    return "\n".join(out) + ("\n" if out else "")

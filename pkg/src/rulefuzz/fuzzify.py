"""Compile typed rules into differentiable models.

Every boolean sub-formula that contains a trainable predicate becomes a
soft connective; every maximal trainable-free sub-formula becomes a 0/1 gate
whose value is computed exactly and fed in behind ``stop_gradient``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from typing import Callable, Optional

import numpy as np

from . import scenarios
from .autodiff import Graph, ParamStore, forward
from .dsl import ast as A
from .dsl import load
from .dsl.printer import expr_str, format_file
from .dsl.types import EnumT, RecordT, TrainableDescr, TypedRuleFile
from .strict import StrictEvaluator


HIDDEN_BIAS_INIT = 0.1


class CompileError(Exception):
    pass


class UnknownQualifier(ValueError):
    pass


@dataclass
class FuzzConfig:
    p: float = 10.0
    mu_placement: str = "uniform_grid"
    seed: int = 0

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError(f"connective strength p must be > 1, got {self.p}")
        if self.mu_placement not in ("uniform_grid", "uniform_random"):
            raise ValueError(f"unknown mu placement {self.mu_placement!r}")


# -- transformation blocks -----------------------------------------------------

def t_strict_gate(g: Graph, value) -> int:
    """0/1 truth value with no gradient path; ``value`` is an input name or a bool."""
    node = g.input(value) if isinstance(value, str) else g.const(1.0 if value else 0.0)
    return g.stop_gradient(node)


def _sum(g: Graph, nodes: list[int]) -> int:
    acc = nodes[0]
    for n in nodes[1:]:
        acc = g.add(acc, n)
    return acc


def t_conj(g: Graph, children: list[int], p: float) -> int:
    k = len(children)
    z = g.sub(_sum(g, children), g.const(k - 0.5))
    return g.sigmoid(g.mul(z, g.const(p)))


def t_disj(g: Graph, children: list[int], p: float) -> int:
    z = g.sub(_sum(g, children), g.const(0.5))
    return g.sigmoid(g.mul(z, g.const(p)))


def t_neg(g: Graph, child: int) -> int:
    return g.sub(g.const(1.0), child)


def normalized(g: Graph, x: int, lo: float, hi: float) -> int:
    return g.div(g.sub(x, g.const(lo)), g.const(hi - lo))


def t_above(g: Graph, x: int, lo: float, hi: float, w_t: int, p: float) -> int:
    return g.sigmoid(g.mul(g.sub(normalized(g, x, lo, hi), w_t), g.const(p)))


def t_below(g: Graph, x: int, lo: float, hi: float, w_t: int, p: float) -> int:
    # S(-z) = 1 - S(z); written this way so the pair sums to exactly 1 in floating point
    return g.sub(g.const(1.0), t_above(g, x, lo, hi, w_t, p))


def rbf_grid(c: int) -> np.ndarray:
    return np.array([0.5]) if c == 1 else np.linspace(0.0, 1.0, c)


def rbf_sigma(c: int) -> float:
    return 1.0 if c == 1 else 1.0 / (c - 1)


def t_rbf1d(g: Graph, x: int, lo: float, hi: float, mu: np.ndarray, sigma: float,
            w_a: int, w_b: int) -> int:
    xn = g.expand(normalized(g, x, lo, hi))
    d2 = g.square(g.sub(xn, g.const(mu)))
    phi = g.exp(g.mul(d2, g.const(-1.0 / (2 * sigma ** 2))))
    return g.sigmoid(g.add(g.sum(g.mul(phi, w_a)), w_b))


def t_rbf2d(g: Graph, x: int, y: int, lo: tuple, hi: tuple, mu: np.ndarray, sigma: float,
            w_a: int, w_b: int) -> int:
    """``mu`` has shape (c*c, 2) in normalized coordinates."""
    xn = g.expand(normalized(g, x, lo[0], hi[0]))
    yn = g.expand(normalized(g, y, lo[1], hi[1]))
    d2 = g.add(g.square(g.sub(xn, g.const(mu[:, 0]))), g.square(g.sub(yn, g.const(mu[:, 1]))))
    phi = g.exp(g.mul(d2, g.const(-1.0 / (2 * sigma ** 2))))
    return g.sigmoid(g.add(g.sum(g.mul(phi, w_a)), w_b))


def t_categories(g: Graph, xvec: int, w_h: int, b_h: int, w_o: int, b_o: int) -> int:
    """``xvec`` is (batch, m); ``w_h`` is (m, c)."""
    hidden = g.relu(g.add(g.matmul(xvec, w_h), b_h))
    return g.sigmoid(g.add(g.sum(g.mul(hidden, w_o)), b_o))


def classify_head(g: Graph, logits: int, gate: int, slow: list[bool]) -> int:
    """Softmax over logits with slow classes raised by ``gate`` and fast ones scaled by ``1 - gate``."""
    slow_mask = np.array([1.0 if s else 0.0 for s in slow])
    ge = g.expand(gate)
    fast_scale = g.sub(g.const(1.0), g.mul(ge, g.const(1.0 - slow_mask)))
    shifted = g.add(g.mul(logits, fast_scale), g.mul(ge, g.const(slow_mask)))
    return g.softmax(shifted)


# -- encoders -----------------------------------------------------------------------

class Encoder:
    """Maps a list of records to the named input arrays of a graph."""

    input_names: tuple[str, ...] = ()

    def encode(self, records: list[dict]) -> dict[str, np.ndarray]:
        raise NotImplementedError


@dataclass
class _Frame:
    call: Optional[A.Call]
    parent: Optional["_Frame"]


@dataclass
class _Extractor:
    name: str
    kind: str  # gate, num, pos, cats, qual
    expr: object
    frame: Optional[_Frame]
    descr: Optional[TrainableDescr] = None
    values: tuple = ()


class RuleEncoder(Encoder):
    def __init__(self, typed: TypedRuleFile, name: str, env_builder: Callable[[dict], dict]):
        self.typed = typed
        self.name = name
        self.env_builder = env_builder
        self.evaluator = StrictEvaluator(typed)
        self.extractors: list[_Extractor] = []
        self.rule = typed.file.rule(name)
        self.pred = None if self.rule is not None else typed.file.pred(name)

    @property
    def input_names(self):
        out = []
        for ex in self.extractors:
            if ex.kind == "pos":
                out += [ex.name + ":x", ex.name + ":y"]
            elif ex.kind == "qual":
                out += [f"{ex.name}={v}" for v in ex.values]
            else:
                out.append(ex.name)
        return tuple(out)

    def root_env(self, record: dict) -> dict:
        roots = self.env_builder(record)
        if self.rule is not None:
            return self.evaluator.rule_env(self.rule, roots)
        return {"NOW": roots.get("NOW"), **{p: roots[p] for p in self.pred.params}}

    def encode(self, records: list[dict]) -> dict[str, np.ndarray]:
        cols: dict[str, list] = {}
        for rec in records:
            base = self.root_env(rec)
            envs: dict[int, dict] = {}

            def env_of(frame):
                if frame is None:
                    return base
                key = id(frame)
                if key not in envs:
                    envs[key] = self.evaluator.call_env(frame.call, env_of(frame.parent))
                return envs[key]

            for ex in self.extractors:
                env = env_of(ex.frame)
                if ex.kind == "gate":
                    cols.setdefault(ex.name, []).append(1.0 if self.evaluator.eval(ex.expr, env) else 0.0)
                elif ex.kind == "num":
                    cols.setdefault(ex.name, []).append(float(self.evaluator.eval(ex.expr, env)))
                elif ex.kind == "pos":
                    x, y = self.evaluator.eval(ex.expr, env)
                    cols.setdefault(ex.name + ":x", []).append(float(x))
                    cols.setdefault(ex.name + ":y", []).append(float(y))
                elif ex.kind == "cats":
                    cols.setdefault(ex.name, []).append(self.one_hot(ex, self.evaluator.eval(ex.expr, env)))
                elif ex.kind == "qual":
                    v = self.evaluator.eval(ex.expr, env)
                    if v not in ex.values:
                        raise UnknownQualifier(
                            f"unseen qualifier value {v!r} for {ex.descr.qualifier_key} "
                            f"(trained values: {', '.join(map(str, ex.values))})")
                    for q in ex.values:
                        cols.setdefault(f"{ex.name}={q}", []).append(1.0 if v == q else 0.0)
        out = {}
        for name in self.input_names:
            col = cols.get(name, [])
            out[name] = np.asarray(col, dtype=float)
        for ex in self.extractors:
            if ex.kind == "cats" and not records:
                out[ex.name] = np.zeros((0, ex.descr.take * ex.descr.categories))
        return out

    def one_hot(self, ex: _Extractor, items) -> np.ndarray:
        d = ex.descr
        m = d.categories
        vec = np.zeros(d.take * m)
        for pos, item in enumerate(list(items)[: d.take]):
            cat = item if not isinstance(item, dict) else item[ex.values[0]]
            if cat in d.category_values:
                vec[pos * m + d.category_values.index(cat)] = 1.0
        return vec


class MergedEncoder(Encoder):
    def __init__(self, *parts: Encoder):
        self.parts = parts

    @property
    def input_names(self):
        return tuple(n for p in self.parts for n in p.input_names)

    def encode(self, records):
        out = {}
        for p in self.parts:
            out.update(p.encode(records))
        return out


# -- model ---------------------------------------------------------------------------

@dataclass
class SiteInfo:
    descr: TrainableDescr
    offsets: dict  # {qualifier value or "": {param name: (offset, shape)}}
    mu: Optional[np.ndarray] = None
    sigma: Optional[float] = None
    qualifier_values: tuple = ()

    def param_count(self) -> int:
        return sum(int(np.prod(shape)) for per in self.offsets.values() for _, shape in per.values())


@dataclass
class DiffModel:
    graph: Graph
    params: ParamStore
    output: int
    encoder: Encoder
    head: str = "binary"  # or "classification"
    sites: list[SiteInfo] = field(default_factory=list)
    blocks: list[tuple[str, str, int]] = field(default_factory=list)
    spec: dict = field(default_factory=dict)
    slow_classes: tuple[bool, ...] = ()

    def param_count(self) -> int:
        return len(self.params)

    def forward_encoded(self, inputs: dict) -> np.ndarray:
        return forward(self.graph, inputs, self.params, upto=self.output)[self.output]

    def predict_proba(self, records: list[dict]) -> np.ndarray:
        return self.forward_encoded(self.encoder.encode(records))

    @property
    def n_classes(self) -> int:
        return len(self.slow_classes) if self.head == "classification" else 2

    def threshold_sites(self) -> list[SiteInfo]:
        return [s for s in self.sites if s.descr.kind in ("AboveThreshold", "BelowThreshold")]


def param_count(model: DiffModel) -> int:
    return model.param_count()


class Compiler:
    """Appends the compiled form of one rule or predicate to a graph."""

    def __init__(self, typed: TypedRuleFile, name: str, config: FuzzConfig,
                 env_builder: Callable[[dict], dict], graph: Graph, params: ParamStore,
                 qualifier_domain: Optional[tuple] = None, prefix: str = ""):
        self.typed = typed
        self.name = name
        self.config = config
        self.g = graph
        self.params = params
        self.qualifier_domain = tuple(qualifier_domain) if qualifier_domain else None
        self.prefix = prefix
        self.rng = np.random.default_rng(config.seed)
        self.encoder = RuleEncoder(typed, name, env_builder)
        self.sites: dict[str, SiteInfo] = {}
        self.blocks: list[tuple[str, str, int]] = []
        self._num = 0

    def fresh(self, kind: str) -> str:
        self._num += 1
        return f"{self.prefix}{kind}{self._num}"

    def compile(self) -> int:
        if self.encoder.rule is not None:
            return self.bool_node(self.encoder.rule.condition, None)
        if self.encoder.pred is None:
            raise CompileError(f"no rule or predicate named {self.name!r}")
        return self.bool_node(self.encoder.pred.body, None)

    def bool_node(self, e, frame) -> int:
        g = self.g
        if not self.typed.has_trainable(e):
            name = self.fresh("gate")
            self.encoder.extractors.append(_Extractor(name, "gate", e, frame))
            node = t_strict_gate(g, name)
            self.blocks.append(("gate", expr_str(e), node))
            return node
        if isinstance(e, A.Binary) and e.op in ("&&", "||"):
            kids = [self.bool_node(c, frame) for c in A.flatten(e.op, e)]
            node = (t_conj if e.op == "&&" else t_disj)(g, kids, self.config.p)
            self.blocks.append(("conj" if e.op == "&&" else "disj", str(e.span), node))
            return node
        if isinstance(e, A.Not):
            node = t_neg(g, self.bool_node(e.operand, frame))
            self.blocks.append(("neg", str(e.span), node))
            return node
        if isinstance(e, A.Call) and id(e) in self.typed.sites:
            return self.site_node(self.typed.sites[id(e)], e, frame)
        if isinstance(e, A.Call) and e.name in self.typed.trainable_preds:
            return self.bool_node(self.typed.file.pred(e.name).body, _Frame(e, frame))
        raise CompileError(f"unsupported expression around a trainable predicate: {expr_str(e)}")

    # -- trainable sites ----------------------------------------------------------
    def site_info(self, d: TrainableDescr) -> SiteInfo:
        if d.site_id in self.sites:
            return self.sites[d.site_id]
        qvals = ("",)
        if d.qualifier_key:
            if not self.qualifier_domain:
                raise CompileError(f"site {d.site_id} is qualified by {d.qualifier_key}; "
                                   f"a qualifier domain is required")
            qvals = self.qualifier_domain
        info = SiteInfo(d, {}, qualifier_values=qvals if d.qualifier_key else ())
        if d.kind in ("RightValue1D", "RightValue2D"):
            c = d.capacity
            if self.config.mu_placement == "uniform_grid":
                axis = rbf_grid(c)
                mu = axis if d.kind == "RightValue1D" else np.array([(a, b) for a in axis for b in axis])
            else:
                mu = self.rng.uniform(0, 1, size=c if d.kind == "RightValue1D" else (c * c, 2))
            info.mu, info.sigma = mu, rbf_sigma(c)
        sid = self.prefix + d.site_id
        for q in qvals:
            owner = sid if q == "" else f"{sid}[{q}]"
            per = {}
            if d.kind in ("AboveThreshold", "BelowThreshold"):
                per["w_t"] = (self.params.allocate(owner, [0.5], bounds=(0.0, 1.0)), ())
            elif d.kind in ("RightValue1D", "RightValue2D"):
                n = d.capacity if d.kind == "RightValue1D" else d.capacity ** 2
                per["w_a"] = (self.params.allocate(owner, self.rng.uniform(-0.1, 0.1, n)), (n,))
                per["w_b"] = (self.params.allocate(owner, [0.0]), ())
            else:
                m, c = d.take * d.categories, d.capacity
                per["w_h"] = (self.params.allocate(owner, self.rng.uniform(-0.1, 0.1, m * c)), (m, c))
                # positive start so no hidden unit begins dead or voting against the predicate
                per["b_h"] = (self.params.allocate(owner, np.full(c, HIDDEN_BIAS_INIT)), (c,))
                per["w_o"] = (self.params.allocate(owner, self.rng.uniform(0.0, 0.1, c)), (c,))
                per["b_o"] = (self.params.allocate(owner, [0.0]), ())
            info.offsets[q] = per
        self.sites[d.site_id] = info
        return info

    def site_node(self, d: TrainableDescr, call: A.Call, frame) -> int:
        g = self.g
        info = self.site_info(d)
        base = self.fresh("site")
        arg = call.args[0]
        if d.kind == "RightValue2D":
            self.encoder.extractors.append(_Extractor(base, "pos", arg, frame, d))
            xin, yin = g.input(base + ":x"), g.input(base + ":y")
        elif d.kind == "RightCategories":
            elem_field = self.category_field(arg)
            self.encoder.extractors.append(_Extractor(base, "cats", arg, frame, d, (elem_field,)))
            xin = g.input(base)
        else:
            self.encoder.extractors.append(_Extractor(base, "num", arg, frame, d))
            xin = g.input(base)

        def block(per) -> int:
            P = {k: g.param(off, shape) for k, (off, shape) in per.items()}
            if d.kind == "AboveThreshold":
                return t_above(g, xin, d.min, d.max, P["w_t"], self.config.p)
            if d.kind == "BelowThreshold":
                return t_below(g, xin, d.min, d.max, P["w_t"], self.config.p)
            if d.kind == "RightValue1D":
                return t_rbf1d(g, xin, d.min, d.max, info.mu, info.sigma, P["w_a"], P["w_b"])
            if d.kind == "RightValue2D":
                return t_rbf2d(g, xin, yin, d.min, d.max, info.mu, info.sigma, P["w_a"], P["w_b"])
            return t_categories(g, xin, P["w_h"], P["b_h"], P["w_o"], P["b_o"])

        if not d.qualifier_key:
            node = block(info.offsets[""])
        else:
            qname = base + ":q"
            qexpr = call.qualifier
            self.encoder.extractors.append(_Extractor(qname, "qual", qexpr, frame, d, info.qualifier_values))
            parts = []
            for q in info.qualifier_values:
                parts.append(g.mul(g.input(f"{qname}={q}"), block(info.offsets[q])))
            node = _sum(g, parts)
        self.blocks.append(("site", d.site_id, node))
        return node

    def category_field(self, arg) -> Optional[str]:
        t = self.typed.type_of(arg)
        elem = t.elem
        if isinstance(elem, RecordT):
            for k, v in self.typed.schema.records[elem.name].items():
                if isinstance(v, EnumT):
                    return k
        return None


def fuzzify(typed: TypedRuleFile, rule_name: str, config: Optional[FuzzConfig] = None,
            qualifier_domain: Optional[tuple] = None,
            env_builder: Optional[Callable[[dict], dict]] = None) -> DiffModel:
    """Compile ``rule_name`` (a rule or a predicate) into a binary-output model."""
    config = config or FuzzConfig()
    if env_builder is None:
        env_builder = scenarios.ENV_BUILDERS[typed.schema.name]
    if qualifier_domain is None and any(d.qualifier_key for d in typed.trainables):
        qualifier_domain = _schema_qualifier_domain(typed)
    g, store = Graph(), ParamStore()
    comp = Compiler(typed, rule_name, config, env_builder, g, store, qualifier_domain)
    out = comp.compile()
    return DiffModel(g, store, out, comp.encoder, "binary", list(comp.sites.values()), comp.blocks,
                     spec={"kind": "rule", "rule_name": rule_name, "config": asdict(config),
                           "scenario": typed.schema.name, "source": format_file(typed.file),
                           "qualifier_domain": list(qualifier_domain) if qualifier_domain else None})


def _schema_qualifier_domain(typed: TypedRuleFile) -> Optional[tuple]:
    for d in typed.trainables:
        if d.qualifier_key:
            qt = typed.type_of(d.call.qualifier)
            return tuple(typed.schema.enums[qt.domain])
    return None


# -- export / import -------------------------------------------------------------------

def _site_json(s: SiteInfo, store: ParamStore) -> dict:
    d = s.descr
    params = {}
    for q, per in s.offsets.items():
        params[q] = {k: store.values[off:off + int(np.prod(shape))].reshape(shape).tolist()
                     for k, (off, shape) in per.items()}
    return {
        "kind": d.kind, "site_id": d.site_id, "min": d.min, "max": d.max, "capacity": d.capacity,
        "categories": d.categories, "qualifier_key": d.qualifier_key,
        "qualifier_values": list(s.qualifier_values),
        "mu": None if s.mu is None else s.mu.tolist(), "sigma": s.sigma, "params": params,
    }


def model_to_json(model: DiffModel) -> dict:
    doc = dict(model.spec)
    doc["format"] = "rulefuzz-model/1"
    doc["head"] = model.head
    doc["param_count"] = model.param_count()
    doc["sites"] = [_site_json(s, model.params) for s in model.sites]
    doc["values"] = model.params.values.tolist()
    return doc


def save_model(model: DiffModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_json(model), fh, indent=1, sort_keys=True)
        fh.write("\n")


def model_from_json(doc: dict) -> DiffModel:
    from .baseline import rebuild

    if doc.get("format") != "rulefuzz-model/1":
        raise ValueError("not a rulefuzz model document")
    if doc["kind"] == "rule":
        schema = scenarios.SCHEMAS[doc["scenario"]]
        typed = load(doc["source"], schema)
        cfg = FuzzConfig(**doc["config"])
        qd = tuple(doc["qualifier_domain"]) if doc.get("qualifier_domain") else None
        model = fuzzify(typed, doc["rule_name"], cfg, qd)
        model.spec.update({k: doc[k] for k in ("scenario", "source", "relaxation") if k in doc})
    else:
        model = rebuild(doc)
    values = np.asarray(doc["values"], dtype=float)
    if values.shape != model.params.values.shape:
        raise ValueError(f"parameter vector has {values.size} entries, model expects {len(model.params)}")
    model.params.values = values
    return model


def load_model(path) -> DiffModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_json(json.load(fh))


def compile_bundled(scenario: str, relaxation: str, config: Optional[FuzzConfig] = None) -> DiffModel:
    """Compile one of the shipped rule files for the scenario's top-level rule."""
    source = scenarios.rules_source(scenario, relaxation)
    typed = load(source, scenarios.SCHEMAS[scenario])
    model = fuzzify(typed, scenarios.RULE_NAME[scenario], config)
    model.spec.update({"scenario": scenario, "source": source, "relaxation": relaxation})
    return model

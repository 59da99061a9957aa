"""Dense networks on the same autodiff engine, plus their feature encoders."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import scenarios
from .autodiff import Graph, ParamStore
from .fuzzify import Compiler, DiffModel, Encoder, FuzzConfig, MergedEncoder, classify_head
from .dsl import load

WIDTHS = (128, 256, 512, 1024)
HEADGEAR = {"TAKE_HGEAR": 1.0, "RET_HGEAR": -1.0}


@dataclass(frozen=True)
class BaselineSpec:
    depth: int = 2
    width: int = 256
    epsilon: float = 0.1

    def __post_init__(self):
        if self.depth not in (1, 2):
            raise ValueError(f"depth must be 1 or 2, got {self.depth}")
        if self.width < 1:
            raise ValueError(f"width must be positive, got {self.width}")

    @classmethod
    def parse(cls, text: str, epsilon: float = 0.1) -> "BaselineSpec":
        """Parse ``"DxW"``, e.g. ``"2x256"``."""
        try:
            depth, width = (int(p) for p in text.lower().split("x"))
        except ValueError:
            raise ValueError(f"baseline spec must look like 2x256, got {text!r}") from None
        return cls(depth, width, epsilon)


class IndustryFeatures(Encoder):
    """Eight features: relative time, position, workplace one-hot and the last two headgear events."""

    input_names = ("x",)
    width = 8

    def encode(self, records):
        rows = np.zeros((len(records), self.width))
        window = scenarios.SHIFT_LENGTH + 2 * 36000.0
        for i, rec in enumerate(records):
            shift, worker = rec["shift"], rec["worker"]
            rows[i, 0] = (rec["now"] - shift["start"] + 36000.0) / window
            rows[i, 1] = worker["posX"] / scenarios.WORLD[0]
            rows[i, 2] = worker["posY"] / scenarios.WORLD[1]
            rows[i, 3 + scenarios.WORKPLACES.index(shift["workplace"]["id"])] = 1.0
            gear = [e for e in worker["events"] if e["type"] in HEADGEAR]
            gear.sort(key=lambda e: e["time"], reverse=True)
            for k, e in enumerate(gear[:2]):
                rows[i, 6 + k] = HEADGEAR[e["type"]]
        return {"x": rows}


class RecodexFeatures(Encoder):
    """Job features scaled to roughly [0, 1], four noise features and the queue lengths."""

    input_names = ("x",)

    def __init__(self, n_workers: int):
        self.n_workers = n_workers
        self.width = 6 + n_workers

    def encode(self, records):
        rows = np.zeros((len(records), self.width))
        for i, rec in enumerate(records):
            job = rec["job"]
            rows[i, 0] = job["refSolutionDuration"] / 200.0
            rows[i, 1] = job["timeLimit"] / 900.0
            rows[i, 2:6] = job["noise"]
            rows[i, 6:] = np.asarray(rec["queue"], dtype=float) / 3.0
        return {"x": rows}


def features_for(name: str, n_workers: int = 4) -> Encoder:
    if name == "industry":
        return IndustryFeatures()
    if name == "recodex":
        return RecodexFeatures(n_workers)
    raise ValueError(f"no feature encoder for {name!r}")


def _glorot(rng, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def dense_trunk(g: Graph, store: ParamStore, x: int, spec: BaselineSpec, input_width: int,
                rng, prefix: str = "dense") -> int:
    h, fan_in = x, input_width
    for layer in range(spec.depth):
        w = store.allocate(f"{prefix}{layer}.W", _glorot(rng, fan_in, spec.width, fan_in * spec.width))
        b = store.allocate(f"{prefix}{layer}.b", np.zeros(spec.width))
        h = g.relu(g.add(g.matmul(h, g.param(w, (fan_in, spec.width))), g.param(b, (spec.width,))))
        fan_in = spec.width
    return h


def build_baseline(spec: BaselineSpec, input_width: int, head: str = "binary", n_classes: int = 2,
                   seed: int = 0, encoder: Encoder | None = None) -> DiffModel:
    """Dense ReLU network; the parameter count is the sum of in*out + out over layers."""
    if input_width < 1:
        raise ValueError("input_width must be >= 1")
    if head not in ("binary", "classification"):
        raise ValueError(f"unknown head {head!r}")
    rng = np.random.default_rng(seed)
    g, store = Graph(), ParamStore()
    h = dense_trunk(g, store, g.input("x"), spec, input_width, rng)
    w = spec.width
    if head == "binary":
        wo = store.allocate("out.W", _glorot(rng, w, 1, w))
        bo = store.allocate("out.b", [0.0])
        out = g.sigmoid(g.add(g.sum(g.mul(h, g.param(wo, (w,)))), g.param(bo)))
        slow = ()
    else:
        out = g.softmax(_logits(g, store, h, w, n_classes, rng))
        slow = tuple(False for _ in range(n_classes))
    model = DiffModel(g, store, out, encoder, head, slow_classes=slow)
    model.spec = {"kind": "baseline", "baseline": asdict(spec), "input_width": input_width,
                  "head": head, "n_classes": n_classes, "seed": seed}
    return model


def _logits(g, store, h, width, n_classes, rng) -> int:
    wo = store.allocate("out.W", _glorot(rng, width, n_classes, width * n_classes))
    bo = store.allocate("out.b", np.zeros(n_classes))
    return g.add(g.matmul(h, g.param(wo, (width, n_classes))), g.param(bo, (n_classes,)))


def build_gated_classifier(spec: BaselineSpec, workers: tuple[int, int], seed: int = 0,
                           p: float = 10.0, relaxation: str = "relaxed") -> DiffModel:
    """Dense job router whose output layer is adjusted by the relaxed isSlow predicate.

    Workers ``0..n_fast-1`` are fast; the rest are slow.
    """
    n_fast, n_slow = workers
    k = n_fast + n_slow
    feats = RecodexFeatures(k)
    rng = np.random.default_rng(seed)
    g, store = Graph(), ParamStore()
    h = dense_trunk(g, store, g.input("x"), spec, feats.width, rng)
    logits = _logits(g, store, h, spec.width, k, rng)
    source = scenarios.rules_source("recodex", relaxation)
    typed = load(source, scenarios.RECODEX)
    comp = Compiler(typed, "isSlow", FuzzConfig(p=p, seed=seed), scenarios.recodex_env, g, store,
                    prefix="slow:")
    gate = comp.compile()
    slow = [i >= n_fast for i in range(k)]
    out = classify_head(g, logits, gate, slow)
    model = DiffModel(g, store, out, MergedEncoder(feats, comp.encoder), "classification",
                      list(comp.sites.values()), comp.blocks, slow_classes=tuple(slow))
    model.spec = {"kind": "gated", "baseline": asdict(spec), "workers": list(workers), "seed": seed,
                  "p": p, "relaxation": relaxation, "source": source}
    return model


def build_dense_classifier(spec: BaselineSpec, workers: tuple[int, int], seed: int = 0) -> DiffModel:
    k = sum(workers)
    feats = RecodexFeatures(k)
    model = build_baseline(spec, feats.width, "classification", k, seed, feats)
    model.spec.update({"features": "recodex", "workers": list(workers)})
    return model


def build_industry_baseline(spec: BaselineSpec, seed: int = 0) -> DiffModel:
    feats = IndustryFeatures()
    model = build_baseline(spec, feats.width, "binary", 2, seed, feats)
    model.spec["features"] = "industry"
    return model


def rebuild(doc: dict) -> DiffModel:
    """Recreate the graph of a saved baseline or gated model (weights are restored by the caller)."""
    spec = BaselineSpec(**doc["baseline"])
    if doc["kind"] == "gated":
        return build_gated_classifier(spec, tuple(doc["workers"]), doc["seed"], doc["p"], doc["relaxation"])
    if doc["kind"] != "baseline":
        raise ValueError(f"unknown model kind {doc['kind']!r}")
    if doc.get("features") == "industry":
        return build_industry_baseline(spec, doc["seed"])
    if doc.get("features") == "recodex":
        return build_dense_classifier(spec, tuple(doc["workers"]), doc["seed"])
    return build_baseline(spec, doc["input_width"], doc["head"], doc["n_classes"], doc["seed"])

"""Accuracy comparison across models and datasets, repeated over seeds."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .baseline import (BaselineSpec, build_dense_classifier, build_gated_classifier,
                       build_industry_baseline)
from .data import Dataset, generate, split
from .fuzzify import DiffModel, FuzzConfig, compile_bundled
from .train import TrainConfig, encode, train

MODEL_COLUMNS = ("baseline", "time-ab", "time-right", "all")
REFERENCE_ALL_COUNT = 1227


def named_model(name: str, seed: int, p: float = 10.0, baseline: str = "2x256",
                epsilon: float | None = None) -> tuple[DiffModel, float]:
    """Model for a column name plus the label smoothing it trains with."""
    if name == "baseline":
        spec = BaselineSpec.parse(baseline, 0.1 if epsilon is None else epsilon)
        return build_industry_baseline(spec, seed), spec.epsilon
    model = compile_bundled("industry", name, FuzzConfig(p=p, seed=seed))
    return model, 0.0 if epsilon is None else epsilon


@dataclass
class ReportConfig:
    n: int = 20000
    epochs: int = 100
    repeats: int = 5
    data_seed: int = 0
    split_seed: int = 0
    batch_size: int = 100
    lr: float = 0.01
    p: float = 10.0
    baseline: str = "2x256"
    datasets: tuple[str, ...] = ("random", "combined")
    models: tuple[str, ...] = MODEL_COLUMNS + ("strict",)
    timing: bool = False

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        self.datasets = tuple(self.datasets)
        self.models = tuple(self.models)


def all_count_note(count: int) -> str:
    return (f"'all' has {count} trainable parameters by the block formulas "
            f"(RBF-1D 20+1, RBF-2D 3x(400+1), categories 2x1+1+1+1); "
            f"the reference table lists {REFERENCE_ALL_COUNT}, a difference of {count - REFERENCE_ALL_COUNT}")


def report(config: ReportConfig | None = None, data: dict[str, Dataset] | None = None,
           progress=None) -> dict:
    """Train every (model, dataset) pair for seeds 1..repeats and aggregate.

    The split is fixed per dataset; seeds change initialization and batch
    order only.
    """
    config = config or ReportConfig()
    data = dict(data or {})
    cells: dict = {}
    counts: dict = {}
    for ds_name in config.datasets:
        ds = data.get(ds_name) or generate(ds_name, config.n, config.data_seed)
        tr, va = split(ds, 0.9, config.split_seed)
        cells[ds_name] = {}
        for m_name in config.models:
            runs = []
            encoded = None
            for seed in range(1, config.repeats + 1):
                model, eps = named_model(m_name, seed, config.p, config.baseline)
                if encoded is None:
                    encoded = (encode(model, tr), encode(model, va))
                tcfg = TrainConfig(config.epochs, config.batch_size, config.lr, eps, seed)
                rep = train(model, *encoded, tcfg, name=m_name)
                counts[m_name] = rep.param_count
                runs.append(rep)
                if progress:
                    progress(f"{ds_name:9s} {m_name:11s} seed {seed}: {rep.final_accuracy:.4f}")
            acc = np.array([r.final_accuracy for r in runs])
            cell = {
                "mean": float(acc.mean()), "std": float(acc.std()),
                "runs": [float(a) for a in acc],
                "epoch10": [float(r.history[min(9, len(r.history) - 1)]) for r in runs],
                "loss_first": [float(r.loss_history[0]) for r in runs],
                "loss_epoch10": [float(r.loss_history[min(9, len(r.loss_history) - 1)]) for r in runs],
                "clamp_ok": all(r.clamp_ok for r in runs),
            }
            if config.timing:
                cell["seconds"] = [r.seconds for r in runs]
            cells[ds_name][m_name] = cell
    notes = [all_count_note(counts["all"])] if "all" in counts else []
    return {"kind": "report", "config": asdict(config), "columns": list(config.models),
            "datasets": list(config.datasets), "cells": cells, "param_counts": counts, "notes": notes}


def format_table(doc: dict) -> str:
    cols = doc["columns"]
    width = max(12, *(len(c) + 2 for c in cols))
    lines = ["dataset".ljust(10) + "".join(c.rjust(width) for c in cols)]
    for ds in doc["datasets"]:
        row = doc["cells"][ds]
        lines.append(ds.ljust(10) + "".join(f"{100 * row[c]['mean']:.3f}%".rjust(width) for c in cols))
        lines.append("  std".ljust(10) + "".join(f"{100 * row[c]['std']:.3f}".rjust(width) for c in cols))
    lines.append("params".ljust(10) + "".join(f"{doc['param_counts'][c]:,}".rjust(width) for c in cols))
    lines += [f"note: {n}" for n in doc["notes"]]
    return "\n".join(lines)


# -- job routing ----------------------------------------------------------------------

@dataclass
class ParityConfig:
    n: int = 20480
    workers: tuple[int, int] = (2, 2)
    baseline: str = "1x128"
    epochs: int = 30
    batch_size: int = 100
    lr: float = 0.01
    p: float = 10.0
    seed: int = 1
    data_seed: int = 0


def parity(config: ParityConfig | None = None, dataset: Dataset | None = None) -> dict:
    """Train the gated router and the plain dense router on the same split."""
    config = config or ParityConfig()
    ds = dataset or generate("recodex", config.n, config.data_seed, tuple(config.workers))
    workers = tuple(ds.meta["workers"])
    tr, va = split(ds, 0.9, 0)
    spec = BaselineSpec.parse(config.baseline, 0.0)
    tcfg = TrainConfig(config.epochs, config.batch_size, config.lr, 0.0, config.seed)
    gated = build_gated_classifier(spec, workers, config.seed, config.p)
    dense = build_dense_classifier(spec, workers, config.seed)
    rg = train(gated, tr, va, tcfg, name="gated")
    rd = train(dense, tr, va, tcfg, name="dense")
    return {"kind": "parity", "config": asdict(config),
            "gated": {"accuracy": rg.final_accuracy, "params": rg.param_count, "history": rg.history},
            "dense": {"accuracy": rd.final_accuracy, "params": rd.param_count, "history": rd.history},
            "difference": abs(rg.final_accuracy - rd.final_accuracy)}

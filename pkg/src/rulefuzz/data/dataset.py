"""Dataset container, stratified split, batching and JSON Lines IO."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

FORMAT = "rulefuzz-dataset/1"


class DatasetFormatError(ValueError):
    pass


class LabelMismatch(ValueError):
    pass


@dataclass
class Dataset:
    records: list[dict]
    scenario: str
    seed: int = 0
    provenance: str = "random"
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.scenario, self.seed, self.provenance, self.meta, self.records) == \
            (other.scenario, other.seed, other.provenance, other.meta, other.records)

    @property
    def labels(self) -> np.ndarray:
        return np.array([r["label"] for r in self.records], dtype=int)

    @property
    def strata(self) -> list[str]:
        return [r["stratum"] for r in self.records]

    def strata_counts(self) -> dict[str, int]:
        return dict(sorted(Counter(self.strata).items()))

    def subset(self, indices) -> "Dataset":
        return Dataset([self.records[i] for i in indices], self.scenario, self.seed,
                       self.provenance, dict(self.meta))


def split(dataset: Dataset, fraction: float = 0.9, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Deterministic shuffle, then a per-stratum split.

    The training part has ``round(fraction * n)`` records; strata are
    allocated by largest remainder so their shares match in both parts.
    """
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(dataset))
    groups: dict[str, list[int]] = {}
    for i in order:
        groups.setdefault(dataset.records[i]["stratum"], []).append(int(i))
    keys = sorted(groups)
    n_train = int(round(fraction * len(dataset)))
    exact = {k: fraction * len(groups[k]) for k in keys}
    take = {k: int(np.floor(exact[k])) for k in keys}
    short = n_train - sum(take.values())
    by_remainder = sorted(keys, key=lambda k: (-(exact[k] - take[k]), k))
    for k in by_remainder[:max(short, 0)]:
        take[k] += 1
    train_idx, val_idx = [], []
    for k in keys:
        train_idx += groups[k][:take[k]]
        val_idx += groups[k][take[k]:]
    train_idx = [train_idx[i] for i in rng.permutation(len(train_idx))]
    val_idx = [val_idx[i] for i in rng.permutation(len(val_idx))]
    return dataset.subset(train_idx), dataset.subset(val_idx)


def batches(n: int, batch_size: int = 100, epoch_seed: int = 0) -> list[np.ndarray]:
    """Index batches over ``n`` records, reshuffled by ``epoch_seed``; the last batch may be short."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if isinstance(n, Dataset):
        n = len(n)
    order = np.random.default_rng(epoch_seed).permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


# -- JSON Lines -------------------------------------------------------------------

def header_of(dataset: Dataset) -> dict:
    return {"kind": "header", "schema": FORMAT, "scenario": dataset.scenario, "seed": dataset.seed,
            "provenance": dataset.provenance, "count": len(dataset),
            "strata": dataset.strata_counts(), "meta": dataset.meta}


def write_jsonl(dataset: Dataset, path) -> None:
    # json writes floats with repr(), the shortest string that round-trips exactly
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header_of(dataset), sort_keys=True) + "\n")
        for rec in dataset.records:
            fh.write(json.dumps({"kind": "record", **rec}, sort_keys=True) + "\n")


def _iter_lines(path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(f"{path}: line {lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(obj, dict) or "kind" not in obj:
                raise DatasetFormatError(f"{path}: line {lineno}: expected an object with a 'kind' field")
            yield lineno, obj


def read_jsonl(path, verify: bool = True) -> Dataset:
    """Load a dataset; with ``verify`` every stored label is re-derived by the oracle."""
    header = None
    records = []
    for lineno, obj in _iter_lines(path):
        if obj["kind"] == "header":
            if header is not None or records:
                raise DatasetFormatError(f"{path}: line {lineno}: header must be the first line")
            if obj.get("schema") != FORMAT:
                raise DatasetFormatError(f"{path}: line {lineno}: unsupported schema {obj.get('schema')!r}")
            header = obj
        elif obj["kind"] == "record":
            if header is None:
                raise DatasetFormatError(f"{path}: line {lineno}: record before header")
            obj.pop("kind")
            if "label" not in obj or "stratum" not in obj:
                raise DatasetFormatError(f"{path}: line {lineno}: record lacks label or stratum")
            records.append(obj)
        else:
            raise DatasetFormatError(f"{path}: line {lineno}: unknown kind {obj['kind']!r}")
    if header is None:
        raise DatasetFormatError(f"{path}: missing header line")
    if header.get("count") is not None and header["count"] != len(records):
        raise DatasetFormatError(f"{path}: header announces {header['count']} records, found {len(records)}")
    ds = Dataset(records, header["scenario"], header["seed"], header["provenance"], header.get("meta", {}))
    if verify:
        verify_labels(ds)
    return ds


def verify_labels(dataset: Dataset) -> None:
    """Raise :class:`LabelMismatch` unless every label and stratum matches the oracle."""
    from . import labeler

    label_fn = labeler(dataset)
    for i, rec in enumerate(dataset.records):
        label, stratum = label_fn(rec)
        if label != rec["label"] or stratum != rec["stratum"]:
            raise LabelMismatch(f"record {i}: stored label/stratum {rec['label']}/{rec['stratum']} "
                                f"but oracle gives {label}/{stratum}")

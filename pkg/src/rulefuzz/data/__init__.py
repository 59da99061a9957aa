"""Dataset generation, splitting, batching and serialization."""

from .dataset import (
    Dataset,
    DatasetFormatError,
    LabelMismatch,
    batches,
    read_jsonl,
    split,
    verify_labels,
    write_jsonl,
)
from .industry import GenerationError, GenSpec, gen_combined, gen_random_industry
from .recodex import JobSpec, assign, gen_recodex

__all__ = [
    "Dataset", "DatasetFormatError", "LabelMismatch", "GenerationError", "GenSpec", "JobSpec",
    "batches", "read_jsonl", "write_jsonl", "split", "verify_labels", "gen_random_industry",
    "gen_combined", "gen_recodex", "assign", "labeler", "generate",
]


def labeler(dataset: Dataset):
    """Function mapping a record of ``dataset`` to its oracle (label, stratum)."""
    if dataset.scenario == "industry":
        from .industry import label_record
        return label_record
    if dataset.scenario == "recodex":
        from .recodex import label_record
        n_fast = dataset.meta["workers"][0]
        return lambda rec: label_record(rec, n_fast)
    raise DatasetFormatError(f"unknown scenario {dataset.scenario!r}")


def generate(kind: str, n: int, seed: int, workers: tuple[int, int] = (2, 2)) -> Dataset:
    if kind == "random":
        return gen_random_industry(GenSpec(n=n, seed=seed))
    if kind == "combined":
        return gen_combined(GenSpec(n=n, seed=seed))
    if kind == "recodex":
        from .recodex import QUEUE_LEVELS
        n_states = QUEUE_LEVELS ** (workers[0] + workers[1])
        if n < n_states:
            raise GenerationError(f"n={n} is below one job crossed with {n_states} queue states")
        return gen_recodex(JobSpec(n_jobs=n // n_states), workers, seed)
    raise ValueError(f"unknown dataset kind {kind!r}")

"""Job-routing records: sampled jobs crossed with every quantized queue state."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .. import scenarios
from ..strict import Oracle
from .dataset import Dataset

QUEUE_LEVELS = 4  # per-worker load quantized to 0..3
BUSY_THRESHOLD = 2
TIME_LIMITS = (10.0, 20.0, 30.0, 60.0, 120.0, 180.0, 300.0, 450.0, 600.0, 900.0)
N_NOISE = 4


@dataclass
class JobSpec:
    n_jobs: int = 80
    min_duration: float = 1.0
    max_duration: float = 200.0


@lru_cache(maxsize=None)
def slow_oracle() -> Oracle:
    return Oracle(scenarios.bundled("recodex", "strict"), "isSlow", scenarios.recodex_env)


def assign(slow: bool, queue, n_fast: int, threshold: int = BUSY_THRESHOLD) -> int:
    """Worker index for a job.

    Workers ``0..n_fast-1`` form the fast group. Slow jobs go to the
    least-loaded slow worker. Fast jobs go to the least-loaded fast worker,
    unless every fast queue is longer than ``threshold`` and a slow worker
    is idle, in which case the lowest-index idle slow worker takes it.
    Ties break towards the lower index.
    """
    fast = range(n_fast)
    slow_group = range(n_fast, len(queue))
    if slow:
        return min(slow_group, key=lambda i: (queue[i], i))
    if min(queue[i] for i in fast) > threshold:
        idle = [i for i in slow_group if queue[i] == 0]
        if idle:
            return idle[0]
    return min(fast, key=lambda i: (queue[i], i))


def queue_states(n_workers: int) -> list[tuple[int, ...]]:
    return list(itertools.product(range(QUEUE_LEVELS), repeat=n_workers))


def sample_jobs(spec: JobSpec, rng) -> list[dict]:
    jobs = []
    lo, hi = np.log(spec.min_duration), np.log(spec.max_duration)
    for _ in range(spec.n_jobs):
        jobs.append({
            "refSolutionDuration": float(np.exp(rng.uniform(lo, hi))),
            "timeLimit": float(TIME_LIMITS[rng.integers(len(TIME_LIMITS))]),
            "noise": [float(v) for v in rng.uniform(0, 1, N_NOISE)],
        })
    return jobs


def gen_recodex(jobs_spec: JobSpec, workers: tuple[int, int] = (2, 2), seed: int = 0) -> Dataset:
    n_fast, n_slow = workers
    if n_fast < 1 or n_slow < 1:
        raise ValueError("need at least one fast and one slow worker")
    rng = np.random.default_rng(seed)
    jobs = sample_jobs(jobs_spec, rng)
    states = queue_states(n_fast + n_slow)
    oracle = slow_oracle()
    records = []
    for job in jobs:
        slow = bool(oracle.label({"job": job}))
        for q in states:
            records.append({"job": job, "queue": list(q), "label": assign(slow, q, n_fast),
                            "stratum": "1" if slow else "0"})
    return Dataset(records, "recodex", seed, "recodex", {"workers": [n_fast, n_slow]})


def label_record(rec: dict, n_fast: int) -> tuple[int, str]:
    slow = bool(slow_oracle().label(rec))
    return assign(slow, rec["queue"], n_fast), "1" if slow else "0"

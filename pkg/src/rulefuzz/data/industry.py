"""Synthetic records for the workplace-access scenario.

Random datasets draw every input uniformly and keep a draw only if the
strict rule puts it in the requested stratum (one bit per top-level
conjunct). Half of the records are positive; the negatives are spread
evenly over the seven failing bit patterns.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .. import scenarios
from ..scenarios import EVENT_TYPES, GATES, SHIFT_LENGTH, SHIFT_STARTS, WORKPLACES, WORLD
from ..strict import Oracle
from .dataset import Dataset

TRUE_STRATUM = "111"
FALSE_STRATA = tuple(format(i, "03b") for i in range(7))
GATE_RADIUS = 10.0
WALK_SPEED = 1.4


class GenerationError(RuntimeError):
    pass


@dataclass
class GenSpec:
    n: int = 20000
    seed: int = 0
    window: float = 36000.0
    max_events: int = 4
    retry_budget: int = 10000

    def __post_init__(self):
        if self.n < 8:
            raise GenerationError(f"n={self.n} is below the minimum of 8 (one record per stratum)")


@lru_cache(maxsize=None)
def strict_oracle() -> Oracle:
    return Oracle(scenarios.bundled("industry", "strict"), "AccessToWorkplace", scenarios.industry_env)


def balance_plan(n: int, true_fraction: float = 0.5) -> dict[str, int]:
    n_true = int(round(n * true_fraction))
    n_false = n - n_true
    base, extra = divmod(n_false, len(FALSE_STRATA))
    plan = {s: base + (1 if i < extra else 0) for i, s in enumerate(FALSE_STRATA)}
    plan[TRUE_STRATUM] = n_true
    return plan


def _shift(rng) -> dict:
    wp = WORKPLACES[rng.integers(len(WORKPLACES))]
    start = SHIFT_STARTS[rng.integers(len(SHIFT_STARTS))]
    gx, gy = GATES[wp]
    return {"start": start, "end": start + SHIFT_LENGTH,
            "workplace": {"id": wp, "gate": {"posX": gx, "posY": gy}}}


def _clip_pos(x, y):
    return float(min(max(x, 0.0), WORLD[0])), float(min(max(y, 0.0), WORLD[1]))


def _events(rng, now: float, max_events: int, span: float = 36000.0) -> list[dict]:
    k = int(rng.integers(0, max_events + 1))
    times = np.sort(rng.uniform(now - span, now, size=k))
    return [{"type": EVENT_TYPES[rng.integers(len(EVENT_TYPES))], "time": float(t)} for t in times]


def propose_random(rng, spec: GenSpec, near_gate: bool, worker_id: int = 0) -> dict:
    shift = _shift(rng)
    now = float(rng.uniform(shift["start"] - spec.window, shift["end"] + spec.window))
    if near_gate:
        g = shift["workplace"]["gate"]
        x, y = _clip_pos(g["posX"] + rng.uniform(-GATE_RADIUS, GATE_RADIUS),
                         g["posY"] + rng.uniform(-GATE_RADIUS, GATE_RADIUS))
    else:
        x, y = float(rng.uniform(0, WORLD[0])), float(rng.uniform(0, WORLD[1]))
    return {"now": now, "shift": shift,
            "worker": {"id": worker_id, "posX": x, "posY": y, "events": _events(rng, now, spec.max_events)}}


def _fill(stratum: str, count: int, rng, propose, spec: GenSpec) -> list[dict]:
    oracle = strict_oracle()
    out = []
    misses = 0
    while len(out) < count:
        rec = propose(rng)
        d = oracle.decide(rec)
        if d.stratum == stratum:
            rec["label"] = int(d.fired)
            rec["stratum"] = d.stratum
            out.append(rec)
            misses = 0
        else:
            misses += 1
            if misses > spec.retry_budget:
                raise GenerationError(f"stratum {stratum} unreachable within {spec.retry_budget} draws")
    return out


def _sub_rngs(seed: int, k: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(k)]


def gen_random_industry(spec: GenSpec) -> Dataset:
    plan = balance_plan(spec.n)
    strata = (TRUE_STRATUM,) + FALSE_STRATA
    rngs = _sub_rngs(spec.seed, len(strata) + 1)
    records = []
    for stratum, rng in zip(strata, rngs):
        near = stratum[1] == "1"
        records += _fill(stratum, plan[stratum], rng,
                         lambda r, near=near: propose_random(r, spec, near), spec)
    records = [records[i] for i in rngs[-1].permutation(len(records))]
    for i, rec in enumerate(records):
        rec["worker"]["id"] = i
    return Dataset(records, "industry", spec.seed, "random")


def simulate_true(rng, spec: GenSpec) -> dict:
    """One sample from a worker walking to the gate around shift start or leaving near its end."""
    shift = _shift(rng)
    g = shift["workplace"]["gate"]
    tx, ty = g["posX"] + rng.normal(0, 2.0), g["posY"] + rng.normal(0, 2.0)
    events = [{"type": "RET_HGEAR", "time": shift["start"] - 86400 + float(rng.uniform(28800, 32400))}]
    if rng.random() < 0.75:
        arrival = shift["start"] - 600 + rng.normal(0, 300)
        ox, oy = rng.uniform(0, WORLD[0]), rng.uniform(0, WORLD[1])
        dist = float(np.hypot(ox - tx, oy - ty))
        t = float(arrival + rng.uniform(-60, 300))
        if t < arrival and dist > 0:
            back = min((arrival - t) * WALK_SPEED, dist) / dist
            x, y = tx + (ox - tx) * back, ty + (oy - ty) * back
        else:
            x, y = tx + rng.normal(0, 1.5), ty + rng.normal(0, 1.5)
        events.append({"type": "TAKE_HGEAR", "time": float(arrival - rng.uniform(30, 600))})
        events.append({"type": "ENTER_GATE", "time": float(arrival)})
    else:
        leave = shift["end"] + 600 + rng.normal(0, 300)
        t = float(leave - rng.uniform(0, 300))
        x, y = tx + rng.normal(0, 1.5), ty + rng.normal(0, 1.5)
        events.append({"type": "TAKE_HGEAR", "time": float(shift["start"] - rng.uniform(300, 1200))})
        events.append({"type": "EXIT_GATE", "time": float(t - rng.uniform(0, 60))})
    x, y = _clip_pos(x, y)
    events = sorted((e for e in events if e["time"] <= t), key=lambda e: e["time"])
    return {"now": t, "shift": shift, "worker": {"id": 0, "posX": x, "posY": y, "events": events}}


def gen_combined(spec: GenSpec) -> Dataset:
    """False records from random sampling, true records from the walking simulation."""
    plan = balance_plan(spec.n)
    strata = (TRUE_STRATUM,) + FALSE_STRATA
    rngs = _sub_rngs(spec.seed, len(strata) + 1)
    records = _fill(TRUE_STRATUM, plan[TRUE_STRATUM], rngs[0], lambda r: simulate_true(r, spec), spec)
    for stratum, rng in zip(FALSE_STRATA, rngs[1:-1]):
        near = stratum[1] == "1"
        records += _fill(stratum, plan[stratum], rng,
                         lambda r, near=near: propose_random(r, spec, near), spec)
    records = [records[i] for i in rngs[-1].permutation(len(records))]
    for i, rec in enumerate(records):
        rec["worker"]["id"] = i
    return Dataset(records, "industry", spec.seed, "combined")


def label_record(rec: dict) -> tuple[int, str]:
    d = strict_oracle().decide(rec)
    return int(d.fired), d.stratum

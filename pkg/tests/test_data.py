import json
import math
from collections import Counter

import numpy as np
import pytest

from rulefuzz.data import (Dataset, DatasetFormatError, GenerationError, GenSpec, JobSpec, LabelMismatch,
                           assign, batches, gen_combined, gen_random_industry, gen_recodex, generate,
                           read_jsonl, split, verify_labels, write_jsonl)
from rulefuzz.data.industry import FALSE_STRATA, balance_plan
from rulefuzz.data.recodex import QUEUE_LEVELS, queue_states

import oracles


def bits(rec):
    return "".join(str(int(b)) for b in oracles.access_bits(rec))


@pytest.fixture(scope="module")
def random_8000():
    return gen_random_industry(GenSpec(n=8000, seed=3))


def test_balance_8000(random_8000):
    counts = random_8000.strata_counts()
    assert counts["111"] == 4000 and int(random_8000.labels.sum()) == 4000
    assert sorted(counts[s] for s in FALSE_STRATA) == [571] * 4 + [572] * 3


def test_balance_plan_sums():
    for n in (8, 9, 100, 20000, 20001):
        plan = balance_plan(n)
        assert sum(plan.values()) == n
        assert max(plan[s] for s in FALSE_STRATA) - min(plan[s] for s in FALSE_STRATA) <= 1


def test_labels_match_reference_oracle(random_8000, small_combined):
    for ds in (random_8000, small_combined):
        for rec in ds.records:
            assert bits(rec) == rec["stratum"]
            assert rec["label"] == int(rec["stratum"] == "111")


def test_every_false_stratum_present(small_random):
    assert set(small_random.strata_counts()) == set(FALSE_STRATA) | {"111"}


def test_generation_deterministic():
    a = gen_random_industry(GenSpec(n=200, seed=5))
    b = gen_random_industry(GenSpec(n=200, seed=5))
    c = gen_random_industry(GenSpec(n=200, seed=6))
    assert a == b and a != c


def test_minimum_size():
    with pytest.raises(GenerationError):
        gen_random_industry(GenSpec(n=4, seed=0))
    assert len(gen_random_industry(GenSpec(n=8, seed=0))) == 8


def test_unreachable_stratum_named():
    with pytest.raises(GenerationError, match="stratum"):
        gen_random_industry(GenSpec(n=8, seed=0, retry_budget=1))


def test_combined_true_records_near_gate(small_combined):
    trues = [r for r in small_combined.records if r["label"] == 1]
    assert len(trues) == len(small_combined) // 2
    dists = []
    for r in trues:
        g = r["shift"]["workplace"]["gate"]
        dists.append(math.hypot(g["posX"] - r["worker"]["posX"], g["posY"] - r["worker"]["posY"]))
    assert np.mean(dists) < 10


def test_combined_differs_from_random(small_random, small_combined):
    assert small_combined.provenance == "combined" and small_random.provenance == "random"


# -- recodex ---------------------------------------------------------------------------

def test_recodex_size_and_labels():
    ds = gen_recodex(JobSpec(n_jobs=5), (2, 2), seed=1)
    assert len(ds) == 5 * QUEUE_LEVELS ** 4
    for rec in ds.records:
        slow = oracles.is_slow(rec["job"])
        assert rec["label"] == oracles.route(slow, rec["queue"], 2)
        assert rec["stratum"] == ("1" if slow else "0")


def test_recodex_other_worker_counts():
    ds = gen_recodex(JobSpec(n_jobs=3), (1, 2), seed=2)
    assert len(ds) == 3 * QUEUE_LEVELS ** 3
    assert all(r["label"] == oracles.route(oracles.is_slow(r["job"]), r["queue"], 1) for r in ds.records)


def test_assignment_examples():
    assert assign(False, (0, 0, 0, 0), 2) == 0
    assert assign(True, (0, 0, 1, 0), 2) == 3
    assert assign(False, (3, 3, 1, 0), 2) == 3
    assert assign(False, (3, 3, 1, 1), 2) == 0
    for q in queue_states(4):
        if 0 in q[2:]:
            assert assign(True, q, 2) >= 2


def test_recodex_requires_both_groups():
    with pytest.raises(ValueError):
        gen_recodex(JobSpec(n_jobs=1), (0, 2))


def test_generate_recodex_below_state_count():
    with pytest.raises(GenerationError):
        generate("recodex", 100, 0)


# -- split / batches -------------------------------------------------------------------

def test_split_sizes_and_disjoint():
    ds = gen_random_industry(GenSpec(n=10000, seed=1, retry_budget=10000))
    tr, va = split(ds, 0.9, seed=4)
    assert (len(tr), len(va)) == (9000, 1000)
    key = lambda r: json.dumps(r, sort_keys=True)
    assert Counter(map(key, tr.records)) + Counter(map(key, va.records)) == Counter(map(key, ds.records))
    for s, n in ds.strata_counts().items():
        assert abs(va.strata_counts()[s] / len(va) - n / len(ds)) < 0.02
    again = split(ds, 0.9, seed=4)
    assert again[0] == tr and again[1] == va


def test_split_fraction_range(small_random):
    for bad in (0, 1, 1.5):
        with pytest.raises(ValueError):
            split(small_random, bad)


def test_batches():
    assert len(batches(9000, 100, 0)) == 90
    b = batches(950, 100, 3)
    assert len(b) == 10 and len(b[-1]) == 50
    assert np.array_equal(np.sort(np.concatenate(b)), np.arange(950))
    assert all(np.array_equal(x, y) for x, y in zip(b, batches(950, 100, 3)))
    assert not np.array_equal(b[0], batches(950, 100, 4)[0])
    with pytest.raises(ValueError):
        batches(10, 0)


# -- serialization ---------------------------------------------------------------------

def test_jsonl_round_trip(small_random, tmp_path):
    path = tmp_path / "d.jsonl"
    write_jsonl(small_random, path)
    back = read_jsonl(path)
    assert back == small_random
    header = json.loads(path.read_text().splitlines()[0])
    assert header["schema"] == "rulefuzz-dataset/1" and header["count"] == 400
    assert header["strata"] == small_random.strata_counts()


def test_floats_bit_exact(tmp_path):
    ds = gen_recodex(JobSpec(n_jobs=2), (1, 1), seed=9)
    path = tmp_path / "r.jsonl"
    write_jsonl(ds, path)
    back = read_jsonl(path)
    for a, b in zip(ds.records, back.records):
        assert a["job"]["refSolutionDuration"].hex() == b["job"]["refSolutionDuration"].hex()


def test_empty_dataset_header_only(tmp_path):
    path = tmp_path / "e.jsonl"
    write_jsonl(Dataset([], "industry"), path)
    assert len(path.read_text().splitlines()) == 1
    assert len(read_jsonl(path)) == 0


def test_malformed_line_number(small_random, tmp_path):
    path = tmp_path / "m.jsonl"
    write_jsonl(small_random, path)
    lines = path.read_text().splitlines()
    lines[4] = lines[4][:-3]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DatasetFormatError, match="line 5"):
        read_jsonl(path)


def test_missing_header(tmp_path):
    path = tmp_path / "h.jsonl"
    path.write_text('{"kind": "record", "label": 1, "stratum": "111"}\n')
    with pytest.raises(DatasetFormatError, match="line 1"):
        read_jsonl(path)


def test_label_tampering_detected(small_random, tmp_path):
    path = tmp_path / "t.jsonl"
    recs = [dict(r) for r in small_random.records]
    recs[17]["label"] = 1 - recs[17]["label"]
    write_jsonl(Dataset(recs, "industry"), path)
    with pytest.raises(LabelMismatch, match="record 17"):
        read_jsonl(path)
    assert len(read_jsonl(path, verify=False)) == 400


def test_verify_recodex():
    ds = gen_recodex(JobSpec(n_jobs=1), (2, 2), seed=0)
    verify_labels(ds)
    ds.records[0] = dict(ds.records[0], label=(ds.records[0]["label"] + 1) % 4)
    with pytest.raises(LabelMismatch):
        verify_labels(ds)

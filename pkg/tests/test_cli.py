import json

import pytest

from rulefuzz import scenarios
from rulefuzz.cli import main
from rulefuzz.data import write_jsonl
from rulefuzz.fuzzify import fuzzify, save_model


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory, small_random, small_combined):
    d = tmp_path_factory.mktemp("cli")
    write_jsonl(small_random, d / "random.jsonl")
    write_jsonl(small_combined, d / "combined.jsonl")
    assert main(["gen-data", "--scenario", "recodex", "--n", "512", "--seed", "1",
                 "--out", str(d / "recodex.jsonl")]) == 0
    return d


def rules_file(tmp_path, name, text=None):
    path = tmp_path / name
    path.write_text(text if text is not None else scenarios.rules_source(*name[:-6].split("-", 1)))
    return str(path)


def test_check_listing(tmp_path, capsys):
    assert main(["check", rules_file(tmp_path, "industry-all.rules")]) == 0
    out = capsys.readouterr().out
    assert "3 trainable sites" in out


def test_check_strict(tmp_path, capsys):
    assert main(["check", rules_file(tmp_path, "industry-strict.rules")]) == 0
    assert "0 trainable sites" in capsys.readouterr().out


def test_check_malformed(tmp_path, capsys):
    assert main(["check", rules_file(tmp_path, "bad.rules", "rule R { x > }")]) == 1
    assert "bad.rules:" in capsys.readouterr().out


def test_check_missing_file(tmp_path):
    assert main(["check", str(tmp_path / "nope.rules")]) == 2


def test_gen_data_balance_and_determinism(tmp_path, capsys):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert main(["gen-data", "--n", "700", "--seed", "3", "--out", str(a)]) == 0
    assert "balance: 350 true / 350 false" in capsys.readouterr().out
    assert main(["gen-data", "--n", "700", "--seed", "3", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_gen_data_too_small(tmp_path):
    assert main(["gen-data", "--n", "4", "--out", str(tmp_path / "x.jsonl")]) == 2


def test_train_strict_and_eval(data_dir, tmp_path, capsys):
    model, rep = tmp_path / "m.json", tmp_path / "r.json"
    assert main(["train", "--dataset", str(data_dir / "random.jsonl"), "--relaxation", "strict",
                 "--epochs", "2", "--out-model", str(model), "--out-report", str(rep)]) == 0
    doc = json.loads(rep.read_text())
    assert doc["final_accuracy"] == 1.0 and doc["param_count"] == 0 and "seconds" not in doc
    before = model.read_bytes()
    capsys.readouterr()
    assert main(["eval", "--model", str(model), "--dataset", str(data_dir / "combined.jsonl")]) == 0
    out = capsys.readouterr().out
    assert "accuracy 1.000000" in out and out.count("stratum") == 8
    assert model.read_bytes() == before


def test_train_baseline_count(data_dir, tmp_path):
    rep = tmp_path / "r.json"
    assert main(["train", "--dataset", str(data_dir / "random.jsonl"), "--baseline", "2x256",
                 "--epochs", "1", "--out-report", str(rep)]) == 0
    assert json.loads(rep.read_text())["param_count"] == 68353


def test_train_needs_one_model_choice(data_dir):
    assert main(["train", "--dataset", str(data_dir / "random.jsonl")]) == 2
    assert main(["train", "--dataset", str(data_dir / "random.jsonl"), "--relaxation", "all",
                 "--baseline", "1x128"]) == 2


def test_train_deterministic(data_dir, tmp_path):
    outs = []
    for i in range(2):
        rep, mod = tmp_path / f"r{i}.json", tmp_path / f"m{i}.json"
        assert main(["train", "--dataset", str(data_dir / "random.jsonl"), "--relaxation", "time-right",
                     "--epochs", "3", "--out-report", str(rep), "--out-model", str(mod)]) == 0
        outs.append((rep.read_bytes().replace(b"r1.json", b"r0.json"), mod.read_bytes()))
    assert outs[0] == outs[1]


def test_train_recodex_router(data_dir, tmp_path):
    rep = tmp_path / "r.json"
    assert main(["train", "--dataset", str(data_dir / "recodex.jsonl"), "--relaxation", "relaxed",
                 "--epochs", "1", "--out-report", str(rep)]) == 0
    assert json.loads(rep.read_text())["param_count"] == 1926


def test_train_nan_exit_code(data_dir, tmp_path):
    assert main(["train", "--dataset", str(data_dir / "random.jsonl"), "--relaxation", "time-right",
                 "--epochs", "1", "--lr", "nan"]) == 2


def test_eval_scenario_mismatch(data_dir, tmp_path):
    model = tmp_path / "m.json"
    assert main(["train", "--dataset", str(data_dir / "random.jsonl"), "--relaxation", "strict",
                 "--epochs", "1", "--out-model", str(model), "--out-report", str(tmp_path / "r.json")]) == 0
    assert main(["eval", "--model", str(model), "--dataset", str(data_dir / "recodex.jsonl")]) == 2


def test_eval_unseen_qualifier(data_dir, tmp_path, capsys):
    model = fuzzify(scenarios.bundled("industry", "all"), "AccessToWorkplace", qualifier_domain=("WP1",))
    path = tmp_path / "q.json"
    save_model(model, path)
    assert main(["eval", "--model", str(path), "--dataset", str(data_dir / "random.jsonl")]) == 2
    assert "WP2" in capsys.readouterr().err


def test_gradcheck(capsys):
    assert main(["gradcheck", "--relaxation", "time-right"]) == 0
    assert main(["gradcheck", "--relaxation", "strict"]) == 0
    assert "no trainable parameters" in capsys.readouterr().out
    assert main(["gradcheck", "--relaxation", "time-right", "--inject-fault"]) == 1


def test_report_smoke(data_dir, tmp_path, capsys):
    out = tmp_path / "rep.json"
    args = ["report", "--repeats", "1", "--epochs", "1", "--models", "time-ab,strict", "--quiet",
            "--data", str(data_dir / "random.jsonl"), str(data_dir / "combined.jsonl"), "--out-json", str(out)]
    assert main(args) == 0
    first = out.read_bytes()
    doc = json.loads(first)
    assert doc["cells"]["random"]["strict"]["mean"] == 1.0
    assert json.loads(json.dumps(doc)) == doc
    assert main(args) == 0
    assert out.read_bytes() == first


def test_module_entry_point():
    import subprocess
    import sys
    res = subprocess.run([sys.executable, "-m", "rulefuzz", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "gen-data" in res.stdout

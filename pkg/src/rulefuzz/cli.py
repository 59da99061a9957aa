"""Command-line interface.

Exit codes: 0 success, 1 diagnostics or a failed check, 2 runtime or numeric error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import scenarios
from .autodiff import NumericError, backward, forward, grad_check
from .baseline import BaselineSpec, build_dense_classifier, build_gated_classifier, build_industry_baseline
from .data import DatasetFormatError, GenerationError, LabelMismatch, generate, read_jsonl, split, write_jsonl
from .dsl import RuleSyntaxError, RuleTypeError, list_trainables, load
from .fuzzify import CompileError, FuzzConfig, UnknownQualifier, compile_bundled, fuzzify, load_model, save_model
from .report import ParityConfig, ReportConfig, format_table, parity, report
from .train import TrainConfig, accuracy, encode, stratum_accuracy, train

OK, DIAGNOSTIC, RUNTIME = 0, 1, 2


class CliError(Exception):
    pass


def _dump(doc, path) -> None:
    text = json.dumps(doc, indent=1, sort_keys=True) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _pair(text: str) -> tuple[int, int]:
    try:
        a, b = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected two comma-separated integers, got {text!r}") from None
    return a, b


# -- check ------------------------------------------------------------------------------

def _typecheck_any(source: str, scenario: str):
    names = list(scenarios.SCHEMAS) if scenario == "auto" else [scenario]
    first_error = None
    for name in names:
        try:
            return load(source, scenarios.SCHEMAS[name])
        except RuleTypeError as exc:
            first_error = first_error or exc
    raise first_error


def cmd_check(args) -> int:
    try:
        source = Path(args.rules).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read {args.rules}: {exc.strerror}", file=sys.stderr)
        return RUNTIME
    try:
        typed = _typecheck_any(source, args.scenario)
    except (RuleSyntaxError, RuleTypeError) as exc:
        print(f"{args.rules}:{exc}")
        return DIAGNOSTIC
    sites = list_trainables(typed)
    print(f"{args.rules}: ok ({typed.schema.name} schema, {len(typed.file.rules)} rules, "
          f"{len(typed.file.preds)} predicates)")
    print(f"{len(sites)} trainable sites")
    if sites:
        print(f"  {'site':24s} {'kind':16s} {'min':>14s} {'max':>22s} {'cap':>4s} {'cat':>4s}  qualifier")
        for d in sites:
            print(f"  {d.site_id:24s} {d.kind:16s} {d.min!s:>14s} {d.max!s:>22s} "
                  f"{d.capacity or '-'!s:>4s} {d.categories or '-'!s:>4s}  {d.qualifier_key or '-'}")
    return OK


# -- gen-data -----------------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    kind = "recodex" if args.scenario == "recodex" else args.kind
    if args.scenario == "industry" and kind == "recodex":
        raise CliError("--kind recodex needs --scenario recodex")
    ds = generate(kind, args.n, args.seed, args.workers)
    write_jsonl(ds, args.out)
    labels = ds.labels
    print(f"wrote {len(ds)} {ds.scenario} records ({ds.provenance}, seed {ds.seed}) to {args.out}")
    if ds.scenario == "industry":
        print(f"balance: {int((labels == 1).sum())} true / {int((labels == 0).sum())} false")
    else:
        print("classes: " + ", ".join(f"{k}={int((labels == k).sum())}" for k in sorted(set(labels.tolist()))))
    for stratum, count in ds.strata_counts().items():
        print(f"  stratum {stratum}: {count}")
    return OK


# -- train ------------------------------------------------------------------------------

def _model_for(args, scenario: str, n_workers=None):
    seed = args.seed
    if scenario == "recodex":
        spec = BaselineSpec.parse(args.baseline or "1x128", args.epsilon or 0.0)
        if args.relaxation:
            return build_gated_classifier(spec, n_workers, seed, args.p, args.relaxation), spec.epsilon
        return build_dense_classifier(spec, n_workers, seed), spec.epsilon
    chosen = [x for x in (args.rules, args.relaxation, args.baseline) if x]
    if len(chosen) != 1:
        raise CliError("choose exactly one of --rules, --relaxation or --baseline")
    if args.baseline:
        spec = BaselineSpec.parse(args.baseline, 0.1 if args.epsilon is None else args.epsilon)
        return build_industry_baseline(spec, seed), spec.epsilon
    cfg = FuzzConfig(p=args.p, seed=seed)
    eps = args.epsilon or 0.0
    if args.relaxation:
        return compile_bundled("industry", args.relaxation, cfg), eps
    typed = load(Path(args.rules).read_text(encoding="utf-8"), scenarios.SCHEMAS[scenario])
    return fuzzify(typed, args.rule or scenarios.RULE_NAME[scenario], cfg), eps


def cmd_train(args) -> int:
    ds = read_jsonl(args.dataset)
    model, eps = _model_for(args, ds.scenario, tuple(ds.meta.get("workers", ())) or None)
    tr, va = split(ds, 0.9, args.split_seed)
    cfg = TrainConfig(args.epochs, args.batch_size, args.lr, eps, args.seed)
    rep = train(model, tr, va, cfg)
    doc = rep.to_json(timing=args.timing)
    doc["model"] = model.spec.get("relaxation") or model.spec.get("kind")
    doc["dataset"] = {"path": str(args.dataset), "scenario": ds.scenario, "provenance": ds.provenance,
                      "seed": ds.seed, "train": len(tr), "validation": len(va)}
    if args.out_model:
        save_model(model, args.out_model)
    _dump(doc, args.out_report)
    print(f"final accuracy {rep.final_accuracy:.4f}, {rep.param_count:,} parameters, "
          f"epoch 10 accuracy {rep.history[min(9, len(rep.history) - 1)]:.4f}", file=sys.stderr)
    return OK


# -- eval -------------------------------------------------------------------------------

def cmd_eval(args) -> int:
    model = load_model(args.model)
    ds = read_jsonl(args.dataset)
    expected = model.spec.get("scenario") or ("recodex" if model.head == "classification" else "industry")
    if expected != ds.scenario:
        raise CliError(f"model is for the {expected} scenario but the dataset is {ds.scenario}")
    enc = encode(model, ds)
    acc = accuracy(model, enc)
    per = stratum_accuracy(model, enc)
    print(f"accuracy {acc:.6f} on {len(ds)} records")
    for s, a in per.items():
        print(f"  stratum {s}: {a:.6f}")
    if args.out:
        _dump({"accuracy": acc, "strata": per, "count": len(ds)}, args.out)
    return OK


# -- gradcheck ----------------------------------------------------------------------------

def cmd_gradcheck(args) -> int:
    scenario = args.scenario
    cfg = FuzzConfig(p=args.p, seed=args.seed)
    if args.rules:
        typed = load(Path(args.rules).read_text(encoding="utf-8"), scenarios.SCHEMAS[scenario])
        model = fuzzify(typed, args.rule or scenarios.RULE_NAME[scenario], cfg)
    else:
        model = compile_bundled(scenario, args.relaxation, cfg)
    if len(model.params) == 0:
        print("no trainable parameters; nothing to check")
        return OK
    rng = np.random.default_rng(args.seed)
    kind = "random" if scenario == "industry" else "recodex"
    ds = generate(kind, 64 if kind == "random" else 256, args.seed)
    recs = [ds.records[i] for i in rng.choice(len(ds), size=min(args.points, len(ds)), replace=False)]
    inputs = model.encoder.encode(recs)
    store = model.params.copy()
    store.values = store.values + rng.normal(0, 0.05, store.values.size)
    store.clamp()
    weights = rng.normal(size=len(recs))
    override = None
    if args.inject_fault:
        vals = forward(model.graph, inputs, store)
        override = backward(model.graph, vals, store, model.output, weights)
        override[0] += 1e-2 + abs(override[0])
    err = grad_check(model.graph, store, inputs, model.output, seed=weights, grad_override=override)
    print(f"max relative gradient error {err:.3e} over {len(store)} parameters and {len(recs)} points")
    return OK if err < args.tolerance else DIAGNOSTIC


# -- report -------------------------------------------------------------------------------

def cmd_report(args) -> int:
    cfg = ReportConfig(n=args.n, epochs=args.epochs, repeats=args.repeats, data_seed=args.data_seed,
                       datasets=tuple(args.datasets.split(",")), models=tuple(args.models.split(",")),
                       baseline=args.baseline, timing=args.timing)
    data = {}
    for path in args.data or []:
        ds = read_jsonl(path)
        data[ds.provenance] = ds
    progress = None if args.quiet else (lambda msg: print(msg, file=sys.stderr, flush=True))
    doc = report(cfg, data, progress)
    table = format_table(doc)
    if args.out_text:
        Path(args.out_text).write_text(table + "\n", encoding="utf-8")
    print(table, file=sys.stderr if args.out_json in (None, "-") else sys.stdout)
    _dump(doc, args.out_json)
    return OK


def cmd_parity(args) -> int:
    cfg = ParityConfig(n=args.n, workers=args.workers, baseline=args.baseline, epochs=args.epochs,
                       seed=args.seed, data_seed=args.data_seed)
    doc = parity(cfg)
    print(f"gated {doc['gated']['accuracy']:.4f} vs dense {doc['dense']['accuracy']:.4f} "
          f"(difference {doc['difference']:.4f})", file=sys.stderr)
    _dump(doc, args.out)
    return OK


# -- parser -------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rulefuzz", description="Train relaxed adaptation rules.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="parse and type-check a rules file")
    p.add_argument("rules")
    p.add_argument("--scenario", choices=("auto",) + tuple(scenarios.SCHEMAS), default="auto")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("gen-data", help="generate a labeled dataset")
    p.add_argument("--scenario", choices=tuple(scenarios.SCHEMAS), default="industry")
    p.add_argument("--kind", choices=("random", "combined", "recodex"), default="random")
    p.add_argument("--n", type=int, default=20000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=_pair, default=(2, 2), help="fast,slow worker counts")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--rules")
    p.add_argument("--rule", help="rule or predicate name inside --rules")
    p.add_argument("--relaxation", choices=scenarios.RELAXATIONS + ("relaxed",))
    p.add_argument("--baseline", metavar="DxW")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--p", type=float, default=10.0)
    p.add_argument("--epsilon", type=float, default=None, help="label smoothing")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--out-model")
    p.add_argument("--out-report", default="-")
    p.add_argument("--timing", action="store_true", help="include wall-clock seconds in the report")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="compare reverse-mode and finite-difference gradients")
    p.add_argument("--scenario", choices=tuple(scenarios.SCHEMAS), default="industry")
    p.add_argument("--rules")
    p.add_argument("--rule")
    p.add_argument("--relaxation", default="time-right")
    p.add_argument("--p", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--points", type=int, default=16)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("report", help="compare models across datasets and seeds")
    p.add_argument("--n", type=int, default=20000)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--datasets", default="random,combined")
    p.add_argument("--models", default="baseline,time-ab,time-right,all,strict")
    p.add_argument("--baseline", default="2x256")
    p.add_argument("--data", nargs="*", help="pre-generated dataset files (keyed by provenance)")
    p.add_argument("--out-json", default="-")
    p.add_argument("--out-text")
    p.add_argument("--timing", action="store_true")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("parity", help="gated vs plain dense job router")
    p.add_argument("--n", type=int, default=20480)
    p.add_argument("--workers", type=_pair, default=(2, 2))
    p.add_argument("--baseline", default="1x128")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_parity)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
    except UnknownQualifier as exc:
        print(f"error: {exc}", file=sys.stderr)
    except (CliError, GenerationError, DatasetFormatError, LabelMismatch, CompileError,
            RuleSyntaxError, RuleTypeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return RUNTIME


if __name__ == "__main__":
    sys.exit(main())

"""Command-line experiment driver.

Exit status: 0 success, 1 usage error, 2 data or validation error,
3 numeric failure (non-finite loss, failed gradient check).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
import time
from collections import Counter
from pathlib import Path

import numpy as np

from . import analysis, baselines, checkpoint, kernels
from .data import (
    DataError,
    SyntheticConfig,
    generate_synthetic,
    label_indices,
    load_jsonl,
    save_jsonl,
)
from .encoder import EncoderConfig
from .model import QDiffModel, TrainConfig, Variant, evaluate, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("qdiff")

_TRAIN_FIELDS = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
_ENCODER_FIELDS = {f.name: f.type for f in dataclasses.fields(EncoderConfig)}
_EXTRA_FIELDS = {"variant": "str", "attend_specials": "bool"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


# --------------------------------------------------------------------------
# config files


def _coerce(key, raw, kind):
    kind = kind if isinstance(kind, str) else getattr(kind, "__name__", str(kind))
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
    except ValueError:
        raise DataError(f"config key {key!r}: cannot parse {raw!r} as {kind}") from None
    return raw.strip()


def read_config(path):
    """Flat ``key = value`` file; ``#`` comments and blank lines ignored."""
    known = {**_TRAIN_FIELDS, **_ENCODER_FIELDS, **_EXTRA_FIELDS}
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in known:
                raise DataError(f"{path}:{lineno}: unknown config key {key!r}")
            out[key] = _coerce(key, value, known[key])
    return out


def write_config(values, path):
    lines = [f"{k} = {str(v).lower() if isinstance(v, bool) else v}" for k, v in sorted(values.items())]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _resolve_config(args):
    values = read_config(args.config) if getattr(args, "config", None) else {}
    for key in list(_TRAIN_FIELDS) + list(_ENCODER_FIELDS) + list(_EXTRA_FIELDS):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    values.setdefault("variant", "IA")
    values.setdefault("attend_specials", True)
    train_cfg = TrainConfig(**{k: v for k, v in values.items() if k in _TRAIN_FIELDS})
    enc_cfg = EncoderConfig(**{k: v for k, v in values.items() if k in _ENCODER_FIELDS})
    full = {**dataclasses.asdict(train_cfg), **enc_cfg.to_dict(),
            "variant": Variant.parse(values["variant"]).value,
            "attend_specials": bool(values["attend_specials"])}
    return full, train_cfg, enc_cfg


# --------------------------------------------------------------------------
# artifacts


def _dump_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _run_dir(path, snapshot):
    if path is None:
        return None
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    write_config(snapshot, path / "config.txt")
    return path


def _write_history(history, path):
    keys = []
    for row in history:
        keys.extend(k for k in row if k not in keys)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
        writer.writeheader()
        for row in history:
            writer.writerow({k: (f"{v:.8g}" if isinstance(v, float) else v) for k, v in row.items()})


def _reports(model, dataset):
    """Both tasks' MetricsReports on whichever labels ``dataset`` carries."""
    _, preds = evaluate(model, dataset)
    out = {}
    for task in ("difficulty", "bloom"):
        y = label_indices(dataset, task, require=False)
        keep = y >= 0
        if not keep.any():
            continue
        inv = model.labels(task)
        out[task] = analysis.classification_metrics(
            [inv[i] for i in y[keep]], [inv[i] for i in preds[task][keep]], inv
        ).to_dict()
    return out, preds


# --------------------------------------------------------------------------
# subcommands


def cmd_train(args):
    snapshot, train_cfg, enc_cfg = _resolve_config(args)
    train_set = load_jsonl(args.train)
    val_set = load_jsonl(args.val) if args.val else None
    run = _run_dir(args.out, snapshot)
    started = time.perf_counter()
    model = QDiffModel.create(Variant.parse(snapshot["variant"]), train_set, enc_cfg,
                              seed=train_cfg.seed, attend_specials=snapshot["attend_specials"])
    model, history = train(model, train_set, val_set, train_cfg)
    elapsed = time.perf_counter() - started
    eval_set = val_set if val_set is not None else train_set
    reports, _ = _reports(model, eval_set)
    metrics = {
        "variant": model.variant.value,
        "seed": train_cfg.seed,
        "evaluated_on": "val" if val_set is not None else "train",
        "n_train": len(train_set),
        "n_eval": len(eval_set),
        "initial_train_loss": history[0]["train_loss"],
        "final_train_loss": history[-1]["train_loss"],
        "reports": reports,
    }
    checkpoint.save(model, run / "model.ckpt")
    _dump_json(metrics, run / "metrics.json")
    _write_history(history, run / "history.csv")
    _dump_json({"train_seconds": round(elapsed, 3), "backend": kernels.BACKEND_NAME},
               run / "timing.json")
    diff = reports.get("difficulty", {}).get("macro", {}).get("f1")
    print(f"trained {model.variant.value}: loss {metrics['initial_train_loss']:.4f} -> "
          f"{metrics['final_train_loss']:.4f}"
          + (f", difficulty macro-F1 {diff:.4f}" if diff is not None else ""))
    return EXIT_OK


def cmd_eval(args):
    model = checkpoint.load(args.model)
    test = load_jsonl(args.test)
    reports, _ = _reports(model, test)
    metrics = {"variant": model.variant.value, "n_test": len(test), "reports": reports}
    if args.report:
        _dump_json(metrics, args.report)
    run = _run_dir(args.run_dir, {"model": args.model, "test": args.test})
    if run is not None:
        _dump_json(metrics, run / "metrics.json")
    for task, rep in reports.items():
        print(f"{task}: accuracy {rep['accuracy']:.4f} macro-F1 {rep['macro']['f1']:.4f} "
              f"weighted-F1 {rep['weighted']['f1']:.4f}")
    return EXIT_OK


def cmd_softlabel(args):
    from .softlabel import random_label, soft_label

    data = load_jsonl(args.data)
    if args.random_seed is not None:
        out = random_label(data, args.random_seed)
        source = {"random_seed": args.random_seed}
    else:
        if not args.model:
            raise UsageError("softlabel: --model is required unless --random-seed is given")
        out = soft_label(checkpoint.load(args.model), data, overwrite=args.overwrite,
                         with_probs=args.with_probs)
        source = {"model": args.model, "overwrite": args.overwrite}
    save_jsonl(out, args.out)
    counts = Counter(r.bloom for r in out)
    metrics = {"n": len(out), "bloom_counts": dict(sorted(counts.items())),
               "changed": sum(a.bloom != b.bloom for a, b in zip(data, out))}
    run = _run_dir(args.run_dir, {"data": args.data, "out": args.out, **source})
    if run is not None:
        _dump_json(metrics, run / "metrics.json")
    print(f"labelled {metrics['changed']} of {metrics['n']} records -> {args.out}")
    return EXIT_OK


def cmd_analyze(args):
    data = load_jsonl(args.data)
    table = analysis.contingency(data)
    chi2 = analysis.chi_squared(table)
    v = analysis.cramers_v(table)
    text = table.to_csv()
    if args.csv:
        Path(args.csv).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    print(f"n = {table.n}")
    print(f"chi_squared = {chi2:.6f}")
    print(f"cramers_v = {v:.6f}")
    run = _run_dir(args.run_dir, {"data": args.data})
    if run is not None:
        _dump_json({"n": table.n, "chi_squared": chi2, "cramers_v": v}, run / "metrics.json")
        (run / "contingency.csv").write_text(text, encoding="utf-8")
    return EXIT_OK


def _baseline_predictions(args, train_set, test):
    if args.method == "majority":
        counts = Counter(r.difficulty for r in train_set)
        top = min(counts, key=lambda d: (-counts[d], d))
        return [top] * len(test)
    if args.method == "rule":
        model = baselines.rule_fit(train_set)
        for i, rec in enumerate(test):
            if rec.bloom is None:
                raise DataError(f"{args.test}: record {i} has no bloom label for the rule baseline")
        return [baselines.rule_predict(model, r.bloom) for r in test]
    if args.method == "tfidf-bw":
        model = baselines.tfidf_bw_fit(train_set)
        return model.predict_many(baselines.record_text(r) for r in test)
    tfidf, clf = baselines.tfidf_margin_fit(train_set, args.epochs, args.lam, args.seed)
    return clf.predict(tfidf.transform_many(baselines.record_text(r) for r in test))


def cmd_baseline(args):
    train_set = load_jsonl(args.train)
    test = load_jsonl(args.test)
    for name, ds in (("train", train_set), ("test", test)):
        for i, rec in enumerate(ds):
            if rec.difficulty is None:
                raise DataError(f"{name} record {i}: missing difficulty label")
    preds = _baseline_predictions(args, train_set, test)
    labels = train_set.difficulty_labels
    report = analysis.classification_metrics([r.difficulty for r in test], preds, labels)
    metrics = {"method": args.method, "n_train": len(train_set), "n_test": len(test),
               "reports": {"difficulty": report.to_dict()}}
    if args.method == "tfidf-margin":
        metrics.update(epochs=args.epochs, lam=args.lam, seed=args.seed)
    if args.report:
        _dump_json(metrics, args.report)
    run = _run_dir(args.run_dir, {"method": args.method, "train": args.train, "test": args.test})
    if run is not None:
        _dump_json(metrics, run / "metrics.json")
    print(f"{args.method}: accuracy {report.accuracy:.4f} macro-F1 {report.macro['f1']:.4f} "
          f"weighted-F1 {report.weighted['f1']:.4f}")
    return EXIT_OK


def cmd_synth(args):
    cfg = SyntheticConfig(n_samples=args.n, assoc_strength=args.rho, cue_noise=args.noise,
                          seed=args.seed)
    data = generate_synthetic(cfg)
    save_jsonl(data, args.out)
    run = _run_dir(args.run_dir, {**dataclasses.asdict(cfg), "out": args.out})
    if run is not None:
        _dump_json({"n": len(data),
                    "difficulty_counts": dict(sorted(Counter(r.difficulty for r in data).items())),
                    "bloom_counts": dict(sorted(Counter(r.bloom for r in data).items()))},
                   run / "metrics.json")
    print(f"wrote {len(data)} records to {args.out}")
    return EXIT_OK


def cmd_gradcheck(args):
    from .gradcheck import TINY_CONFIG, TOLERANCE, run_gradcheck

    values = read_config(args.config) if args.config else {}
    enc_cfg = EncoderConfig(**{**TINY_CONFIG.to_dict(),
                               **{k: v for k, v in values.items() if k in _ENCODER_FIELDS}})
    variant = Variant.parse(args.variant or values.get("variant", "IA"))
    report = run_gradcheck(enc_cfg, variant, batch_size=args.batch_size, seed=args.seed,
                           eps=args.eps, n_samples=args.samples,
                           aux_weight=values.get("aux_weight", 1.0))
    worst = max(report.values())
    for name in sorted(report):
        print(f"{name:32s} {report[name]:.3e}")
    ok = worst < args.tolerance if args.tolerance is not None else worst < TOLERANCE
    print(f"max relative error {worst:.3e}: {'PASS' if ok else 'FAIL'}")
    run = _run_dir(args.run_dir, {**enc_cfg.to_dict(), "variant": variant.value,
                                  "seed": args.seed, "eps": args.eps})
    if run is not None:
        _dump_json({"max_relative_error": worst, "passed": ok, "per_tensor": report},
                   run / "metrics.json")
    return EXIT_OK if ok else EXIT_NUMERIC


# --------------------------------------------------------------------------
# parser


def build_parser():
    p = _Parser(prog="qdiff", description="Bloom-guided question difficulty experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    t = sub.add_parser("train", help="train a model and write a run directory")
    t.add_argument("--config", help="flat key=value config file")
    t.add_argument("--train", required=True)
    t.add_argument("--val")
    t.add_argument("--variant", help=", ".join(v.value for v in Variant))
    t.add_argument("--out", required=True, help="run directory")
    for name, kind in (("epochs", int), ("lr", float), ("batch_size", int),
                       ("aux_weight", float), ("seed", int), ("d_model", int),
                       ("n_layers", int), ("n_heads", int), ("d_ff", int), ("max_len", int),
                       ("vocab_size", int)):
        t.add_argument("--" + name.replace("_", "-"), dest=name, type=kind)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--model", required=True)
    e.add_argument("--test", required=True)
    e.add_argument("--report")
    e.add_argument("--run-dir")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("softlabel", help="fill Bloom labels from a model, or at random")
    s.add_argument("--model")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--overwrite", action="store_true")
    s.add_argument("--with-probs", action="store_true")
    s.add_argument("--random-seed", type=int)
    s.add_argument("--run-dir")
    s.set_defaults(func=cmd_softlabel)

    a = sub.add_parser("analyze", help="contingency table, chi-squared and Cramer's V")
    a.add_argument("--data", required=True)
    a.add_argument("--csv")
    a.add_argument("--run-dir")
    a.set_defaults(func=cmd_analyze)

    b = sub.add_parser("baseline", help="classical difficulty baselines")
    b.add_argument("--method", required=True, choices=("majority", "rule", "tfidf-bw", "tfidf-margin"))
    b.add_argument("--train", required=True)
    b.add_argument("--test", required=True)
    b.add_argument("--report")
    b.add_argument("--epochs", type=int, default=50)
    b.add_argument("--lam", type=float, default=1e-4)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--run-dir")
    b.set_defaults(func=cmd_baseline)

    y = sub.add_parser("synth", help="generate a synthetic dataset")
    y.add_argument("--n", type=int, default=2000)
    y.add_argument("--rho", type=float, default=0.9)
    y.add_argument("--noise", type=float, default=0.1)
    y.add_argument("--seed", type=int, default=0)
    y.add_argument("--out", required=True)
    y.add_argument("--run-dir")
    y.set_defaults(func=cmd_synth)

    g = sub.add_parser("gradcheck", help="finite-difference check on a tiny model")
    g.add_argument("--config")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--variant")
    g.add_argument("--eps", type=float, default=1e-3)
    g.add_argument("--samples", type=int, default=64)
    g.add_argument("--batch-size", type=int, default=4)
    g.add_argument("--tolerance", type=float)
    g.add_argument("--run-dir")
    g.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"qdiff: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FloatingPointError as exc:
        print(f"qdiff: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, checkpoint.CheckpointError, OSError, ValueError, KeyError) as exc:
        print(f"qdiff: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

"""Command-line surface: ingest, train, encode, query, evaluate, sweep.

Each command validates its inputs up front and fails with a single
``error: ...`` line on stderr and a nonzero exit code.  Training and
baseline encoding are seeded, so any command rerun with the same
arguments writes identical artifacts.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .hashnet import encode_all, load_features, load_model, save_model
from .labelspace import (
    DEFAULT_CONFIDENCE_THRESHOLD,
    LabelMatrix,
    ingest_detections,
    read_class_map,
)
from .metrics import MetricsReport, evaluate, format_table, report_records, write_records
from .retrieval import CodeStore, lsh_encode, pack_signs, search
from .trainer import SCHEDULES, TrainConfig, train

__all__ = ["main"]

_CONFIG_FIELDS = {
    "epochs": int,
    "batch_size": int,
    "lr": float,
    "lr_schedule": str,
    "alpha": float,
    "beta": float,
    "seed": int,
    "k": int,
    "hidden_dims": "hidden",
}


def _parse_hidden(text: str) -> tuple[int, ...]:
    text = text.strip()
    if text in ("", "-"):
        return ()
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError:
        raise ValueError(f"hidden_dims must be a comma-separated integer list, got {text!r}") from None


def _parse_int_list(text: str, what: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise ValueError(f"{what} must be a comma-separated integer list, got {text!r}") from None


def _parse_float_list(text: str, what: str) -> list[float]:
    try:
        values = [float(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise ValueError(f"{what} must be a comma-separated number list, got {text!r}") from None
    if not values:
        raise ValueError(f"{what} must name at least one value")
    return values


def read_config_file(path: str) -> dict[str, str]:
    """Flat key=value lines; blank lines and # comments are ignored."""
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _CONFIG_FIELDS:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = value
    return values


def _build_train_config(args) -> TrainConfig:
    merged = {f.name: f.default for f in dataclasses.fields(TrainConfig)}
    if args.config:
        for key, raw in read_config_file(args.config).items():
            kind = _CONFIG_FIELDS[key]
            if kind == "hidden":
                merged[key] = _parse_hidden(raw)
            else:
                try:
                    merged[key] = kind(raw)
                except ValueError:
                    raise ValueError(f"config key {key!r} has a malformed value {raw!r}") from None
    for key in _CONFIG_FIELDS:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            merged[key] = _parse_hidden(flag_value) if key == "hidden_dims" else flag_value
    return TrainConfig(**merged)


def _add_train_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="flat key=value config file; flags override it")
    sub.add_argument("--epochs", type=int, default=None)
    sub.add_argument("--batch-size", type=int, default=None)
    sub.add_argument("--lr", type=float, default=None)
    sub.add_argument("--lr-schedule", choices=SCHEDULES, default=None)
    sub.add_argument("--alpha", type=float, default=None)
    sub.add_argument("--beta", type=float, default=None)
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--k", type=int, default=None, help="code length in bits")
    sub.add_argument("--hidden-dims", default=None,
                     help="comma-separated feature layer widths, '-' for none")


def _write_log(log: list[dict], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in log:
            fh.write(json.dumps(rec) + "\n")


def cmd_ingest(args) -> int:
    class_map = read_class_map(args.class_map)
    labels = ingest_detections(args.detections, args.threshold, class_map)
    labels.save(args.out)
    flagged = labels.zero_rows()
    if flagged.size:
        sample = ", ".join(labels.ids[i] for i in flagged[:5])
        more = "" if flagged.size <= 5 else f" (+{flagged.size - 5} more)"
        print(f"warning: {flagged.size} item(s) have all-zero label vectors: {sample}{more}",
              file=sys.stderr)
    print(f"wrote {labels.n} label rows over {labels.c} classes to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _build_train_config(args)
    features = load_features(args.features)
    labels = LabelMatrix.load(args.labels)
    result = train(features, labels, cfg)
    save_model(result.model, args.checkpoint)
    result.codes.save(args.codes)
    _write_log(result.log, args.log)
    if not args.no_plots and result.log:
        from .figures import plot_training_log
        plot_training_log(result.log, str(Path(args.log).with_suffix(".png")))
    last = result.log[-1]["total_loss"] if result.log else float("nan")
    print(f"trained k={cfg.k} on {features.n} items for {cfg.epochs} epochs "
          f"({len(result.log)} iterations, final batch loss {last:.6g})")
    return 0


def cmd_encode(args) -> int:
    model = load_model(args.checkpoint)
    features = load_features(args.features)
    if features.n == 0:
        raise ValueError(f"{args.features}: empty feature file")
    codes = CodeStore.from_signs(features.ids, encode_all(model, features.x))
    codes.save(args.out)
    print(f"encoded {codes.n} items at k={codes.k} to {args.out}")
    return 0


def cmd_query(args) -> int:
    store = CodeStore.load(args.codes)
    if (args.id is None) == (args.code is None):
        raise ValueError("give exactly one of --id or --code")
    if args.exclude_self and args.id is None:
        raise ValueError("--exclude-self needs --id")
    if args.id is not None:
        query = store.row(args.id)
    else:
        if len(args.code) != store.k or set(args.code) - {"0", "1"}:
            raise ValueError(f"--code must be a {store.k}-character string of 0/1")
        signs = np.array([[1 if ch == "1" else -1 for ch in args.code]], dtype=np.int8)
        query = pack_signs(signs)[0]
    available = store.n - (1 if args.exclude_self else 0)
    top = args.top
    if top > available:
        print(f"warning: top {top} exceeds the {available} rankable items, truncating",
              file=sys.stderr)
        top = available
    ranked = search(store, query, top, exclude_id=args.id if args.exclude_self else None,
                    query_id=args.id)
    for rank, (item_id, dist) in enumerate(ranked.entries, start=1):
        print(f"{rank} {item_id} {dist}")
    return 0


def _split_store(store: CodeStore, test_size: int, split_seed: int) -> tuple[CodeStore, CodeStore]:
    if not 1 <= test_size < store.n:
        raise ValueError(f"test size must lie in [1, {store.n - 1}], got {test_size}")
    order = np.random.default_rng(split_seed).permutation(store.n)
    query_ids = [store.ids[i] for i in order[:test_size]]
    corpus_ids = [store.ids[i] for i in order[test_size:]]
    return store.subset(query_ids), store.subset(corpus_ids)


def cmd_evaluate(args) -> int:
    labels = LabelMatrix.load(args.labels)
    cutoffs = _parse_int_list(args.cutoffs, "cutoffs")
    two_store = args.query_codes is not None or args.corpus_codes is not None
    if two_store and (args.query_codes is None or args.corpus_codes is None):
        raise ValueError("--query-codes and --corpus-codes must be given together")
    if two_store == (args.codes is not None):
        raise ValueError("give either --codes or the --query-codes/--corpus-codes pair")
    if two_store and args.test_size is not None:
        raise ValueError("--test-size only applies to a single --codes store")
    if two_store:
        query_store = CodeStore.load(args.query_codes)
        corpus_store = CodeStore.load(args.corpus_codes)
    else:
        store = CodeStore.load(args.codes)
        if args.test_size is not None:
            query_store, corpus_store = _split_store(store, args.test_size, args.split_seed)
        else:
            query_store = corpus_store = store
    reports: dict[str, MetricsReport] = {
        "trained": evaluate(query_store, corpus_store, labels, cutoffs,
                            label_source=args.label_source)
    }
    if args.lsh_features:
        feats = load_features(args.lsh_features)
        lsh_store = lsh_encode(feats, corpus_store.k, args.seed)
        lsh_queries = lsh_store.subset(query_store.ids)
        lsh_corpus = lsh_store.subset(corpus_store.ids)
        reports["lsh"] = evaluate(lsh_queries, lsh_corpus, labels, cutoffs,
                                  label_source=args.label_source)
    write_records(f"{args.report}.jsonl", reports)
    table = format_table(reports)
    with open(f"{args.report}.txt", "w", encoding="utf-8") as fh:
        fh.write(table)
    if not args.no_plots:
        from .figures import plot_metric_curves
        plot_metric_curves(reports, f"{args.report}_metrics.png")
    print(table, end="")
    return 0


def cmd_sweep(args) -> int:
    features = load_features(args.features)
    labels = LabelMatrix.load(args.labels)
    cutoffs = _parse_int_list(args.cutoffs, "cutoffs")
    values = _parse_float_list(args.values, "--values")
    base = _build_train_config(args)
    results: dict[float, MetricsReport] = {}
    reports: dict[str, MetricsReport] = {}
    for value in values:
        cfg = dataclasses.replace(base, **{args.param: value})
        result = train(features, labels, cfg)
        report = evaluate(result.codes, result.codes, labels, cutoffs,
                          label_source=args.label_source)
        results[value] = report
        reports[f"{args.param}={value:g}"] = report
    rows = []
    for value in values:
        for row in report_records({f"{args.param}={value:g}": results[value]}):
            row["param"] = args.param
            row["param_value"] = value
            rows.append(row)
    with open(f"{args.out}.jsonl", "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    table = format_table(reports)
    with open(f"{args.out}.txt", "w", encoding="utf-8") as fh:
        fh.write(table)
    if not args.no_plots:
        from .figures import plot_sweep_curves
        plot_sweep_curves(args.param, results, f"{args.out}_sweep.png")
    print(table, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pseudohash",
        description="Train similarity-preserving binary codes from detector pseudo-labels, "
                    "then search and score them.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    sub = commands.add_parser("ingest", help="binarize detection records into label vectors")
    sub.add_argument("--detections", required=True, help="line-delimited JSON detection records")
    sub.add_argument("--class-map", required=True, help="class names, one per line")
    sub.add_argument("--threshold", type=float, default=DEFAULT_CONFIDENCE_THRESHOLD,
                     help="confidence threshold (default %(default)s)")
    sub.add_argument("--out", required=True, help="label matrix output path")
    sub.set_defaults(func=cmd_ingest)

    sub = commands.add_parser("train", help="train codes from features and labels")
    sub.add_argument("--features", required=True)
    sub.add_argument("--labels", required=True)
    sub.add_argument("--checkpoint", required=True, help="model output path")
    sub.add_argument("--codes", required=True, help="codes output path")
    sub.add_argument("--log", required=True, help="training log output path (JSON lines)")
    sub.add_argument("--no-plots", action="store_true", help="skip the loss-curve figure")
    _add_train_flags(sub)
    sub.set_defaults(func=cmd_train)

    sub = commands.add_parser("encode", help="encode features with a trained checkpoint")
    sub.add_argument("--checkpoint", required=True)
    sub.add_argument("--features", required=True)
    sub.add_argument("--out", required=True, help="codes output path")
    sub.set_defaults(func=cmd_encode)

    sub = commands.add_parser("query", help="rank stored items against one query code")
    sub.add_argument("--codes", required=True)
    sub.add_argument("--id", help="query by stored item id")
    sub.add_argument("--code", help="query by a 0/1 code string (1 means +1)")
    sub.add_argument("--top", type=int, default=10)
    sub.add_argument("--exclude-self", action="store_true",
                     help="drop the queried id from its own ranking")
    sub.set_defaults(func=cmd_query)

    sub = commands.add_parser("evaluate", help="score codes against evaluation labels")
    sub.add_argument("--codes", help="single store: every item queries all the others")
    sub.add_argument("--query-codes", help="separate query store")
    sub.add_argument("--corpus-codes", help="separate corpus store")
    sub.add_argument("--labels", required=True, help="evaluation label matrix")
    sub.add_argument("--cutoffs", default="10,100", help="comma-separated ranks (default %(default)s)")
    sub.add_argument("--label-source", choices=("pseudo", "ground-truth"), default="pseudo",
                     help="which kind of labels the report is scored against")
    sub.add_argument("--test-size", type=int, default=None,
                     help="with --codes: split off this many items as queries")
    sub.add_argument("--split-seed", type=int, default=0)
    sub.add_argument("--lsh-features", default=None,
                     help="feature file for a side-by-side random-hyperplane baseline")
    sub.add_argument("--seed", type=int, default=0, help="baseline seed")
    sub.add_argument("--report", required=True,
                     help="output stem: writes <stem>.jsonl, <stem>.txt, <stem>_metrics.png")
    sub.add_argument("--no-plots", action="store_true", help="skip the metrics figure")
    sub.set_defaults(func=cmd_evaluate)

    sub = commands.add_parser("sweep", help="retrain across one loss weight and score each run")
    sub.add_argument("--param", choices=("alpha", "beta"), required=True)
    sub.add_argument("--values", required=True, help="comma-separated parameter values")
    sub.add_argument("--features", required=True)
    sub.add_argument("--labels", required=True)
    sub.add_argument("--cutoffs", default="10,100")
    sub.add_argument("--label-source", choices=("pseudo", "ground-truth"), default="pseudo")
    sub.add_argument("--out", required=True,
                     help="output stem: writes <stem>.jsonl, <stem>.txt, <stem>_sweep.png")
    sub.add_argument("--no-plots", action="store_true", help="skip the sweep figure")
    _add_train_flags(sub)
    sub.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

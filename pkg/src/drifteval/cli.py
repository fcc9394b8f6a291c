"""Command-line entry point.

Every subcommand resolves its configuration fully (plan file, flags,
defaults), writes the artifacts for its stage, and drops a manifest.json
echoing the resolved settings so any run can be reproduced from its output
directory alone.  Exit codes: 0 success, 1 validation problem (bad flags,
missing or malformed inputs), 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .adapter import AdapterError, ExternalModelSpec
from .classifier import ClassifierConfig, preprocess, train
from .diagnostics import (
    FileProvider,
    HashedProjectionProvider,
    diagnose_corpora,
    write_corpus_summary_csv,
    write_similarity_csv,
)
from .experiment import (
    ExperimentError,
    run_drift,
    run_size_ablation,
    run_window_ablation,
    write_cells_csv,
    write_summary_csv,
)
from .ingest import (
    IngestError,
    format_timestamp,
    parse_timestamp,
    prepare_corpus,
    read_annotations,
    read_corpus,
    write_corpus,
    write_rejects,
)
from .sentiment import (
    compare_legacy_updated,
    read_stream,
    write_sentiment_csv,
)
from .synth import PRESETS, generate, read_scenario, write_scenario
from .timeline import (
    ExperimentPlan,
    build_bins,
    build_windows,
    read_plan,
    sample_splits,
    write_plan,
    write_split_manifest,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage; the contract here wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_VALIDATION)


class ValidationError(ValueError):
    pass


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"{what} not found: {path}")
    return p


def _plan_flags(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("plan")
    g.add_argument("--plan", help="plan file (key = value); flags override it")
    g.add_argument("--bin-days", type=int)
    g.add_argument("--window-bins", type=int)
    g.add_argument("--n-train-per-bin", type=int)
    g.add_argument("--n-eval-per-bin", type=int)
    g.add_argument("--repeats", type=int)
    g.add_argument("--master-seed", type=int)
    g.add_argument("--origin", help='ISO timestamp or "auto"')
    g.add_argument("--downsample", action="store_true", default=None)


def _classifier_flags(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("built-in classifier")
    g.add_argument("--dim", type=int)
    g.add_argument("--epochs", type=int)
    g.add_argument("--lr0", type=float)
    g.add_argument("--word-ngrams", type=int)
    g.add_argument("--bucket-count", type=int)
    g.add_argument("--min-token-count", type=int)
    e = parser.add_argument_group("external model (replaces the built-in)")
    e.add_argument("--external-train", help="train command template")
    e.add_argument("--external-predict", help="predict command template")
    e.add_argument("--external-root", help="root directory for model dirs")
    e.add_argument("--external-timeout", type=int, default=600)


def _resolve_plan(args) -> ExperimentPlan:
    plan = ExperimentPlan()
    if args.plan:
        _require_file(args.plan, "plan file")
        plan = read_plan(args.plan)
    updates = {}
    for flag, field_name in (
        ("bin_days", "bin_days"),
        ("window_bins", "window_bins"),
        ("n_train_per_bin", "n_train_per_bin"),
        ("n_eval_per_bin", "n_eval_per_bin"),
        ("repeats", "repeats"),
        ("master_seed", "master_seed"),
    ):
        value = getattr(args, flag)
        if value is not None:
            updates[field_name] = value
    if args.origin is not None:
        updates["origin"] = None if args.origin == "auto" else parse_timestamp(args.origin)
    if args.downsample is not None:
        updates["downsample"] = args.downsample
    return replace(plan, **updates)


def _resolve_classifier(args, out_dir: Path):
    if args.external_train or args.external_predict:
        if not (args.external_train and args.external_predict):
            raise ValidationError(
                "--external-train and --external-predict must be given together"
            )
        root = args.external_root or str(out_dir / "external-models")
        return ExternalModelSpec(
            train_command=args.external_train,
            predict_command=args.external_predict,
            model_dir=root,
            timeout_seconds=args.external_timeout,
        )
    config = ClassifierConfig()
    updates = {
        name: getattr(args, name)
        for name in (
            "dim",
            "epochs",
            "lr0",
            "word_ngrams",
            "bucket_count",
            "min_token_count",
        )
        if getattr(args, name) is not None
    }
    return replace(config, **updates)


def _plan_manifest(plan: ExperimentPlan) -> dict:
    return {
        "bin_days": plan.bin_days,
        "window_bins": plan.window_bins,
        "n_train_per_bin": plan.n_train_per_bin,
        "n_eval_per_bin": plan.n_eval_per_bin,
        "repeats": plan.repeats,
        "master_seed": plan.master_seed,
        "origin": "auto" if plan.origin is None else format_timestamp(plan.origin),
        "downsample": plan.downsample,
    }


def _classifier_manifest(classifier) -> dict:
    if isinstance(classifier, ExternalModelSpec):
        return {
            "kind": "external",
            "train_command": classifier.train_command,
            "predict_command": classifier.predict_command,
            "model_dir": classifier.model_dir,
            "timeout_seconds": classifier.timeout_seconds,
        }
    return {
        "kind": "builtin",
        "dim": classifier.dim,
        "epochs": classifier.epochs,
        "lr0": classifier.lr0,
        "word_ngrams": classifier.word_ngrams,
        "bucket_count": classifier.bucket_count,
        "min_token_count": classifier.min_token_count,
    }


def _write_manifest(out_dir: Path, payload: dict) -> None:
    payload = {"tool_version": __version__, **payload}
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


# --- subcommand implementations ---------------------------------------------


def _cmd_ingest(args) -> int:
    annotations = _require_file(args.annotations, "annotations file")
    out_dir = Path(args.out_dir)
    parsed = read_annotations(annotations)
    corpus, stats = prepare_corpus(parsed.records)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_corpus(corpus, out_dir / "resolved.jsonl")
    write_rejects(parsed.rejects, out_dir / "rejects.csv")
    _write_manifest(
        out_dir,
        {
            "subcommand": "ingest",
            "annotations": str(annotations),
            "n_lines_rejected": len(parsed.rejects),
            "n_items": stats.n_items,
            "n_short_text": stats.short_text,
            "n_duplicate_text": stats.duplicate_text,
            "n_few_votes": stats.few_votes,
            "n_low_agreement": stats.low_agreement,
            "n_resolved": stats.resolved,
        },
    )
    print(
        f"resolved {stats.resolved} of {stats.n_items} items "
        f"({stats.short_text} short, {stats.duplicate_text} duplicate, "
        f"{stats.few_votes} under-voted, {stats.low_agreement} low agreement; "
        f"{len(parsed.rejects)} lines rejected)"
    )
    return EXIT_OK


def _cmd_bins(args) -> int:
    corpus_path = _require_file(args.corpus, "corpus file")
    corpus = read_corpus(corpus_path)
    plan = _resolve_plan(args)
    bins = build_bins(corpus, plan)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "bins.csv", "w", encoding="utf-8", newline="") as f:
        import csv as _csv

        writer = _csv.writer(f)
        writer.writerow(["bin", "start", "end", "n_examples"])
        for b in bins:
            writer.writerow(
                [b.index, format_timestamp(b.start), format_timestamp(b.end), len(b)]
            )
    splits = [
        sample_splits(b, plan, args.manifest_repeat)
        for b in bins
        if len(b) >= plan.n_train_per_bin + plan.n_eval_per_bin or plan.downsample
    ]
    write_split_manifest(splits, out_dir / "splits.csv")
    write_plan(plan, out_dir / "plan.cfg")
    _write_manifest(
        out_dir,
        {
            "subcommand": "bins",
            "corpus": str(corpus_path),
            "plan": _plan_manifest(plan),
            "manifest_repeat": args.manifest_repeat,
            "n_bins": len(bins),
        },
    )
    print(f"{len(bins)} bins of {plan.bin_days} days")
    return EXIT_OK


def _drift_like(args, runner, extra_manifest: dict) -> int:
    corpus_path = _require_file(args.corpus, "corpus file")
    corpus = read_corpus(corpus_path)
    plan = _resolve_plan(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    classifier = _resolve_classifier(args, out_dir)
    results = runner(plan, corpus, classifier, out_dir)
    _write_manifest(
        out_dir,
        {
            "plan": _plan_manifest(plan),
            "classifier": _classifier_manifest(classifier),
            "corpus": str(corpus_path),
            **extra_manifest,
        },
    )
    return EXIT_OK


def _cmd_drift(args) -> int:
    def runner(plan, corpus, classifier, out_dir):
        store = str(out_dir / "cells.store.jsonl") if args.store else None
        results = run_drift(
            plan, corpus, classifier, workers=args.workers, store_path=store
        )
        write_cells_csv(results, out_dir / "cells.csv")
        write_summary_csv(results, out_dir / "summary.csv")
        print(
            f"{len(results.windows)} windows x {plan.repeats} repeats: "
            f"{len(results.cells)} cells"
        )
        return results

    return _drift_like(
        args,
        runner,
        {"subcommand": "drift", "workers": args.workers, "store": bool(args.store)},
    )


def _parse_int_list(raw: str, what: str) -> list[int]:
    try:
        values = [int(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise ValidationError(f"{what} must be a comma-separated integer list") from None
    if not values:
        raise ValidationError(f"{what} is empty")
    return values


def _cmd_ablate_size(args) -> int:
    sizes = _parse_int_list(args.sizes, "--sizes")

    def runner(plan, corpus, classifier, out_dir):
        by_size = run_size_ablation(
            plan, corpus, classifier, sizes, workers=args.workers
        )
        for size, results in by_size.items():
            sub = out_dir / f"size-{size}"
            sub.mkdir(parents=True, exist_ok=True)
            write_cells_csv(results, sub / "cells.csv")
            write_summary_csv(results, sub / "summary.csv")
        print(f"sizes {sizes}: done")
        return by_size

    return _drift_like(
        args, runner, {"subcommand": "ablate-size", "sizes": sizes, "workers": args.workers}
    )


def _cmd_ablate_window(args) -> int:
    lengths = _parse_int_list(args.window_days, "--window-days")

    def runner(plan, corpus, classifier, out_dir):
        by_length = run_window_ablation(
            plan,
            corpus,
            classifier,
            lengths,
            total_train=args.total_train,
            workers=args.workers,
        )
        for length, results in by_length.items():
            sub = out_dir / f"window-{length}d"
            sub.mkdir(parents=True, exist_ok=True)
            write_cells_csv(results, sub / "cells.csv")
            write_summary_csv(results, sub / "summary.csv")
        print(f"window lengths {lengths}: done")
        return by_length

    return _drift_like(
        args,
        runner,
        {
            "subcommand": "ablate-window",
            "window_days": lengths,
            "total_train": args.total_train,
            "workers": args.workers,
        },
    )


def _agreement_tables(annotations_path, bins):
    """Per-bin Fleiss tables from the raw votes: items with >= 3 votes,
    first three votes per item in (timestamp, annotator) order."""
    import numpy as np

    parsed = read_annotations(annotations_path)
    votes_by_item: dict[str, list] = {}
    for rec in parsed.records:
        votes_by_item.setdefault(rec.item_id, []).append(rec)
    tables = {}
    for b in bins:
        rows = []
        for item_id in b.example_ids:
            votes = votes_by_item.get(item_id, [])
            if len(votes) < 3:
                continue
            votes = sorted(votes, key=lambda r: (r.created_at, r.annotator_id))[:3]
            counts = [0, 0, 0]
            for rec in votes:
                counts[rec.vote.index] += 1
            rows.append(counts)
        if rows:
            tables[f"bin{b.index:02d}"] = np.asarray(rows)
    return tables


def _cmd_diagnose(args) -> int:
    corpus_path = _require_file(args.corpus, "corpus file")
    corpus = read_corpus(corpus_path)
    plan = _resolve_plan(args)
    bins = build_bins(corpus, plan)
    by_id = {ex.item_id: ex for ex in corpus}
    named = [
        (f"bin{b.index:02d}", [by_id[i] for i in b.example_ids]) for b in bins
    ]
    if args.embeddings_file:
        provider = FileProvider(_require_file(args.embeddings_file, "embeddings file"))
    else:
        provider = HashedProjectionProvider(dim=args.embed_dim)
    tables = None
    if args.annotations:
        tables = _agreement_tables(
            _require_file(args.annotations, "annotations file"), bins
        )
    report = diagnose_corpora(named, provider=provider, agreement_tables=tables)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_corpus_summary_csv(report, out_dir / "corpus_summary.csv")
    write_similarity_csv(report, out_dir / "similarity_raw.csv", which="raw")
    write_similarity_csv(report, out_dir / "similarity_display.csv", which="display")
    _write_manifest(
        out_dir,
        {
            "subcommand": "diagnose",
            "corpus": str(corpus_path),
            "plan": _plan_manifest(plan),
            "provider": report.provider,
            "annotations": args.annotations,
            "n_corpora": len(named),
        },
    )
    print(f"diagnosed {len(named)} bins with provider {report.provider}")
    return EXIT_OK


def _cmd_sentiment(args) -> int:
    corpus_path = _require_file(args.corpus, "corpus file")
    corpus = read_corpus(corpus_path)
    plan = _resolve_plan(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    classifier = _resolve_classifier(args, out_dir)
    if isinstance(classifier, ExternalModelSpec):
        raise ValidationError("the sentiment pipeline drives built-in models only")

    bins = build_bins(corpus, plan)
    windows = build_windows(bins, plan)
    by_id = {ex.item_id: ex for ex in corpus}
    tokens_by_id = {ex.item_id: preprocess(ex.text) for ex in corpus}

    from .experiment import model_seed

    timeline_models = []
    for w in windows:
        train_ids = []
        for b in w.bin_indices:
            train_ids.extend(sample_splits(bins[b], plan, 0).train_ids)
        config = replace(classifier, seed=model_seed(plan, 0, w.window_id))
        examples = [(tokens_by_id[i], by_id[i].label) for i in train_ids]
        timeline_models.append((w.train_end, train(examples, config)))
    legacy_model = timeline_models[0][1]

    if args.stream:
        stream = read_stream(_require_file(args.stream, "stream file"))
    else:
        stream = [(ex.created_at, ex.text) for ex in corpus]
    first_end = timeline_models[0][0]
    n_before = sum(1 for ts, _ in stream if ts < first_end)
    stream = [(ts, text) for ts, text in stream if ts >= first_end]
    if not stream:
        raise ValidationError("no stream items at or after the first train_end")

    legacy, updated = compare_legacy_updated(stream, legacy_model, timeline_models)
    write_sentiment_csv(legacy, updated, out_dir / "sentiment.csv")
    _write_manifest(
        out_dir,
        {
            "subcommand": "sentiment",
            "corpus": str(corpus_path),
            "plan": _plan_manifest(plan),
            "classifier": _classifier_manifest(classifier),
            "stream": args.stream,
            "n_models": len(timeline_models),
            "n_stream_items": len(stream),
            "n_stream_items_before_first_model": n_before,
        },
    )
    print(
        f"{len(timeline_models)} models, {len(stream)} stream items, "
        f"{len(legacy)} legacy weeks / {len(updated)} updated weeks"
    )
    return EXIT_OK


def _cmd_synth(args) -> int:
    if bool(args.preset) == bool(args.scenario):
        raise ValidationError("give exactly one of --preset or --scenario")
    if args.preset:
        if args.preset not in PRESETS:
            known = ", ".join(sorted(PRESETS))
            raise ValidationError(f"unknown preset {args.preset!r} (known: {known})")
        kwargs = {}
        if args.n_items is not None:
            kwargs["n_items"] = args.n_items
        if args.seed is not None:
            kwargs["seed"] = args.seed
        if args.span_days is not None:
            kwargs["time_span_days"] = args.span_days
        scenario = PRESETS[args.preset](**kwargs)
    else:
        scenario = read_scenario(_require_file(args.scenario, "scenario file"))
        if args.n_items is not None or args.seed is not None or args.span_days is not None:
            updates = {}
            if args.n_items is not None:
                updates["n_items"] = args.n_items
            if args.seed is not None:
                updates["seed"] = args.seed
            if args.span_days is not None:
                updates["time_span_days"] = args.span_days
            scenario = replace(scenario, **updates)
    records = generate(scenario)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    from .ingest import write_annotations

    write_annotations(records, out_dir / "annotations.jsonl")
    write_scenario(scenario, out_dir / "scenario.json")
    _write_manifest(
        out_dir,
        {
            "subcommand": "synth",
            "preset": args.preset,
            "scenario_file": args.scenario,
            "n_items": scenario.n_items,
            "n_records": len(records),
            "seed": scenario.seed,
        },
    )
    print(f"{len(records)} annotation records for {scenario.n_items} items")
    return EXIT_OK


# --- parser and dispatch ----------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="drifteval",
        description="concept-drift evaluation for time-stamped text classification",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="parse, anonymize, filter, majority-resolve")
    p.add_argument("--annotations", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("bins", help="bin the corpus and export manifests")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--manifest-repeat", type=int, default=0)
    _plan_flags(p)
    p.set_defaults(func=_cmd_bins)

    p = sub.add_parser("drift", help="run the sliding-window drift protocol")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--store", action="store_true", help="persist cells for resuming")
    _plan_flags(p)
    _classifier_flags(p)
    p.set_defaults(func=_cmd_drift)

    p = sub.add_parser("ablate-size", help="drift runs over train-set sizes")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--sizes", required=True, help="comma-separated totals, e.g. 1600,800,400")
    p.add_argument("--workers", type=int, default=1)
    _plan_flags(p)
    _classifier_flags(p)
    p.set_defaults(func=_cmd_ablate_size)

    p = sub.add_parser("ablate-window", help="drift runs over window lengths")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument(
        "--window-days", required=True, help="comma-separated day lengths, e.g. 180,270,360"
    )
    p.add_argument("--total-train", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    _plan_flags(p)
    _classifier_flags(p)
    p.set_defaults(func=_cmd_ablate_window)

    p = sub.add_parser("diagnose", help="per-bin label, agreement and embedding reports")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--annotations", help="raw votes for per-bin agreement")
    p.add_argument("--embed-dim", type=int, default=256)
    p.add_argument("--embeddings-file", help="precomputed id->vector table")
    _plan_flags(p)
    p.set_defaults(func=_cmd_diagnose)

    p = sub.add_parser("sentiment", help="legacy vs retrained weekly sentiment index")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--stream", help="timestamp<TAB>text stream (default: the corpus)")
    _plan_flags(p)
    _classifier_flags(p)
    p.set_defaults(func=_cmd_sentiment)

    p = sub.add_parser("synth", help="generate a synthetic annotated corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--preset", help="|".join(sorted(PRESETS)))
    p.add_argument("--scenario", help="scenario JSON file")
    p.add_argument("--n-items", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--span-days", type=int)
    p.set_defaults(func=_cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValidationError, IngestError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ExperimentError, AdapterError, OSError, FloatingPointError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()

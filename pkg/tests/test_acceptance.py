"""Release gate: synthetic-control checks with pinned tolerances.

One test per gate item, so the verbose pytest report reads as the
go/no-go list.  These run the real protocol end to end on the bundled
scenario presets and are slower than the unit tests (a few minutes,
dominated by the drift controls).
"""

import time
from dataclasses import replace

import numpy as np
import pytest

from drifteval.adapter import ExternalModelSpec
from drifteval.classifier import (
    ClassifierConfig,
    Model,
    loss_and_gradient,
    predict_tokens,
    touched_input_rows,
    train,
)
from drifteval.cli import main
from drifteval.diagnostics import (
    HashedProjectionProvider,
    corpus_variability,
    diagnose_corpora,
)
from drifteval.experiment import model_seed, run_drift
from drifteval.ingest import prepare_corpus
from drifteval.labels import Label
from drifteval.metrics import fleiss_kappa, score
from drifteval.sentiment import compare_legacy_updated, week_start
from drifteval.synth import (
    generate,
    negative_shift_scenario,
    static_scenario,
    swap_scenario,
)
from drifteval.timeline import ExperimentPlan, build_bins, build_windows, sample_splits

import sys

PY = sys.executable
REFERENCE_CONFIG = ClassifierConfig()  # dim 10, 500 epochs, lr 0.01
CONTROL_PLAN = ExperimentPlan(repeats=10)

STUB_CONFIG = ClassifierConfig(dim=4, epochs=8, lr0=0.05)
STUB_TRAIN = (
    f"{PY} -m drifteval.stub_model train --train-file {{train_file}} "
    "--model-dir {model_dir} --seed {seed} --dim 4 --epochs 8 --lr0 0.05"
)
STUB_PREDICT = (
    f"{PY} -m drifteval.stub_model predict --model-dir {{model_dir}} "
    "--input-file {input_file} --output-file {output_file}"
)


def find_row(results, window_id, eval_bin, class_name, metric):
    for r in results.summaries:
        if (r.window_id, r.eval_bin, r.class_name, r.metric) == (
            window_id,
            eval_bin,
            class_name,
            metric,
        ):
            return r
    raise AssertionError(f"missing row {window_id}/{eval_bin}/{class_name}/{metric}")


# --- shared corpora and runs ------------------------------------------------


@pytest.fixture(scope="module")
def swap_corpus():
    corpus, _ = prepare_corpus(generate(swap_scenario()))
    return corpus


@pytest.fixture(scope="module")
def swap_bins(swap_corpus):
    bins = build_bins(swap_corpus, ExperimentPlan())
    assert len(bins) == 13
    return bins


@pytest.fixture(scope="module")
def geometry_run(swap_corpus):
    # the geometry checks are structural, so a one-epoch model keeps the
    # 50-repeat grid cheap
    cheap = ClassifierConfig(dim=4, epochs=1)
    return run_drift(ExperimentPlan(), swap_corpus, cheap, workers=2)


@pytest.fixture(scope="module")
def positive_control(swap_corpus):
    start = time.perf_counter()
    results = run_drift(CONTROL_PLAN, swap_corpus, REFERENCE_CONFIG, workers=2)
    return results, time.perf_counter() - start


@pytest.fixture(scope="module")
def static_control():
    corpus, _ = prepare_corpus(generate(static_scenario()))
    return run_drift(CONTROL_PLAN, corpus, REFERENCE_CONFIG, workers=2)


# --- gate items -------------------------------------------------------------


def test_gradient_matches_central_finite_differences():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    h = 1e-5
    worst = 0.0
    for _ in range(20):
        dim = int(rng.integers(2, 6))
        vocab_size = int(rng.integers(3, 8))
        vocab = {f"t{k}": k for k in range(vocab_size)}
        model = Model(
            vocabulary=vocab,
            input_matrix=rng.normal(0, 0.5, size=(vocab_size, dim)),
            output_matrix=rng.normal(0, 0.5, size=(3, dim)),
            config=ClassifierConfig(dim=dim),
        )
        tokens = [f"t{rng.integers(vocab_size)}" for _ in range(rng.integers(1, 6))]
        example = (tokens, list(Label)[rng.integers(3)])
        _, analytic = loss_and_gradient(model, example)

        rows = touched_input_rows(model, tokens)
        flat_len = 3 * dim + len(rows) * dim

        def bump(i, delta):
            if i < 3 * dim:
                model.output_matrix[i // dim, i % dim] += delta
            else:
                j = i - 3 * dim
                model.input_matrix[rows[j // dim], j % dim] += delta

        numeric = np.empty(flat_len)
        for i in range(flat_len):
            bump(i, +h)
            up, _ = loss_and_gradient(model, example)
            bump(i, -2 * h)
            down, _ = loss_and_gradient(model, example)
            bump(i, +h)
            numeric[i] = (up - down) / (2 * h)

        err = np.abs(numeric - analytic).max() / max(np.abs(analytic).max(), 1e-8)
        worst = max(worst, err)
    elapsed = time.perf_counter() - start
    print(f"gradient check: max relative error {worst:.3g} in {elapsed:.2f}s")
    assert worst < 1e-4
    assert elapsed < 5.0


def test_classifier_separates_disjoint_vocabularies():
    rng = np.random.default_rng(7)
    blocks = {
        label: [f"{label.text[:3]}tok{i}" for i in range(30)] for label in Label
    }

    def draw(n):
        out = []
        for _ in range(n):
            label = list(Label)[rng.integers(3)]
            k = int(rng.integers(3, 9))
            out.append(([blocks[label][j] for j in rng.integers(0, 30, k)], label))
        return out

    train_set, test_set = draw(2000), draw(500)
    start = time.perf_counter()
    model = train(train_set, REFERENCE_CONFIG)
    golds, preds = [], []
    for tokens, label in test_set:
        golds.append(label)
        preds.append(list(Label)[int(np.argmax(predict_tokens(model, tokens)))])
    elapsed = time.perf_counter() - start
    result = score(golds, preds)
    print(f"disjoint-vocabulary f1_macro {result.f1_macro:.4f} in {elapsed:.1f}s")
    assert result.f1_macro >= 0.95
    assert elapsed < 60.0


def test_metrics_match_independent_reimplementation():
    rng = np.random.default_rng(5)
    labels = list(Label)
    for _ in range(100):
        n = int(rng.integers(1, 60))
        golds = [labels[k] for k in rng.integers(0, 3, n)]
        preds = [labels[k] for k in rng.integers(0, 3, n)]
        result = score(golds, preds)
        f1s = []
        for k, lab in enumerate(labels):
            tp = sum(1 for g, p in zip(golds, preds) if g == p == lab)
            pred_n = sum(1 for p in preds if p == lab)
            gold_n = sum(1 for g in golds if g == lab)
            p = tp / pred_n if pred_n else 0.0
            r = tp / gold_n if gold_n else 0.0
            f1 = 2 * p * r / (p + r) if p + r else 0.0
            assert result.precision[k] == p
            assert result.recall[k] == r
            assert result.f1[k] == f1
            f1s.append(f1)
        assert result.f1_macro == sum(f1s) / 3

    split = fleiss_kappa(np.array([[3, 0, 0], [0, 3, 0]]))
    assert split.kappa == pytest.approx(1.0, abs=1e-9)
    assert fleiss_kappa(np.array([[1, 1, 1]])).kappa == pytest.approx(-0.5, abs=1e-9)

    votes = rng.integers(0, 3, size=(10_000, 3))
    rows = np.zeros((10_000, 3), dtype=np.int64)
    np.add.at(rows, (np.arange(10_000)[:, None], votes), 1)
    kappa = fleiss_kappa(rows).kappa
    print(f"independent-rater kappa {kappa:+.4f}")
    assert abs(kappa) <= 0.05


def test_drift_grid_geometry_and_zero_baseline(swap_bins, geometry_run):
    results = geometry_run
    assert len(swap_bins) == 13
    assert [w.window_id for w in results.windows] == list(range(3, 13))
    assert len(results.cells) == 2750
    pairs = {(c.window_id, c.eval_bin) for c in results.cells}
    assert len(pairs) == 55

    for w in range(3, 13):
        row = find_row(results, w, w, "macro", "rel_f1")
        assert row.n == 50
        assert (row.mean, row.lower, row.upper) == (0.0, 0.0, 0.0)
    for r in results.summaries:
        if r.metric == "rel_f1" and r.is_training_time and r.n > 0:
            assert (r.mean, r.lower, r.upper) == (0.0, 0.0, 0.0)


def test_vocabulary_swap_drops_oldest_window_f1(positive_control):
    results, elapsed = positive_control
    drop = find_row(results, 3, 12, "macro", "rel_f1")
    print(f"oldest window, final bin: rel f1 {drop.mean:+.3f} in {elapsed:.0f}s")
    assert drop.mean <= -0.15
    for w in range(3, 13):
        at_train = find_row(results, w, w, "macro", "f1")
        assert at_train.lower <= at_train.mean <= at_train.upper
    assert elapsed < 900.0


def test_static_corpus_shows_no_drift(static_control):
    future = [
        r
        for r in static_control.summaries
        if r.metric == "rel_f1" and r.class_name == "macro" and not r.is_training_time
    ]
    assert len(future) == 3  # 6 bins -> windows 3..5 -> (3,4) (3,5) (4,5)
    for row in future:
        assert row.lower <= 0.0 <= row.upper, (
            f"window {row.window_id} bin {row.eval_bin}: "
            f"[{row.lower:.4f}, {row.upper:.4f}]"
        )


def test_embedding_diagnostics_track_vocabulary_swap(swap_corpus, swap_bins):
    by_id = {ex.item_id: ex for ex in swap_corpus}
    named = [
        (f"bin{b.index:02d}", [by_id[i] for i in b.example_ids]) for b in swap_bins
    ]
    report = diagnose_corpora(named, provider=HashedProjectionProvider(dim=256))
    raw = report.similarity_raw
    first_last = raw[0, -1]
    adjacent = [raw[i, i + 1] for i in range(len(swap_bins) - 1)]
    print(f"cos(first,last) {first_last:.3f} vs min adjacent {min(adjacent):.3f}")
    assert first_last < min(adjacent)

    provider = HashedProjectionProvider(dim=64)
    emb = provider.embed(["the same text again"] * 40)
    assert corpus_variability(emb) == 0.0


def test_frozen_model_overstates_sentiment_after_shift():
    corpus, _ = prepare_corpus(generate(negative_shift_scenario()))
    plan = ExperimentPlan()
    bins = build_bins(corpus, plan)
    windows = build_windows(bins, plan)
    by_id = {ex.item_id: ex for ex in corpus}

    from drifteval.classifier import preprocess

    tokens_by_id = {ex.item_id: preprocess(ex.text) for ex in corpus}
    timeline = []
    for w in windows:
        train_ids = []
        for b in w.bin_indices:
            train_ids.extend(sample_splits(bins[b], plan, 0).train_ids)
        config = replace(REFERENCE_CONFIG, seed=model_seed(plan, 0, w.window_id))
        examples = [(tokens_by_id[i], by_id[i].label) for i in train_ids]
        timeline.append((w.train_end, train(examples, config)))

    first_end = timeline[0][0]
    stream = [(ex.created_at, ex.text) for ex in corpus if ex.created_at >= first_end]
    legacy, updated = compare_legacy_updated(stream, timeline[0][1], timeline)

    span_start, span_end = bins[0].start, bins[-1].end
    cut = (span_start + 0.75 * (span_end - span_start)).date()
    updated_by_week = {wk: s for wk, s, _ in updated.points}
    diffs = [
        s - updated_by_week[wk] for wk, s, _ in legacy.points if wk >= cut
    ]
    gap = sum(diffs) / len(diffs)
    print(f"final-quarter legacy-minus-updated gap {gap:+.3f} over {len(diffs)} weeks")
    assert gap >= 0.2

    single = timeline[:1]
    legacy2, updated2 = compare_legacy_updated(stream, timeline[0][1], single)
    assert legacy2 == updated2


def test_pipeline_runs_are_byte_identical(tmp_path):
    def pipeline(root):
        synth = root / "synth"
        assert (
            main(
                [
                    "synth",
                    "--preset",
                    "static",
                    "--n-items",
                    "900",
                    "--span-days",
                    "455",
                    "--out-dir",
                    str(synth),
                ]
            )
            == 0
        )
        ingest = root / "ingest"
        assert (
            main(
                [
                    "ingest",
                    "--annotations",
                    str(synth / "annotations.jsonl"),
                    "--out-dir",
                    str(ingest),
                ]
            )
            == 0
        )
        drift = root / "drift"
        assert (
            main(
                [
                    "drift",
                    "--corpus",
                    str(ingest / "resolved.jsonl"),
                    "--out-dir",
                    str(drift),
                    "--master-seed",
                    "5",
                    "--repeats",
                    "2",
                    "--n-train-per-bin",
                    "40",
                    "--n-eval-per-bin",
                    "20",
                    "--dim",
                    "4",
                    "--epochs",
                    "20",
                ]
            )
            == 0
        )
        return drift

    a = pipeline(tmp_path / "a")
    b = pipeline(tmp_path / "b")
    assert (a / "summary.csv").read_bytes() == (b / "summary.csv").read_bytes()
    assert (a / "cells.csv").read_bytes() == (b / "cells.csv").read_bytes()


def test_external_protocol_matches_in_process_scores(tmp_path):
    corpus, _ = prepare_corpus(generate(static_scenario(n_items=900, time_span_days=455)))
    plan = ExperimentPlan(
        n_train_per_bin=40, n_eval_per_bin=20, repeats=1, master_seed=9
    )
    in_process = run_drift(plan, corpus, STUB_CONFIG)
    spec = ExternalModelSpec(
        train_command=STUB_TRAIN,
        predict_command=STUB_PREDICT,
        model_dir=str(tmp_path / "models"),
        timeout_seconds=300,
    )
    external = run_drift(plan, corpus, spec)

    assert len(external.cells) == len(in_process.cells)
    worst = 0.0
    for mine, theirs in zip(in_process.cells, external.cells):
        assert (mine.window_id, mine.eval_bin, mine.repeat_index) == (
            theirs.window_id,
            theirs.eval_bin,
            theirs.repeat_index,
        )
        gap = max(
            abs(a - b) for a, b in zip(mine.eval_result.f1, theirs.eval_result.f1)
        )
        gap = max(gap, abs(mine.eval_result.f1_macro - theirs.eval_result.f1_macro))
        worst = max(worst, gap)
    print(f"external-vs-builtin worst per-cell f1 gap {worst:.3g}")
    assert worst <= 1e-9

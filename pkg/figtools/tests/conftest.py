"""Control CSVs for the figure tests, produced by the drifteval pipeline
itself (small corpora, tiny models) so the figures render from exactly the
files a real run emits."""

import pytest

from drifteval.cli import main as drifteval_main

PLAN = ["--n-train-per-bin", "40", "--n-eval-per-bin", "20"]
MODEL = ["--dim", "4", "--epochs", "20"]


def run(args):
    rc = drifteval_main(args)
    assert rc == 0, f"drifteval {' '.join(args)} exited {rc}"


@pytest.fixture(scope="session")
def swap_outputs(tmp_path_factory):
    """synth swap -> ingest -> drift + diagnose, scaled down but keeping
    the full 13-bin / 10-window geometry."""
    root = tmp_path_factory.mktemp("swap")
    run(
        [
            "synth", "--preset", "swap", "--n-items", "2600",
            "--span-days", "1175", "--out-dir", str(root / "synth"),
        ]
    )
    run(
        [
            "ingest", "--annotations", str(root / "synth" / "annotations.jsonl"),
            "--out-dir", str(root / "ingest"),
        ]
    )
    corpus = str(root / "ingest" / "resolved.jsonl")
    run(
        [
            "drift", "--corpus", corpus, "--out-dir", str(root / "drift"),
            "--repeats", "2", *PLAN, *MODEL,
        ]
    )
    run(
        [
            "diagnose", "--corpus", corpus, "--out-dir", str(root / "diag"),
            "--annotations", str(root / "synth" / "annotations.jsonl"),
            "--embed-dim", "64", *PLAN,
        ]
    )
    return root


@pytest.fixture(scope="session")
def summary_csv(swap_outputs):
    return swap_outputs / "drift" / "summary.csv"


@pytest.fixture(scope="session")
def diagnostics_csvs(swap_outputs):
    diag = swap_outputs / "diag"
    return diag / "corpus_summary.csv", diag / "similarity_display.csv"


@pytest.fixture(scope="session")
def sentiment_csv(tmp_path_factory):
    root = tmp_path_factory.mktemp("negshift")
    run(
        [
            "synth", "--preset", "negative-shift", "--n-items", "2200",
            "--out-dir", str(root / "synth"),
        ]
    )
    run(
        [
            "ingest", "--annotations", str(root / "synth" / "annotations.jsonl"),
            "--out-dir", str(root / "ingest"),
        ]
    )
    run(
        [
            "sentiment", "--corpus", str(root / "ingest" / "resolved.jsonl"),
            "--out-dir", str(root / "sent"), *PLAN, *MODEL,
        ]
    )
    return root / "sent" / "sentiment.csv"

from driftfig.cli import main


def test_version(capsys):
    assert main(["--version"]) == 0
    assert "driftfig" in capsys.readouterr().out


def test_unknown_family():
    assert main(["pie", "--out", "x.png"]) == 1


def test_drift_command(summary_csv, tmp_path, capsys):
    out = tmp_path / "drift.png"
    rc = main(["drift", "--summary", str(summary_csv), "--out", str(out)])
    assert rc == 0
    assert out.exists()
    assert str(out) in capsys.readouterr().out


def test_drift_by_class_command(summary_csv, tmp_path):
    out = tmp_path / "by_class.png"
    assert main(["drift-by-class", "--summary", str(summary_csv), "--out", str(out)]) == 0
    assert out.exists()


def test_diagnostics_command(diagnostics_csvs, tmp_path):
    cs, sim = diagnostics_csvs
    out = tmp_path / "diag.png"
    rc = main(
        [
            "diagnostics",
            "--corpus-summary", str(cs),
            "--similarity", str(sim),
            "--out", str(out),
        ]
    )
    assert rc == 0
    assert out.exists()


def test_sentiment_command(sentiment_csv, tmp_path):
    out = tmp_path / "sent.png"
    assert main(["sentiment", "--sentiment", str(sentiment_csv), "--out", str(out)]) == 0
    assert out.exists()


def test_missing_input_file(tmp_path, capsys):
    rc = main(["drift", "--summary", str(tmp_path / "no.csv"), "--out", str(tmp_path / "x.png")])
    assert rc == 1
    assert "no.csv" in capsys.readouterr().err


def test_missing_column_named_on_stderr(tmp_path, capsys):
    bad = tmp_path / "summary.csv"
    bad.write_text("window_id,eval_bin\n3,4\n", encoding="utf-8")
    rc = main(["drift", "--summary", str(bad), "--out", str(tmp_path / "x.png")])
    assert rc == 1
    assert "ci_lower" in capsys.readouterr().err

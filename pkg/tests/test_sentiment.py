from datetime import date, datetime, timezone

import pytest

from drifteval import classifier as bow
from drifteval.labels import Label
from drifteval.sentiment import (
    assign_models,
    compare_legacy_updated,
    read_stream,
    sentiment_index,
    week_start,
    write_sentiment_csv,
    write_stream,
)

from corpora import ts


def utc(*args):
    return datetime(*args, tzinfo=timezone.utc)


def toy_model(seed=0):
    examples = [
        (["good", "great"], Label.POSITIVE),
        (["bad", "awful"], Label.NEGATIVE),
        (["meh", "okay"], Label.NEUTRAL),
        (["great", "good"], Label.POSITIVE),
        (["awful", "bad"], Label.NEGATIVE),
    ]
    return bow.train(examples, bow.ClassifierConfig(dim=4, epochs=60, lr0=0.1, seed=seed))


class TestWeekStart:
    def test_midweek_maps_to_monday(self):
        # 2020-01-01 was a Wednesday
        assert week_start(utc(2020, 1, 1, 15, 30)) == date(2019, 12, 30)

    def test_monday_maps_to_itself(self):
        assert week_start(utc(2020, 1, 6)) == date(2020, 1, 6)

    def test_timezone_normalized_before_bucketing(self):
        # Monday 00:30 +02:00 is still Sunday in UTC
        late_sunday = datetime.fromisoformat("2020-01-06T00:30:00+02:00")
        assert week_start(late_sunday) == date(2019, 12, 30)


class TestSentimentIndex:
    def test_worked_example(self):
        # 2 positive, 1 neutral, 1 negative in one week -> (2 - 1) / 4 = 0.25
        preds = [
            (utc(2020, 1, 6), Label.POSITIVE),
            (utc(2020, 1, 7), Label.POSITIVE),
            (utc(2020, 1, 8), Label.NEUTRAL),
            (utc(2020, 1, 9), Label.NEGATIVE),
        ]
        series = sentiment_index(preds)
        assert series.points == ((date(2020, 1, 6), 0.25, 4),)

    def test_weeks_sorted_and_sparse(self):
        preds = [
            (utc(2020, 2, 4), Label.POSITIVE),
            (utc(2020, 1, 7), Label.NEGATIVE),
        ]
        series = sentiment_index(preds)
        assert series.week_starts() == [date(2020, 1, 6), date(2020, 2, 3)]
        assert series.values() == [-1.0, 1.0]

    def test_empty_stream(self):
        assert len(sentiment_index([])) == 0


class TestAssignModels:
    def timeline(self):
        m = toy_model()
        return [(ts(days=10), m), (ts(days=20), m), (ts(days=30), m)]

    def test_piecewise_assignment(self):
        stamps = [ts(days=10), ts(days=15), ts(days=20), ts(days=29), ts(days=35)]
        assert assign_models(stamps, self.timeline()) == [0, 0, 1, 1, 2]

    def test_exact_train_end_uses_that_model(self):
        assert assign_models([ts(days=20)], self.timeline()) == [1]

    def test_predating_items_rejected(self):
        with pytest.raises(ValueError, match="predates"):
            assign_models([ts(days=5)], self.timeline())

    def test_unsorted_timeline_rejected(self):
        m = toy_model()
        with pytest.raises(ValueError, match="sorted"):
            assign_models([ts(days=30)], [(ts(days=20), m), (ts(days=10), m)])


class TestCompareLegacyUpdated:
    def test_single_shared_model_gives_identical_series(self):
        m = toy_model()
        stream = [
            (ts(days=12), "good great"),
            (ts(days=13), "bad awful"),
            (ts(days=25), "meh okay"),
        ]
        legacy, updated = compare_legacy_updated(stream, m, [(ts(days=10), m)])
        assert legacy == updated

    def test_diverges_when_later_model_differs(self):
        honest = toy_model(seed=1)
        # contrarian model: same vocabulary, labels inverted
        inverted = bow.train(
            [
                (["good", "great"], Label.NEGATIVE),
                (["bad", "awful"], Label.POSITIVE),
                (["meh", "okay"], Label.NEUTRAL),
                (["great", "good"], Label.NEGATIVE),
                (["awful", "bad"], Label.POSITIVE),
            ],
            bow.ClassifierConfig(dim=4, epochs=60, lr0=0.1, seed=1),
        )
        stream = [(ts(days=40), "good great"), (ts(days=41), "good great")]
        legacy, updated = compare_legacy_updated(
            stream, honest, [(ts(days=10), honest), (ts(days=30), inverted)]
        )
        assert legacy.values() == [1.0]
        assert updated.values() == [-1.0]


def test_stream_file_round_trip(tmp_path):
    stream = [(ts(days=1), "first text"), (ts(days=2), "second text")]
    path = tmp_path / "stream.tsv"
    write_stream(stream, path)
    assert read_stream(path) == stream


def test_read_stream_requires_tab(tmp_path):
    path = tmp_path / "stream.tsv"
    path.write_text("2021-01-01T00:00:00+00:00 no tab here\n", encoding="utf-8")
    with pytest.raises(ValueError, match="tab"):
        read_stream(path)


def test_sentiment_csv_join(tmp_path):
    from drifteval.sentiment import SentimentSeries

    legacy = SentimentSeries(
        points=((date(2020, 1, 6), 0.25, 4), (date(2020, 1, 13), 0.5, 2))
    )
    updated = SentimentSeries(points=((date(2020, 1, 13), -0.5, 2),))
    path = tmp_path / "sentiment.csv"
    write_sentiment_csv(legacy, updated, path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "week_start,s_legacy,n_legacy,s_updated,n_updated"
    assert lines[1] == "2020-01-06,0.25,4,,"
    assert lines[2] == "2020-01-13,0.5,2,-0.5,2"

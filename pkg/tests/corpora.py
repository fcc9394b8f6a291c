"""Shared helpers for building tiny corpora with controlled timestamps."""

from datetime import datetime, timedelta, timezone

from drifteval.ingest import AnnotationRecord, LabeledExample
from drifteval.labels import Label

EPOCH = datetime(2021, 1, 1, tzinfo=timezone.utc)


def ts(days: float = 0, seconds: int = 0) -> datetime:
    return EPOCH + timedelta(days=days, seconds=seconds)


def example(item_id, text, label=Label.NEUTRAL, when=None, **kwargs) -> LabeledExample:
    defaults = dict(agreement=1.0, n_votes=3)
    defaults.update(kwargs)
    return LabeledExample(
        item_id=item_id,
        text=text,
        created_at=when if when is not None else EPOCH,
        label=Label(label),
        **defaults,
    )


def vote(item_id, label, annotator="a", text="some plain text here", when=None):
    return AnnotationRecord(
        item_id=item_id,
        text=text,
        created_at=when if when is not None else EPOCH,
        annotator_id=annotator,
        vote=Label(label),
    )

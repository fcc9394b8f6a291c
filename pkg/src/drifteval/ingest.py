"""Parsing, anonymization, filtering and majority-vote resolution of
multi-annotator labeled text.

The input is UTF-8 line-delimited JSON, one annotation (one rater's vote on
one item) per line.  The output is a resolved corpus of one labeled,
anonymized example per item that survived the eligibility and agreement
rules.
"""

from __future__ import annotations

import csv
import json
import re
import unicodedata
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Iterable, TextIO

from .labels import Label

#: An item needs at least this many whitespace tokens to be eligible.
MIN_TOKENS = 3

#: Items need at least this many votes to be resolved.
MIN_VOTES = 3

#: Minimum fraction of votes on the modal label; exactly 2/3 is included.
AGREEMENT_THRESHOLD = 2.0 / 3.0

_URL_RE = re.compile(r"https?://\S*|(?<!\w)www\.\S*")
_MENTION_RE = re.compile(r"(?<!\S)@\w\S*")


class IngestError(ValueError):
    pass


@dataclass(frozen=True)
class AnnotationRecord:
    """One rater's vote on one item."""

    item_id: str
    text: str
    created_at: datetime
    annotator_id: str
    vote: Label


@dataclass(frozen=True)
class LabeledExample:
    """A majority-resolved, anonymized, time-stamped training unit."""

    item_id: str
    text: str
    created_at: datetime
    label: Label
    agreement: float
    n_votes: int


@dataclass(frozen=True)
class RejectedLine:
    line_no: int
    reason: str


@dataclass
class ParseResult:
    records: list[AnnotationRecord]
    rejects: list[RejectedLine]


@dataclass
class ResolveStats:
    """Bookkeeping for everything dropped on the way to the resolved corpus."""

    n_items: int = 0
    short_text: int = 0
    duplicate_text: int = 0
    few_votes: int = 0
    low_agreement: int = 0
    resolved: int = 0


def parse_timestamp(value: str) -> datetime:
    """Parse an ISO-8601 timestamp with zone into a UTC datetime.

    Timestamps are truncated to second resolution.  Naive timestamps are
    rejected: without a zone the bin arithmetic would be ambiguous.
    """
    if not isinstance(value, str):
        raise ValueError("timestamp must be a string")
    raw = value.strip()
    if raw.endswith(("Z", "z")):
        raw = raw[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(raw)
    except ValueError:
        raise ValueError(f"not an ISO-8601 timestamp: {value!r}") from None
    if dt.tzinfo is None:
        raise ValueError(f"timestamp missing timezone: {value!r}")
    return dt.astimezone(timezone.utc).replace(microsecond=0)


def _parse_line(line: str) -> AnnotationRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ValueError(f"invalid JSON: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise ValueError("record is not a JSON object")
    for field in ("item_id", "text", "created_at", "annotator_id", "vote"):
        if field not in obj:
            raise ValueError(f"missing field: {field}")
    item_id = obj["item_id"]
    annotator_id = obj["annotator_id"]
    if isinstance(item_id, int):
        item_id = str(item_id)
    if isinstance(annotator_id, int):
        annotator_id = str(annotator_id)
    if not isinstance(item_id, str) or not isinstance(annotator_id, str):
        raise ValueError("item_id and annotator_id must be strings")
    text = obj["text"]
    if not isinstance(text, str):
        raise ValueError("text must be a string")
    vote = obj["vote"]
    if not isinstance(vote, str):
        raise ValueError("vote must be a string")
    try:
        label = Label.from_text(vote)
    except ValueError:
        raise ValueError(f"unknown vote: {vote!r}") from None
    created_at = parse_timestamp(obj["created_at"])
    return AnnotationRecord(
        item_id=item_id,
        text=text,
        created_at=created_at,
        annotator_id=annotator_id,
        vote=label,
    )


def parse_annotations(stream: Iterable[str] | TextIO) -> ParseResult:
    """Parse line-delimited annotation records, collecting malformed lines.

    Blank lines are skipped.  Raises :class:`IngestError` when more than
    half of the non-blank lines reject, which signals the wrong input file
    rather than isolated bad rows.
    """
    records: list[AnnotationRecord] = []
    rejects: list[RejectedLine] = []
    for line_no, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            records.append(_parse_line(line))
        except ValueError as exc:
            rejects.append(RejectedLine(line_no=line_no, reason=str(exc)))
    total = len(records) + len(rejects)
    if total and len(rejects) * 2 > total:
        raise IngestError(
            f"{len(rejects)} of {total} lines rejected; input does not look "
            "like an annotation file"
        )
    return ParseResult(records=records, rejects=rejects)


def anonymize(text: str) -> str:
    """Replace URLs with "url" and @-mentions with "user".

    URL substrings (http(s) scheme, or a www. prefix not embedded in a
    word) are replaced up to the next whitespace.  @-mention replacement
    applies to whole whitespace-delimited tokens that start with "@"
    followed by at least one word character.  Idempotent.
    """
    text = _URL_RE.sub("url", text)
    return _MENTION_RE.sub("user", text)


def token_count(text: str) -> int:
    return len(text.split())


def filter_eligible(record: AnnotationRecord) -> bool:
    """Per-record eligibility: at least MIN_TOKENS whitespace tokens.

    Duplicate-text removal is a corpus-level rule; see duplicate_mask().
    """
    return token_count(record.text) >= MIN_TOKENS


def duplicate_mask(texts: Iterable[str]) -> list[bool]:
    """True for every text that repeats an earlier one.

    Equality is byte equality of the NFC-normalized text; the first
    occurrence is kept.  Texts are expected to be anonymized already.
    """
    seen: set[str] = set()
    mask: list[bool] = []
    for t in texts:
        key = unicodedata.normalize("NFC", t)
        mask.append(key in seen)
        seen.add(key)
    return mask


def resolve_labels(
    records: Iterable[AnnotationRecord], stats: ResolveStats | None = None
) -> list[LabeledExample]:
    """Resolve per-item labels by majority vote.

    Items with fewer than MIN_VOTES votes are skipped (tallied in
    stats.few_votes when a stats object is passed).  The modal label wins
    when its vote fraction is at least 2/3 (boundary included); otherwise
    the item is excluded.  A tie for the mode always falls below the
    threshold with three classes, so no tie-break is needed.  Output is
    sorted by timestamp.  Resolution only: eligibility filtering and
    anonymization are handled by prepare_corpus().
    """
    examples, _ = _resolve(records, stats if stats is not None else ResolveStats())
    return examples


def _resolve(
    records: Iterable[AnnotationRecord], stats: ResolveStats
) -> tuple[list[LabeledExample], ResolveStats]:
    groups: dict[str, list[AnnotationRecord]] = {}
    for rec in records:
        groups.setdefault(rec.item_id, []).append(rec)
    stats.n_items += len(groups)
    examples = []
    for item_id, votes in groups.items():
        if len(votes) < MIN_VOTES:
            stats.few_votes += 1
            continue
        counts: dict[Label, int] = {}
        for rec in votes:
            counts[rec.vote] = counts.get(rec.vote, 0) + 1
        top = max(counts.values())
        agreement = top / len(votes)
        if agreement < AGREEMENT_THRESHOLD:
            stats.low_agreement += 1
            continue
        label = max(counts, key=lambda lb: counts[lb])
        examples.append(
            LabeledExample(
                item_id=item_id,
                text=votes[0].text,
                created_at=min(rec.created_at for rec in votes),
                label=label,
                agreement=agreement,
                n_votes=len(votes),
            )
        )
        stats.resolved += 1
    examples.sort(key=lambda ex: (ex.created_at, ex.item_id))
    return examples, stats


def prepare_corpus(
    records: Iterable[AnnotationRecord],
) -> tuple[list[LabeledExample], ResolveStats]:
    """Full pipeline from raw annotations to the resolved corpus.

    Anonymizes every text, drops items with short texts, drops items whose
    anonymized text duplicates an earlier item's, then resolves labels by
    majority vote.
    """
    stats = ResolveStats()
    items: dict[str, list[AnnotationRecord]] = {}
    for rec in records:
        anon = anonymize(rec.text)
        if anon != rec.text:
            rec = AnnotationRecord(
                item_id=rec.item_id,
                text=anon,
                created_at=rec.created_at,
                annotator_id=rec.annotator_id,
                vote=rec.vote,
            )
        items.setdefault(rec.item_id, []).append(rec)

    kept: list[AnnotationRecord] = []
    dup = duplicate_mask(group[0].text for group in items.values())
    for is_dup, group in zip(dup, items.values()):
        if token_count(group[0].text) < MIN_TOKENS:
            stats.short_text += 1
            stats.n_items += 1
        elif is_dup:
            stats.duplicate_text += 1
            stats.n_items += 1
        else:
            # kept items are counted by _resolve
            kept.extend(group)
    examples, stats = _resolve(kept, stats)
    return examples, stats


# --- file I/O ---------------------------------------------------------------


def format_timestamp(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).isoformat()


def read_annotations(path) -> ParseResult:
    with open(path, encoding="utf-8") as f:
        return parse_annotations(f)


def write_annotations(records: Iterable[AnnotationRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            obj = {
                "item_id": rec.item_id,
                "text": rec.text,
                "created_at": format_timestamp(rec.created_at),
                "annotator_id": rec.annotator_id,
                "vote": rec.vote.text,
            }
            f.write(json.dumps(obj, ensure_ascii=False) + "\n")


def write_corpus(examples: Iterable[LabeledExample], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for ex in examples:
            obj = {
                "item_id": ex.item_id,
                "text": ex.text,
                "created_at": format_timestamp(ex.created_at),
                "label": ex.label.text,
                "agreement": ex.agreement,
                "n_votes": ex.n_votes,
            }
            f.write(json.dumps(obj, ensure_ascii=False) + "\n")


def read_corpus(path) -> list[LabeledExample]:
    examples = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                ex = LabeledExample(
                    item_id=str(obj["item_id"]),
                    text=obj["text"],
                    created_at=parse_timestamp(obj["created_at"]),
                    label=Label.from_text(obj["label"]),
                    agreement=float(obj["agreement"]),
                    n_votes=int(obj["n_votes"]),
                )
            except (ValueError, KeyError, TypeError) as exc:
                raise IngestError(f"bad corpus line {line_no}: {exc}") from None
            examples.append(ex)
    return examples


def write_rejects(rejects: Iterable[RejectedLine], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["line_no", "reason"])
        for rej in rejects:
            writer.writerow([rej.line_no, rej.reason])

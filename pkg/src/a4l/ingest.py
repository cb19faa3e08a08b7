"""Source adapters and the ingest pipeline.

Three fixed source shapes are supported:

* LMS export, CSV with header ``student_id,course_id,activity,score,timestamp``.
  The activity column routes each row: ``enrollment`` (score column carries
  birth year), ``survey:<INSTRUMENT>`` (score carries the instrument score),
  ``quiz:<item>`` / ``assignment:<item>`` / ``exam:<item>`` (graded work,
  score 0-100), ``view:<page>`` (page views).
* Forum dump, JSON array of posts ``{post_id, author_id, thread_id,
  course_id, body, created_at, likes[, reply_to]}``. Each like record
  becomes its own Liked event attributed to the post author.
* Tool stream, NDJSON lines already near-canonical but with raw actor ids
  and unscrubbed text.

Candidates leave the parsers with RAW identifiers; `ingest_batch` runs
parse -> validate -> pseudonymize+scrub -> append, all-or-nothing per batch,
so nothing reaches the store with a raw id or unscrubbed text. Records that
fail parsing or validation land in the quarantine side channel, preserving
accepted + quarantined == input count for every batch. Quarantine entries
hold raw source lines and therefore live only in the in-process receipt,
never on disk.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Mapping, Sequence

from . import privacy
from .model import (
    ActorRef,
    CanonicalEvent,
    ObjectRef,
    canonical_timestamp,
    deterministic_event_id,
    event_from_dict,
    event_to_dict,
    parse_timestamp,
    validate_event,
)
from .store import EventLog, StoreUnavailable

LMS_HEADER = ["student_id", "course_id", "activity", "score", "timestamp"]

SURVEY_INSTRUMENTS = ("NFC", "SE", "HS", "PL", "NTB")

GRADED_ACTIVITIES = ("quiz", "assignment", "exam")


class BadHeader(ValueError):
    """CSV header row missing or wrong."""


class BadEncoding(ValueError):
    """Payload is not valid UTF-8."""


class BadShape(ValueError):
    """Document root has the wrong JSON shape."""


class DuplicateBatch(ValueError):
    """Batch id was already ingested; store left unchanged."""


class IngestUnavailable(RuntimeError):
    """Store append failed; batch not applied."""


@dataclass(frozen=True)
class BatchManifest:
    uploader: str
    received_at: str
    declared_count: int


@dataclass(frozen=True)
class SourceBatch:
    batch_id: str
    source: str  # lms | forum | tool
    institution: str  # gt | tcsg
    format: str  # csv | json | ndjson
    payload: bytes
    manifest: BatchManifest


@dataclass(frozen=True)
class QuarantineEntry:
    batch_id: str
    ordinal: int
    raw: str
    reason: str


@dataclass(frozen=True)
class IngestReceipt:
    batch_id: str
    accepted: int
    quarantined: int
    offset_lo: int
    offset_hi: int
    quarantine: tuple[QuarantineEntry, ...] = ()
    scrub_span_counts: Mapping[str, int] = field(default_factory=dict)

    def to_json(self) -> dict:
        """Wire form: quarantine reasons only, raw fragments withheld."""
        return {
            "batch_id": self.batch_id,
            "accepted": self.accepted,
            "quarantined": self.quarantined,
            "offsets": [self.offset_lo, self.offset_hi],
            "quarantine": [
                {"ordinal": q.ordinal, "reason": q.reason} for q in self.quarantine
            ],
            "scrub_span_counts": dict(self.scrub_span_counts),
        }


def _decode(batch: SourceBatch) -> str:
    try:
        return batch.payload.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise BadEncoding(f"batch {batch.batch_id}: payload is not UTF-8") from exc


def parse_lms_export(
    batch: SourceBatch,
) -> tuple[list[CanonicalEvent], list[QuarantineEntry]]:
    """CSV rows -> assessment/navigation candidates with raw actor ids."""
    text = _decode(batch)
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise BadHeader(f"batch {batch.batch_id}: empty payload") from None
    if [h.strip() for h in header] != LMS_HEADER:
        raise BadHeader(
            f"batch {batch.batch_id}: expected header {','.join(LMS_HEADER)}"
        )

    candidates: list[CanonicalEvent] = []
    quarantine: list[QuarantineEntry] = []

    def reject(ordinal: int, row: Sequence[str], reason: str) -> None:
        quarantine.append(
            QuarantineEntry(batch.batch_id, ordinal, ",".join(row), reason)
        )

    for ordinal, row in enumerate(reader):
        if len(row) != len(LMS_HEADER):
            reject(ordinal, row, "column-count")
            continue
        student_id, course_id, activity, score, timestamp = (c.strip() for c in row)
        if not student_id:
            reject(ordinal, row, "empty-student-id")
            continue
        if not course_id:
            reject(ordinal, row, "empty-course-id")
            continue
        if parse_timestamp(timestamp) is None:
            reject(ordinal, row, "timestamp-parse")
            continue
        event_time = canonical_timestamp(timestamp)
        event_id = deterministic_event_id(batch.batch_id, "lms", str(ordinal))
        actor = ActorRef(id=student_id, actor_type="Person",
                         institution=batch.institution)
        kind, _, detail = activity.partition(":")

        if kind == "enrollment":
            try:
                birth_year = int(float(score))
            except ValueError:
                reject(ordinal, row, "birth-year-parse")
                continue
            candidates.append(CanonicalEvent(
                event_id=event_id,
                event_type="NavigationEvent",
                actor=actor,
                action="Enrolled",
                object=ObjectRef(id=course_id, object_type="Course"),
                event_time=event_time,
                ed_app="lms",
                group=course_id,
                membership_role="Learner",
                extensions={"activity": "enrollment", "birth_year": birth_year},
            ))
        elif kind == "survey":
            if detail not in SURVEY_INSTRUMENTS:
                reject(ordinal, row, "instrument-unknown")
                continue
            try:
                value = float(score)
            except ValueError:
                reject(ordinal, row, "score-parse")
                continue
            candidates.append(CanonicalEvent(
                event_id=event_id,
                event_type="AssessmentEvent",
                actor=actor,
                action="Surveyed",
                object=ObjectRef(id=f"survey:{detail}", object_type="Assessment"),
                event_time=event_time,
                ed_app="lms",
                group=course_id,
                membership_role="Learner",
                extensions={"instrument": detail, "score": value},
            ))
        elif kind in GRADED_ACTIVITIES:
            try:
                value = float(score)
            except ValueError:
                reject(ordinal, row, "score-parse")
                continue
            if not 0.0 <= value <= 100.0:
                reject(ordinal, row, "score-range")
                continue
            item = detail or kind
            candidates.append(CanonicalEvent(
                event_id=event_id,
                event_type="AssessmentEvent",
                actor=actor,
                action="Graded",
                object=ObjectRef(id=item, object_type="Assessment"),
                event_time=event_time,
                ed_app="lms",
                group=course_id,
                membership_role="Learner",
                extensions={"score": value},
            ))
        elif kind == "view":
            candidates.append(CanonicalEvent(
                event_id=event_id,
                event_type="NavigationEvent",
                actor=actor,
                action="Viewed",
                object=ObjectRef(id=detail or "course-home", object_type="Page"),
                event_time=event_time,
                ed_app="lms",
                group=course_id,
                membership_role="Learner",
            ))
        else:
            reject(ordinal, row, "activity-unknown")
    return candidates, quarantine


def parse_forum_dump(
    batch: SourceBatch,
) -> tuple[list[CanonicalEvent], list[QuarantineEntry]]:
    """Forum posts and likes -> MessageEvent candidates.

    A like is attributed to the author of the liked post (the receiver);
    the liker's identity is dropped. Likes of a rejected post quarantine
    as orphaned-like so counts stay conserved.
    """
    text = _decode(batch)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise BadShape(f"batch {batch.batch_id}: not valid JSON") from exc
    if not isinstance(doc, list):
        raise BadShape(f"batch {batch.batch_id}: root must be a JSON array")

    candidates: list[CanonicalEvent] = []
    quarantine: list[QuarantineEntry] = []
    ordinal = 0

    def reject(raw: object, reason: str) -> None:
        nonlocal ordinal
        quarantine.append(QuarantineEntry(
            batch.batch_id, ordinal, json.dumps(raw, default=str), reason
        ))
        ordinal += 1

    for post in doc:
        likes = post.get("likes", []) if isinstance(post, dict) else []
        if not isinstance(likes, list):
            likes = []
        post_ok = True
        if not isinstance(post, dict):
            reject(post, "post-shape")
            post_ok = False
        else:
            missing = [k for k in ("post_id", "author_id", "thread_id",
                                   "course_id", "body", "created_at")
                       if not post.get(k)]
            if missing:
                reject(post, f"post-missing-{missing[0]}")
                post_ok = False
            elif parse_timestamp(str(post["created_at"])) is None:
                reject(post, "timestamp-parse")
                post_ok = False

        if post_ok:
            action = "Replied" if post.get("reply_to") else "Posted"
            candidates.append(CanonicalEvent(
                event_id=deterministic_event_id(batch.batch_id, "forum", str(ordinal)),
                event_type="MessageEvent",
                actor=ActorRef(id=str(post["author_id"]), actor_type="Person",
                               institution=batch.institution),
                action=action,
                object=ObjectRef(id=str(post["post_id"]), object_type="Message"),
                event_time=canonical_timestamp(str(post["created_at"])),
                ed_app="forum",
                group=str(post["course_id"]),
                membership_role="Learner",
                text=str(post["body"]),
                extensions={"thread_id": str(post["thread_id"])},
            ))
            ordinal += 1

        for like in likes:
            if not post_ok:
                reject(like, "orphaned-like")
                continue
            if not isinstance(like, dict) or not like.get("liked_at"):
                reject(like, "like-shape")
                continue
            if parse_timestamp(str(like["liked_at"])) is None:
                reject(like, "timestamp-parse")
                continue
            candidates.append(CanonicalEvent(
                event_id=deterministic_event_id(batch.batch_id, "forum", str(ordinal)),
                event_type="MessageEvent",
                actor=ActorRef(id=str(post["author_id"]), actor_type="Person",
                               institution=batch.institution),
                action="Liked",
                object=ObjectRef(id=str(post["post_id"]), object_type="Message"),
                event_time=canonical_timestamp(str(like["liked_at"])),
                ed_app="forum",
                group=str(post["course_id"]),
                membership_role="Learner",
                extensions={"thread_id": str(post["thread_id"])},
            ))
            ordinal += 1
    return candidates, quarantine


def parse_tool_events(
    batch: SourceBatch,
) -> tuple[list[CanonicalEvent], list[QuarantineEntry]]:
    """NDJSON tool stream -> candidates; per-line quarantine, no batch errors."""
    text = _decode(batch)
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()

    candidates: list[CanonicalEvent] = []
    quarantine: list[QuarantineEntry] = []
    for ordinal, line in enumerate(lines):
        if not line.strip():
            quarantine.append(QuarantineEntry(batch.batch_id, ordinal, line, "empty-line"))
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError:
            quarantine.append(QuarantineEntry(batch.batch_id, ordinal, line, "parse-error"))
            continue
        if not isinstance(doc, dict):
            quarantine.append(QuarantineEntry(batch.batch_id, ordinal, line, "bad-shape"))
            continue
        doc = dict(doc)
        doc.setdefault(
            "event_id", deterministic_event_id(batch.batch_id, "tool", str(ordinal))
        )
        structural = [k for k in ("event_type", "actor", "action", "object",
                                  "event_time", "ed_app", "group", "membership_role")
                      if not doc.get(k)]
        if structural:
            quarantine.append(QuarantineEntry(
                batch.batch_id, ordinal, line, f"missing-{structural[0]}"
            ))
            continue
        if not isinstance(doc["actor"], dict) or not isinstance(doc["object"], dict):
            quarantine.append(QuarantineEntry(batch.batch_id, ordinal, line, "bad-shape"))
            continue
        if parse_timestamp(str(doc["event_time"])) is None:
            quarantine.append(QuarantineEntry(
                batch.batch_id, ordinal, line, "timestamp-parse"
            ))
            continue
        try:
            candidates.append(event_from_dict(doc))
        except (KeyError, TypeError, ValueError):
            quarantine.append(QuarantineEntry(batch.batch_id, ordinal, line, "bad-shape"))
    return candidates, quarantine


_PARSERS = {
    ("lms", "csv"): parse_lms_export,
    ("forum", "json"): parse_forum_dump,
    ("tool", "ndjson"): parse_tool_events,
}


def ingest_batch(
    batch: SourceBatch,
    *,
    store: EventLog,
    vaults: Mapping[str, privacy.IdentityVault],
    rosters: Sequence[privacy.Roster] = (),
    now: datetime | None = None,
) -> IngestReceipt:
    """Run one batch through parse -> validate -> privacy -> append.

    All-or-nothing: on any store failure no event of the batch is visible.
    Re-submitting a batch id raises DuplicateBatch and changes nothing.
    """
    if store.has_batch(batch.batch_id):
        raise DuplicateBatch(batch.batch_id)
    parser = _PARSERS.get((batch.source, batch.format))
    if parser is None:
        raise BadShape(
            f"unsupported source/format pair ({batch.source}, {batch.format})"
        )
    now = now or datetime.now(timezone.utc)
    candidates, quarantine = parser(batch)

    accepted: list[CanonicalEvent] = []
    scrub_counts: dict[str, int] = {}
    for i, candidate in enumerate(candidates):
        report = validate_event(event_to_dict(candidate), now=now, at_rest=False)
        if not report.valid:
            first = report.violations[0]
            quarantine.append(QuarantineEntry(
                batch.batch_id, i, json.dumps(event_to_dict(candidate)),
                f"validation:{first.rule}",
            ))
            continue
        accepted.append(_apply_privacy(candidate, vaults, rosters, scrub_counts))

    try:
        lo, hi = store.append(accepted, batch_id=batch.batch_id)
    except StoreUnavailable as exc:
        raise IngestUnavailable(str(exc)) from exc
    return IngestReceipt(
        batch_id=batch.batch_id,
        accepted=len(accepted),
        quarantined=len(quarantine),
        offset_lo=lo,
        offset_hi=hi,
        quarantine=tuple(quarantine),
        scrub_span_counts=scrub_counts,
    )


def _apply_privacy(
    event: CanonicalEvent,
    vaults: Mapping[str, privacy.IdentityVault],
    rosters: Sequence[privacy.Roster],
    scrub_counts: dict[str, int],
) -> CanonicalEvent:
    """Pseudonymize the actor and scrub free text; pure apart from the vault."""
    actor = event.actor
    if actor.actor_type == "Person":
        vault = vaults[actor.institution]
        actor = ActorRef(
            id=vault.pseudonymize(actor.id, actor.institution),
            actor_type="Person",
            institution=actor.institution,
        )
    text = event.text
    if text is not None:
        text, report = privacy.scrub_text(text, rosters)
        for span in report.spans:
            scrub_counts[span.category] = scrub_counts.get(span.category, 0) + 1
    return CanonicalEvent(
        event_id=event.event_id,
        event_type=event.event_type,
        actor=actor,
        action=event.action,
        object=event.object,
        event_time=event.event_time,
        ed_app=event.ed_app,
        group=event.group,
        membership_role=event.membership_role,
        text=text,
        extensions=event.extensions,
    )

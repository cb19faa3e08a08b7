"""Canonical event model: the one vocabulary every pipeline stage speaks.

Events use a closed six-type taxonomy with an explicit verb vocabulary per
type (published in docs/schema.md). The wire format is canonical NDJSON:
one event per line, UTF-8, keys sorted lexicographically, timestamps in
RFC 3339 UTC with millisecond precision. Optional fields are omitted when
absent so that serialize(parse(line)) == line for canonical input.
"""

from __future__ import annotations

import json
import re
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Any, Mapping

EVENT_TYPES = (
    "ToolUseEvent",
    "MessageEvent",
    "AssessmentEvent",
    "SessionEvent",
    "NavigationEvent",
    "FeedbackEvent",
)

# Verb vocabulary per event type. docs/schema.md publishes the same table;
# tests/test_model.py diffs the two, so edits must land in both places.
EVENT_VERBS: dict[str, frozenset[str]] = {
    "ToolUseEvent": frozenset({"Used", "Launched", "Edited", "Ran", "Completed"}),
    "MessageEvent": frozenset({"Posted", "Replied", "Liked", "Asked", "Answered", "Commented"}),
    "AssessmentEvent": frozenset({"Submitted", "Graded", "Surveyed"}),
    "SessionEvent": frozenset({"LoggedIn", "LoggedOut", "TimedOut"}),
    "NavigationEvent": frozenset({"Viewed", "Enrolled"}),
    "FeedbackEvent": frozenset({"Annotated", "Acknowledged"}),
}

TOOL_IDS = (
    "jill-watson",
    "sami",
    "vera",
    "apprentice-tutor",
    "smart",
    "ivy",
    "lms",
    "forum",
)

# Tools whose use counts as AI-tool adoption (platform surfaces excluded).
AI_TOOL_IDS = ("jill-watson", "sami", "vera", "apprentice-tutor", "smart", "ivy")

INSTITUTIONS = ("gt", "tcsg")

OBJECT_TYPES = (
    "Thread",
    "Message",
    "Question",
    "Model",
    "Assessment",
    "Page",
    "Course",
    "Insight",
)

MEMBERSHIP_ROLES = ("Learner", "Instructor", "Agent")

# Event types that project into a structured table (session and feedback
# events stay in the log only).
TABLE_EVENT_TYPES = frozenset(
    {"ToolUseEvent", "MessageEvent", "AssessmentEvent", "NavigationEvent"}
)

PSEUDONYM_RE = re.compile(r"^anon:(gt|tcsg):[A-Za-z0-9_-]{22}$")

# Allowed forward clock skew between a declared event_time and ingest time.
MAX_FUTURE_SKEW = timedelta(minutes=5)

_TS_RE = re.compile(
    r"^(\d{4})-(\d{2})-(\d{2})T(\d{2}):(\d{2}):(\d{2})(\.\d{1,6})?(Z|[+-]\d{2}:\d{2})$"
)

_SCALAR_TYPES = (str, int, float, bool)


class UnknownMetric(KeyError):
    """Raised by level_of for a metric id outside the taxonomy."""


@dataclass(frozen=True)
class ActorRef:
    id: str
    actor_type: str  # Person | SoftwareAgent
    institution: str | None = None  # required for Person actors


@dataclass(frozen=True)
class ObjectRef:
    id: str
    object_type: str


@dataclass(frozen=True)
class CanonicalEvent:
    event_id: str
    event_type: str
    actor: ActorRef
    action: str
    object: ObjectRef
    event_time: str  # canonical RFC 3339 UTC, millisecond precision
    ed_app: str
    group: str
    membership_role: str
    text: str | None = None
    extensions: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class Violation:
    field: str
    rule: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    violations: tuple[Violation, ...]


def parse_timestamp(value: str) -> datetime | None:
    """Parse an RFC 3339 UTC timestamp; return None if malformed or non-UTC."""
    if not isinstance(value, str):
        return None
    m = _TS_RE.match(value)
    if m is None:
        return None
    offset = m.group(8)
    if offset not in ("Z", "+00:00", "-00:00"):
        return None
    frac = m.group(7) or ""
    micros = int((frac[1:] + "000000")[:6]) if frac else 0
    try:
        return datetime(
            int(m.group(1)),
            int(m.group(2)),
            int(m.group(3)),
            int(m.group(4)),
            int(m.group(5)),
            int(m.group(6)),
            micros,
            tzinfo=timezone.utc,
        )
    except ValueError:
        return None


def format_timestamp(dt: datetime) -> str:
    """Render a datetime in the canonical millisecond-precision UTC form."""
    dt = dt.astimezone(timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{dt.microsecond // 1000:03d}Z"


def canonical_timestamp(value: str) -> str:
    """Normalize any accepted RFC 3339 UTC form to the canonical one."""
    dt = parse_timestamp(value)
    if dt is None:
        raise ValueError(f"not an RFC 3339 UTC timestamp: {value!r}")
    return format_timestamp(dt)


def _is_uuid(value: str) -> bool:
    try:
        uuid.UUID(value)
    except (ValueError, AttributeError, TypeError):
        return False
    return True


def validate_event(
    candidate: Mapping[str, Any],
    *,
    now: datetime | None = None,
    at_rest: bool = True,
) -> ValidationReport:
    """Check one parsed record against every schema rule.

    Pure: the input is never mutated and the report depends only on the
    arguments. All failures are reported together, never raised. `now`
    enables the forward-skew check (skipped when None so reports stay
    reproducible). `at_rest=False` relaxes the pseudonym rule for
    candidates that have not passed through pseudonymization yet.
    """
    v: list[Violation] = []

    def bad(fieldname: str, rule: str, message: str) -> None:
        v.append(Violation(fieldname, rule, message))

    for required in ("event_id", "event_type", "actor", "action", "object",
                     "event_time", "ed_app", "group", "membership_role"):
        if required not in candidate or candidate[required] in (None, ""):
            bad(required, "required-field", f"missing required field {required}")

    event_type = candidate.get("event_type")
    if event_type is not None and event_type not in EVENT_TYPES:
        bad("event_type", "event-type", f"unknown event type {event_type!r}")

    action = candidate.get("action")
    if isinstance(event_type, str) and event_type in EVENT_VERBS and action:
        if action not in EVENT_VERBS[event_type]:
            bad("action", "verb-vocabulary",
                f"verb {action!r} not in {event_type} vocabulary")

    event_id = candidate.get("event_id")
    if event_id and not _is_uuid(str(event_id)):
        bad("event_id", "uuid-format", f"event_id {event_id!r} is not a UUID")

    ts = candidate.get("event_time")
    if ts:
        parsed = parse_timestamp(ts) if isinstance(ts, str) else None
        if parsed is None:
            bad("event_time", "timestamp-parse",
                f"event_time {ts!r} is not RFC 3339 UTC")
        elif now is not None and parsed > now.astimezone(timezone.utc) + MAX_FUTURE_SKEW:
            bad("event_time", "timestamp-future",
                f"event_time {ts!r} is in the future beyond skew allowance")

    actor = candidate.get("actor")
    if actor is not None:
        if not isinstance(actor, Mapping):
            bad("actor", "actor-shape", "actor must be an object")
        else:
            actor_id = actor.get("id")
            actor_type = actor.get("actor_type")
            institution = actor.get("institution")
            if not actor_id:
                bad("actor.id", "actor-shape", "actor.id is empty")
            if actor_type not in ("Person", "SoftwareAgent"):
                bad("actor.actor_type", "actor-shape",
                    f"unknown actor_type {actor_type!r}")
            if actor_type == "Person":
                if institution not in INSTITUTIONS:
                    bad("actor.institution", "actor-shape",
                        "Person actors must declare an institution")
                if at_rest and actor_id and not PSEUDONYM_RE.match(str(actor_id)):
                    bad("actor.id", "pseudonym-required",
                        "Person actor.id must be a pseudonym token at rest")
            elif actor_type == "SoftwareAgent":
                if actor_id and actor_id not in TOOL_IDS:
                    bad("actor.id", "agent-id",
                        f"SoftwareAgent id {actor_id!r} is not a tool id")

    obj = candidate.get("object")
    if obj is not None:
        if not isinstance(obj, Mapping):
            bad("object", "object-shape", "object must be an object")
        else:
            if not obj.get("id"):
                bad("object.id", "object-shape", "object.id is empty")
            if obj.get("object_type") not in OBJECT_TYPES:
                bad("object.object_type", "object-shape",
                    f"unknown object_type {obj.get('object_type')!r}")

    ed_app = candidate.get("ed_app")
    if ed_app and ed_app not in TOOL_IDS:
        bad("ed_app", "ed-app", f"unknown tool id {ed_app!r}")

    role = candidate.get("membership_role")
    if role and role not in MEMBERSHIP_ROLES:
        bad("membership_role", "membership-role", f"unknown role {role!r}")

    text = candidate.get("text")
    if text is not None and not isinstance(text, str):
        bad("text", "text-type", "text must be a string")

    extensions = candidate.get("extensions")
    if extensions is not None:
        if not isinstance(extensions, Mapping):
            bad("extensions", "extensions-flat", "extensions must be a map")
        else:
            for key, value in extensions.items():
                if not isinstance(key, str) or not isinstance(value, _SCALAR_TYPES):
                    bad("extensions", "extensions-flat",
                        f"extensions[{key!r}] must be a scalar")

    return ValidationReport(valid=not v, violations=tuple(v))


# --- metric taxonomy --------------------------------------------------------

# micro: consumes events of a single student-tool episode;
# meso: joins across episodes, students, or sources.
METRIC_LEVELS: dict[str, str] = {
    "session_engagement": "micro",
    "vera_strategy": "micro",
    "adoption_rate_by_cohort": "meso",
    "score_trajectory": "meso",
    "question_complexity_trend": "meso",
    "trait_adoption_correlation": "meso",
    "feedback_count": "meso",
}


def level_of(metric_id: str) -> str:
    """Return 'micro' or 'meso' for a registered metric id."""
    try:
        return METRIC_LEVELS[metric_id]
    except KeyError:
        raise UnknownMetric(metric_id) from None


# --- serialization ----------------------------------------------------------

def event_to_dict(event: CanonicalEvent) -> dict[str, Any]:
    """Plain-dict form of an event; optional fields omitted when absent."""
    actor: dict[str, Any] = {"id": event.actor.id, "actor_type": event.actor.actor_type}
    if event.actor.institution is not None:
        actor["institution"] = event.actor.institution
    doc: dict[str, Any] = {
        "event_id": event.event_id,
        "event_type": event.event_type,
        "actor": actor,
        "action": event.action,
        "object": {"id": event.object.id, "object_type": event.object.object_type},
        "event_time": event.event_time,
        "ed_app": event.ed_app,
        "group": event.group,
        "membership_role": event.membership_role,
    }
    if event.text is not None:
        doc["text"] = event.text
    if event.extensions:
        doc["extensions"] = dict(event.extensions)
    return doc


def event_from_dict(doc: Mapping[str, Any]) -> CanonicalEvent:
    """Build a CanonicalEvent from a parsed document (assumed pre-validated)."""
    actor = doc["actor"]
    obj = doc["object"]
    return CanonicalEvent(
        event_id=str(doc["event_id"]),
        event_type=str(doc["event_type"]),
        actor=ActorRef(
            id=str(actor["id"]),
            actor_type=str(actor["actor_type"]),
            institution=actor.get("institution"),
        ),
        action=str(doc["action"]),
        object=ObjectRef(id=str(obj["id"]), object_type=str(obj["object_type"])),
        event_time=canonical_timestamp(str(doc["event_time"])),
        ed_app=str(doc["ed_app"]),
        group=str(doc["group"]),
        membership_role=str(doc["membership_role"]),
        text=doc.get("text"),
        extensions=dict(doc.get("extensions") or {}),
    )


def to_canonical_line(event: CanonicalEvent) -> str:
    """One NDJSON line: sorted keys, compact separators, no trailing newline."""
    return json.dumps(
        event_to_dict(event), sort_keys=True, separators=(",", ":"), ensure_ascii=False
    )


def parse_canonical_line(line: str) -> CanonicalEvent:
    return event_from_dict(json.loads(line))


def deterministic_event_id(*parts: str) -> str:
    """Stable UUID for a record, derived from its provenance coordinates."""
    return str(uuid.uuid5(_EVENT_ID_NS, ":".join(parts)))


_EVENT_ID_NS = uuid.uuid5(uuid.NAMESPACE_URL, "a4l-event")

"""Scheduled metric jobs over store snapshots.

Each registered job runs a metric over the events visible at tick time and
appends MetricResult lines to ``results.ndjson`` in the store directory.
Provenance accounting is by store offset: a job only ever covers offsets it
has not processed before, so per-job processed ranges are disjoint and
their union is the full log. Metrics themselves read the whole
snapshot-at-offset (cumulative statistics need history); the offset range
records which growth step a result belongs to.

Metric functions are pure. The question-complexity classifier is a plain
``text -> "higher" | "lower"`` callable; the default is a cue-word
heuristic and anything smarter can be plugged in unchanged.
"""

from __future__ import annotations

import json
import math
import os
import re
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Callable, Mapping, Sequence

from . import stats
from .model import (
    AI_TOOL_IDS,
    CanonicalEvent,
    format_timestamp,
    level_of,
    parse_timestamp,
)
from .store import EventLog, QueryFilter

SESSION_GAP = timedelta(minutes=30)

GEN_Z_BIRTH_YEAR = 1997  # first birth year bucketed as gen-z

COHORT_BUCKETS: dict[str, frozenset[str] | None] = {
    "generation": frozenset({"gen-z", "pre-gen-z"}),
    "institution": frozenset({"gt", "tcsg"}),
    "adoption": frozenset({"adopter", "non-adopter"}),
    "course": None,  # open set
    "instrument": frozenset({"NFC", "SE", "HS", "PL", "NTB"}),
}

STRATEGY_SYSTEMATIC = "systematic-search"
STRATEGY_DECOMPOSITION = "decomposition"
STRATEGY_GLOBAL_LOCAL = "global-local"
STRATEGY_UNLABELED = "unlabeled"

_HIGHER_ORDER_CUES = re.compile(
    r"\b(?:why|how|explain|compare|evaluate|predict)\b|\bwhat[\s-]if\b",
    re.IGNORECASE,
)


class InsufficientData(stats.InsufficientData):
    pass


class DegenerateSample(stats.DegenerateSample):
    pass


@dataclass(frozen=True)
class CohortDescriptor:
    dimension: str
    bucket: str

    def __post_init__(self) -> None:
        allowed = COHORT_BUCKETS.get(self.dimension, frozenset())
        if allowed is not None and self.dimension not in COHORT_BUCKETS:
            raise ValueError(f"unknown cohort dimension {self.dimension!r}")
        if allowed is not None and self.bucket not in allowed:
            raise ValueError(
                f"bucket {self.bucket!r} not declared for dimension {self.dimension!r}"
            )


@dataclass(frozen=True)
class Provenance:
    offset_lo: int
    offset_hi: int
    job_id: str


@dataclass(frozen=True)
class MetricResult:
    metric_id: str
    level: str
    cohort: CohortDescriptor
    window: tuple[str, str]
    values: Mapping[str, float]
    provenance: Provenance
    computed_at: str
    actor: str | None = None  # set on per-actor (drill-down) rows only

    def __post_init__(self) -> None:
        if "n" not in self.values:
            raise ValueError("MetricResult.values must carry a sample size n")
        for key, value in self.values.items():
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ValueError(f"values[{key!r}] must be a finite number")
        if self.values["n"] > 0 and self.provenance.offset_lo >= self.provenance.offset_hi:
            raise ValueError("provenance range empty for a non-empty sample")

    def to_json(self) -> dict:
        doc = {
            "metric_id": self.metric_id,
            "level": self.level,
            "cohort": {"dimension": self.cohort.dimension, "bucket": self.cohort.bucket},
            "window": {"from": self.window[0], "to": self.window[1]},
            "values": {k: self.values[k] for k in sorted(self.values)},
            "provenance": {
                "offset_lo": self.provenance.offset_lo,
                "offset_hi": self.provenance.offset_hi,
                "job_id": self.provenance.job_id,
            },
            "computed_at": self.computed_at,
        }
        if self.actor is not None:
            doc["actor"] = self.actor
        return doc


# --- micro: engagement -------------------------------------------------------

def engagement_metrics(
    events: Sequence[CanonicalEvent], window: tuple[str, str] | None = None
) -> dict[str, float]:
    """Per-episode engagement tallies for one actor+tool event stream.

    Sessions are maximal runs with inter-event gaps of at most 30 minutes.
    Empty input is not an error: every tally is zero.
    """
    times = sorted(parse_timestamp(e.event_time) for e in events)
    sessions = 0
    previous = None
    for t in times:
        if previous is None or (t - previous) > SESSION_GAP:
            sessions += 1
        previous = t
    verbs = [e.action for e in events]
    return {
        "sessions": float(sessions),
        "questions_asked": float(verbs.count("Asked")),
        "answers_given": float(verbs.count("Answered")),
        "comments": float(verbs.count("Commented")),
        "likes_received": float(verbs.count("Liked")),
        "interaction_count": float(len(events)),
        "n": float(len(events)),
    }


# --- meso: adoption ----------------------------------------------------------

@dataclass(frozen=True)
class AdoptionReport:
    buckets: Mapping[str, dict[str, float]]  # label -> {rate, n} (n=0: no rate)
    tests: Mapping[tuple[str, str], dict[str, float]]  # pair -> {t, p} or {degenerate}


def adoption_rate(
    membership: Mapping[str, str], adopters: set[str]
) -> AdoptionReport:
    """Adoption rate per cohort bucket plus pairwise Welch tests.

    membership maps actor -> bucket label (each enrolled actor in exactly
    one bucket); an adopter is any actor with at least one tool interaction
    in the window. Buckets with n=0 are reported rate-less and excluded
    from tests; zero-variance pairs are reported degenerate.
    """
    indicators: dict[str, list[float]] = {}
    for actor, bucket in membership.items():
        indicators.setdefault(bucket, []).append(1.0 if actor in adopters else 0.0)
    buckets: dict[str, dict[str, float]] = {}
    for label, flags in sorted(indicators.items()):
        entry: dict[str, float] = {"n": float(len(flags))}
        if flags:
            entry["rate"] = sum(flags) / len(flags)
        buckets[label] = entry
    tests: dict[tuple[str, str], dict[str, float]] = {}
    labels = [l for l, e in buckets.items() if e["n"] >= 2]
    for i, a in enumerate(labels):
        for b in labels[i + 1:]:
            try:
                r = stats.welch_t_test(indicators[a], indicators[b])
                tests[(a, b)] = {"t": r.t, "p": r.p}
            except stats.DegenerateSample:
                tests[(a, b)] = {"degenerate": 1.0}
    return AdoptionReport(buckets=buckets, tests=tests)


def generation_bucket(birth_year: int, cutoff: int = GEN_Z_BIRTH_YEAR) -> str:
    return "gen-z" if birth_year >= cutoff else "pre-gen-z"


# --- meso: trajectory ---------------------------------------------------------

def trajectory(points: Sequence[tuple[str, float]]) -> dict[str, float]:
    """OLS fit of score against days since the first assessment."""
    if len(points) < 2:
        raise InsufficientData("trajectory needs at least 2 assessments")
    ordered = sorted(points)
    t0 = parse_timestamp(ordered[0][0])
    xs = [(parse_timestamp(ts) - t0).total_seconds() / 86400.0 for ts, _ in ordered]
    ys = [score for _, score in ordered]
    try:
        fit = stats.ols_fit(xs, ys)
    except stats.DegenerateSample:
        raise InsufficientData("no time variance across assessments") from None
    return {"slope": fit.slope, "intercept": fit.intercept, "n": float(fit.n)}


# --- meso: question complexity -------------------------------------------------

def default_complexity_classifier(text: str) -> str:
    """Cue-word heuristic: higher-order iff any reasoning cue appears."""
    return "higher" if _HIGHER_ORDER_CUES.search(text or "") else "lower"


def question_complexity_trend(
    questions: Sequence[tuple[str, str]],
    classifier: Callable[[str], str] = default_complexity_classifier,
    *,
    window_start: str | None = None,
) -> dict[str, float]:
    """Weekly higher-order fractions plus the OLS slope across week indices.

    Weeks are 7-day buckets from window_start (default: first question).
    Weeks with no questions are omitted from the slope fit.
    """
    if not questions:
        return {"n": 0.0, "n_weeks": 0.0}
    ordered = sorted(questions)
    t0 = parse_timestamp(window_start or ordered[0][0])
    weekly: dict[int, list[int]] = {}
    for ts, text in ordered:
        week = int((parse_timestamp(ts) - t0).total_seconds() // (7 * 86400))
        weekly.setdefault(week, []).append(1 if classifier(text) == "higher" else 0)
    values: dict[str, float] = {"n": float(len(ordered)), "n_weeks": float(len(weekly))}
    xs, ys = [], []
    for week, flags in sorted(weekly.items()):
        fraction = sum(flags) / len(flags)
        values[f"week_{week}"] = fraction
        xs.append(float(week))
        ys.append(fraction)
    if len(xs) >= 2:
        try:
            fit = stats.ols_fit(xs, ys)
            values["slope"] = fit.slope
            values["intercept"] = fit.intercept
        except stats.DegenerateSample:
            pass
    return values


# --- meso: trait correlation ----------------------------------------------------

def trait_adoption_correlation(
    scores: Mapping[str, float], adopters: set[str]
) -> dict[str, float]:
    """Point-biserial r of trait score against the adoption indicator,
    with a Welch test between adopter and non-adopter score groups."""
    actors = sorted(scores)
    if len(actors) < 2:
        raise InsufficientData("correlation needs at least 2 surveyed actors")
    xs = [scores[a] for a in actors]
    flags = [1 if a in adopters else 0 for a in actors]
    r_pb = stats.point_biserial(xs, flags)  # raises DegenerateSample as specified
    group_a = [s for s, f in zip(xs, flags) if f == 1]
    group_b = [s for s, f in zip(xs, flags) if f == 0]
    values = {
        "r_pb": r_pb,
        "n": float(len(xs)),
        "mean_adopter": stats.mean(group_a),
        "mean_non": stats.mean(group_b),
    }
    try:
        welch = stats.welch_t_test(group_a, group_b)
        values["t"] = welch.t
        values["p"] = welch.p
    except (stats.DegenerateSample, stats.InsufficientData):
        values["degenerate_test"] = 1.0
    return values


# --- micro: VERA strategy labels --------------------------------------------------

def strategy_label(edits: Sequence[tuple[str, float, float]]) -> str:
    """Rule-based label for one parameter-edit episode.

    Precedence: systematic-search > decomposition > global-local, else
    unlabeled. Episodes with fewer than 3 edits are unlabeled by threshold.
    """
    if len(edits) < 3:
        return STRATEGY_UNLABELED
    if _is_systematic(edits):
        return STRATEGY_SYSTEMATIC
    if _is_decomposition(edits):
        return STRATEGY_DECOMPOSITION
    if _is_global_local(edits):
        return STRATEGY_GLOBAL_LOCAL
    return STRATEGY_UNLABELED


def _is_systematic(edits: Sequence[tuple[str, float, float]]) -> bool:
    """One parameter varied monotonically at least 3 times consecutively."""
    run_start = 0
    for i in range(len(edits) + 1):
        if i == len(edits) or edits[i][0] != edits[run_start][0]:
            run = edits[run_start:i]
            if len(run) >= 3:
                news = [new for _, _, new in run]
                if all(b > a for a, b in zip(news, news[1:])) or all(
                    b < a for a, b in zip(news, news[1:])
                ):
                    return True
            run_start = i
    return False


def _is_decomposition(edits: Sequence[tuple[str, float, float]]) -> bool:
    """Edits split into >= 2 contiguous blocks with disjoint parameter sets."""
    extents: dict[str, list[int]] = {}
    for i, (param, _, _) in enumerate(edits):
        extent = extents.setdefault(param, [i, i])
        extent[1] = i
    intervals = sorted(tuple(v) for v in extents.values())
    blocks = 0
    reach = -1
    for lo, hi in intervals:
        if lo > reach:
            blocks += 1
        reach = max(reach, hi)
    return blocks >= 2


def _is_global_local(edits: Sequence[tuple[str, float, float]]) -> bool:
    """A 3-edit window touching >= 2 parameters, then a single-parameter
    refinement suffix of >= 2 edits."""
    suffix_len = 1
    for i in range(len(edits) - 2, -1, -1):
        if edits[i][0] == edits[-1][0]:
            suffix_len += 1
        else:
            break
    if suffix_len < 2 or suffix_len >= len(edits):
        return False
    params = [p for p, _, _ in edits]
    return any(
        len(set(params[i:i + 3])) >= 2 for i in range(len(params) - 2)
    )


# --- scheduler ---------------------------------------------------------------

@dataclass
class JobSpec:
    job_id: str
    metric_id: str
    interval_s: float
    filter: QueryFilter = field(default_factory=QueryFilter)
    last_run_at: float | None = None
    last_offset: int = 0

    def __post_init__(self) -> None:
        if self.interval_s < 1.0:
            raise ValueError("job interval must be at least 1 second")
        level_of(self.metric_id)  # raises UnknownMetric early


@dataclass(frozen=True)
class JobFailure:
    job_id: str
    at: float
    reason: str


class Scheduler:
    """Time-based job runner over the store; failures isolate per job."""

    def __init__(
        self,
        store: EventLog,
        jobs: Sequence[JobSpec],
        results_path: Path | str,
        *,
        classifier: Callable[[str], str] = default_complexity_classifier,
        gen_z_cutoff: int = GEN_Z_BIRTH_YEAR,
    ):
        self.store = store
        self.jobs = list(jobs)
        self.results_path = Path(results_path)
        self.classifier = classifier
        self.gen_z_cutoff = gen_z_cutoff
        self.failures: list[JobFailure] = []

    def tick(self, now: float) -> list[str]:
        """Run every due job over offsets it has not seen; returns executed ids."""
        executed: list[str] = []
        committed = self.store.committed()
        for job in self.jobs:
            due = job.last_run_at is None or (now - job.last_run_at) >= job.interval_s
            if not due:
                continue
            lo, hi = job.last_offset, committed
            if lo >= hi:
                job.last_run_at = now
                continue
            try:
                results = run_metric(
                    job.metric_id,
                    self.store,
                    job.filter,
                    provenance=Provenance(lo, hi, job.job_id),
                    classifier=self.classifier,
                    gen_z_cutoff=self.gen_z_cutoff,
                )
                self._append_results(results)
            except Exception as exc:  # failure isolation: other jobs still run
                self.failures.append(JobFailure(job.job_id, now, repr(exc)))
                job.last_run_at = now
                continue
            job.last_offset = hi
            job.last_run_at = now
            executed.append(job.job_id)
        return executed

    def _append_results(self, results: Sequence[MetricResult]) -> None:
        if not results:
            return
        self.results_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.results_path, "a", encoding="utf-8") as fh:
            for result in results:
                fh.write(json.dumps(result.to_json(), sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())


def load_jobs(path: Path | str) -> list[JobSpec]:
    """Read the job registry file: [{job_id, metric_id, interval_s, filter}]."""
    doc = json.loads(Path(path).read_text("utf-8"))
    jobs = []
    for entry in doc:
        flt = entry.get("filter", {})
        jobs.append(JobSpec(
            job_id=entry["job_id"],
            metric_id=entry["metric_id"],
            interval_s=float(entry["interval_s"]),
            filter=QueryFilter(
                tool=flt.get("tool"),
                course=flt.get("course"),
                actor=flt.get("actor"),
                event_type=flt.get("event_type"),
                time_from=flt.get("from"),
                time_to=flt.get("to"),
            ),
        ))
    return jobs


def read_results(path: Path | str) -> list[dict]:
    path = Path(path)
    if not path.exists():
        return []
    return [json.loads(line) for line in path.read_text("utf-8").splitlines() if line]


# --- metric runners -----------------------------------------------------------

_INTERACTION_TYPES = frozenset({"ToolUseEvent", "MessageEvent", "NavigationEvent"})


def _snapshot_window(
    flt: QueryFilter, events: Sequence[CanonicalEvent]
) -> tuple[str, str]:
    if flt.time_from and flt.time_to:
        return (flt.time_from, flt.time_to)
    if not events:
        epoch = format_timestamp(datetime(1970, 1, 1, tzinfo=timezone.utc))
        return (flt.time_from or epoch, flt.time_to or epoch)
    times = sorted(e.event_time for e in events)
    lo = flt.time_from or times[0]
    hi = flt.time_to or format_timestamp(
        parse_timestamp(times[-1]) + timedelta(milliseconds=1)
    )
    return (lo, hi)


def _interactions(store: EventLog, flt: QueryFilter) -> list[CanonicalEvent]:
    events = store.query(QueryFilter(
        tool=flt.tool, course=flt.course,
        time_from=flt.time_from, time_to=flt.time_to,
    ))
    return [
        e for e in events
        if e.event_type in _INTERACTION_TYPES
        and e.action != "Enrolled"
        and e.actor.actor_type == "Person"
    ]


def _enrollment(store: EventLog, flt: QueryFilter) -> list[CanonicalEvent]:
    return store.query(QueryFilter(
        course=flt.course, event_type="NavigationEvent",
        time_from=flt.time_from, time_to=flt.time_to,
    ))


def _adopters(store: EventLog, flt: QueryFilter) -> set[str]:
    """Actors with >= 1 interaction with the adoption tool in the window.

    The tool in the job filter names which tool adoption is about
    (default: any AI tool); it is not applied to the enrollment side.
    """
    tools = (flt.tool,) if flt.tool else AI_TOOL_IDS
    found: set[str] = set()
    for tool in tools:
        for e in _interactions(store, replace(flt, tool=tool)):
            found.add(e.actor.id)
    return found


def run_metric(
    metric_id: str,
    store: EventLog,
    flt: QueryFilter,
    *,
    provenance: Provenance,
    classifier: Callable[[str], str] = default_complexity_classifier,
    gen_z_cutoff: int = GEN_Z_BIRTH_YEAR,
    computed_at: str | None = None,
) -> list[MetricResult]:
    """Assemble inputs from the store and wrap metric values as results."""
    computed_at = computed_at or format_timestamp(datetime.now(timezone.utc))
    level = level_of(metric_id)

    def result(cohort: CohortDescriptor, values: Mapping[str, float],
               window: tuple[str, str], actor: str | None = None) -> MetricResult:
        return MetricResult(
            metric_id=metric_id, level=level, cohort=cohort, window=window,
            values=values, provenance=provenance, computed_at=computed_at,
            actor=actor,
        )

    out: list[MetricResult] = []

    if metric_id == "session_engagement":
        events = _interactions(store, flt)
        window = _snapshot_window(flt, events)
        groups: dict[tuple[str, str, str], list[CanonicalEvent]] = {}
        for e in events:
            groups.setdefault((e.actor.id, e.ed_app, e.group), []).append(e)
        for (actor, tool, course), group in sorted(groups.items()):
            values = engagement_metrics(group, window)
            values["tool_" + tool.replace("-", "_")] = 1.0
            out.append(result(CohortDescriptor("course", course), values,
                              window, actor=actor))

    elif metric_id == "adoption_rate_by_cohort":
        enrollment = _enrollment(store, flt)
        window = _snapshot_window(flt, enrollment)
        membership: dict[str, str] = {}
        for e in enrollment:
            if e.action != "Enrolled":
                continue
            birth_year = e.extensions.get("birth_year")
            if birth_year is None:
                continue
            membership[e.actor.id] = generation_bucket(int(birth_year), gen_z_cutoff)
        report = adoption_rate(membership, _adopters(store, flt))
        pair_values: dict[str, float] = {}
        for (a, b), test in report.tests.items():
            pair_values.update(test)
        for label, entry in report.buckets.items():
            values = dict(entry)
            if entry["n"] > 0:
                values.update(pair_values)
            out.append(result(CohortDescriptor("generation", label), values, window))

    elif metric_id == "score_trajectory":
        events = [
            e for e in store.query(QueryFilter(
                course=flt.course, event_type="AssessmentEvent",
                time_from=flt.time_from, time_to=flt.time_to,
            ))
            if e.action == "Graded" and "score" in e.extensions
        ]
        window = _snapshot_window(flt, events)
        by_actor: dict[tuple[str, str], list[tuple[str, float]]] = {}
        for e in events:
            by_actor.setdefault((e.actor.id, e.group), []).append(
                (e.event_time, float(e.extensions["score"]))
            )
        for (actor, course), points in sorted(by_actor.items()):
            try:
                values = trajectory(points)
            except InsufficientData:
                continue
            out.append(result(CohortDescriptor("course", course), values,
                              window, actor=actor))

    elif metric_id == "question_complexity_trend":
        tool = flt.tool or "jill-watson"
        events = [
            e for e in store.query(QueryFilter(
                tool=tool, course=flt.course, event_type="MessageEvent",
                time_from=flt.time_from, time_to=flt.time_to,
            ))
            if e.object.object_type == "Question" and e.actor.actor_type == "Person"
        ]
        window = _snapshot_window(flt, events)
        by_course: dict[str, list[tuple[str, str]]] = {}
        for e in events:
            by_course.setdefault(e.group, []).append((e.event_time, e.text or ""))
        for course, questions in sorted(by_course.items()):
            values = question_complexity_trend(
                questions, classifier, window_start=window[0]
            )
            out.append(result(CohortDescriptor("course", course), values, window))

    elif metric_id == "trait_adoption_correlation":
        surveys = [
            e for e in store.query(QueryFilter(
                course=flt.course, event_type="AssessmentEvent",
                time_from=flt.time_from, time_to=flt.time_to,
            ))
            if e.action == "Surveyed"
        ]
        window = _snapshot_window(flt, surveys)
        adopters = _adopters(store, flt)
        by_instrument: dict[str, dict[str, float]] = {}
        for e in surveys:
            instrument = str(e.extensions.get("instrument", ""))
            if instrument and "score" in e.extensions:
                by_instrument.setdefault(instrument, {})[e.actor.id] = float(
                    e.extensions["score"]
                )
        for instrument, scores in sorted(by_instrument.items()):
            try:
                values = trait_adoption_correlation(scores, adopters)
            except (DegenerateSample, InsufficientData,
                    stats.DegenerateSample, stats.InsufficientData):
                continue
            out.append(result(CohortDescriptor("instrument", instrument),
                              values, window))

    elif metric_id == "vera_strategy":
        tool = flt.tool or "vera"
        events = [
            e for e in store.query(QueryFilter(
                tool=tool, course=flt.course, event_type="ToolUseEvent",
                time_from=flt.time_from, time_to=flt.time_to,
            ))
            if e.action == "Edited"
        ]
        window = _snapshot_window(flt, events)
        episodes: dict[tuple[str, str, str], list[tuple[str, float, float]]] = {}
        for e in events:
            key = (e.actor.id, e.group, str(e.extensions.get("session", e.object.id)))
            episodes.setdefault(key, []).append((
                str(e.extensions.get("parameter", "")),
                float(e.extensions.get("old_value", 0.0)),
                float(e.extensions.get("new_value", 0.0)),
            ))
        for (actor, course, session), edits in sorted(episodes.items()):
            label = strategy_label(edits)
            values = {
                "n": float(len(edits)),
                "labeled": 0.0 if label == STRATEGY_UNLABELED else 1.0,
                "label_systematic_search": float(label == STRATEGY_SYSTEMATIC),
                "label_decomposition": float(label == STRATEGY_DECOMPOSITION),
                "label_global_local": float(label == STRATEGY_GLOBAL_LOCAL),
            }
            out.append(result(CohortDescriptor("course", course), values,
                              window, actor=actor))

    elif metric_id == "feedback_count":
        events = store.query(QueryFilter(
            course=flt.course, event_type="FeedbackEvent",
            time_from=flt.time_from, time_to=flt.time_to,
        ))
        window = _snapshot_window(flt, events)
        course = flt.course or "all-courses"
        out.append(result(
            CohortDescriptor("course", course),
            {"count": float(len(events)), "n": float(len(events))},
            window,
        ))

    else:
        level_of(metric_id)  # raises UnknownMetric
    return out

"""Seeded synthetic corpus generator.

Stands in for the real LMS, forum, and AI-tool sources. Every generated
corpus ships a manifest recording exact record counts, planted PII strings,
planted effect sizes (adoption rates per cohort, trait shift, complexity
trend, strategy templates), and the full raw-identifier set, so each
pipeline stage has a ground truth to be checked against.

Randomness comes from numpy's Philox counter-based generator, keyed through
``SeedSequence(seed).spawn(...)`` with one child stream per corpus section;
the same scenario therefore produces byte-identical files. Generated
corpora are the interchange artifact: reproducibility is promised for this
generator, not across unrelated ones.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from datetime import timedelta
from pathlib import Path
from typing import Sequence

import numpy as np

from .model import format_timestamp, parse_timestamp

FIRST_NAMES = [
    "Avery", "Blake", "Carmen", "Dario", "Elena", "Farid", "Greta", "Hiro",
    "Imani", "Jonas", "Kira", "Lamar", "Mina", "Nadia", "Omar", "Priya",
    "Quinn", "Rosa", "Samir", "Talia", "Uma", "Viktor", "Wanda", "Xander",
    "Yusuf", "Zora", "Anders", "Bettina", "Cyrus", "Delia",
]

FAMILY_NAMES = [
    "Abara", "Bianchi", "Cervantes", "Dimitrov", "Eriksen", "Fontaine",
    "Gruber", "Havel", "Ishikawa", "Jansen", "Kowalski", "Lindqvist",
    "Moreau", "Novak", "Okafor", "Petrov", "Qureshi", "Rossi", "Santana",
    "Toivonen", "Ueda", "Vargas", "Weiss", "Xiong", "Yilmaz", "Zimmer",
]

LOWER_ORDER_QUESTIONS = [
    "What is a {term}?",
    "When is the {item} due?",
    "Where can I find the {item} rubric?",
    "Is the {term} section on the exam?",
    "Define {term} please.",
    "Which chapter covers {term}?",
]

HIGHER_ORDER_QUESTIONS = [
    "Why would a larger {term} destabilize the system?",
    "How does {term} interact with the growth rate here?",
    "Explain why the {term} curve flattens in this model.",
    "Compare {term} with the baseline case. Which matters more?",
    "What if the {term} doubled midway through the simulation?",
    "Evaluate whether {term} alone can account for the dip.",
    "Predict what happens to {term} if resources run out.",
]

QUESTION_TERMS = [
    "predator population", "carrying capacity", "birth rate", "mortality",
    "lifespan", "interaction rate", "food supply", "migration",
]

FORUM_BODIES = [
    "Has anyone started the {item} yet? Looking for a study group.",
    "The simulation kept resetting for me, restarting the browser helped.",
    "Office hours moved to the usual room this week, sharing for visibility.",
    "I posted my notes from the review session in the shared drive.",
    "Reminder that the {item} covers everything through this unit.",
    "That lecture example finally made the model click for me.",
]

SAMI_TEXTS = [
    "Looking to connect with folks in the same timezone.",
    "Anyone else taking this alongside a full-time job?",
    "Happy to pair up for the group exercise.",
    "Sharing a helpful thread from last semester.",
]

PHONE_FORMATS = [
    "404-555-{suffix:04d}",
    "(404) 555-{suffix:04d}",
    "+1 404 555 {suffix:04d}",
]


@dataclass(frozen=True)
class PlantedEffects:
    adoption_rates: dict[str, float] = field(
        default_factory=lambda: {"gen-z": 0.7, "pre-gen-z": 0.4}
    )
    adoption_tool: str = "jill-watson"
    nfc_shift_sigma: float = 0.8
    complexity_start: float = 0.2
    complexity_end: float = 0.6
    strategy_episodes: dict[str, int] = field(
        default_factory=lambda: {
            "systematic-search": 100,
            "decomposition": 100,
            "global-local": 100,
        }
    )


@dataclass(frozen=True)
class PlantedPII:
    emails: int = 120
    phones: int = 110
    gov_ids: int = 100
    roster_mentions: int = 60


@dataclass(frozen=True)
class ScenarioSpec:
    seed: int = 42
    students: int = 400
    weeks: int = 10
    start: str = "2025-09-01T08:00:00.000Z"
    courses: dict[str, str] = field(
        default_factory=lambda: {"bio-1011": "gt", "cs-2001": "tcsg"}
    )
    gen_z_fraction: float = 0.5
    rates: dict[str, float] = field(
        default_factory=lambda: {
            "lms_views": 0.5,       # page views per student-week
            "lms_quiz_prob": 0.3,   # chance of a graded quiz per student-week
            "forum_posts": 0.3,     # posts per student-week
            "likes_per_post": 0.3,  # like records per post
            "jw_questions": 1.0,    # questions per adopter-week
            "jw_answer_prob": 0.2,  # chance the agent answers a question
            "sami_active": 0.5,     # fraction of students active on sami
            "sami_activity": 0.25,  # asked/answered/commented each, per week
            "sami_likes": 0.2,      # likes received per active student-week
        }
    )
    survey_n: dict[str, int] = field(
        default_factory=lambda: {"NFC": 300, "SE": 200, "HS": 200, "PL": 200, "NTB": 200}
    )
    planted: PlantedEffects = field(default_factory=PlantedEffects)
    pii: PlantedPII = field(default_factory=PlantedPII)

    def __post_init__(self) -> None:
        if self.students < 1:
            raise ValueError("students must be >= 1")
        for name, value in {**self.rates, "gen_z_fraction": self.gen_z_fraction}.items():
            if name.endswith("prob") or name in ("gen_z_fraction", "sami_active"):
                if not 0.0 <= value <= 1.0:
                    raise ValueError(f"{name} must lie in [0, 1]")
        for bucket, rate in self.planted.adoption_rates.items():
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"adoption rate for {bucket} must lie in [0, 1]")


@dataclass
class _Student:
    idx: int
    raw_id: str
    institution: str
    course: str
    birth_year: int
    bucket: str
    first: str
    family: str
    adopter: bool
    sami_active: bool

    @property
    def display_name(self) -> str:
        return f"{self.first} {self.family}"


def load_scenario(path: Path | str) -> ScenarioSpec:
    doc = json.loads(Path(path).read_text("utf-8"))
    planted = doc.pop("planted", {})
    pii = doc.pop("pii", {})
    return ScenarioSpec(
        planted=PlantedEffects(**planted),
        pii=PlantedPII(**pii),
        **doc,
    )


def generate(spec: ScenarioSpec, out_dir: Path | str) -> dict:
    """Write the corpus files and return the (also written) manifest.

    LMS, survey, and forum files are emitted per institution because their
    record shapes carry no institution column; the batch declares it. Tool
    events name the actor's institution inline, so one stream suffices.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    streams = _streams(spec.seed)
    students = _make_students(spec, streams["students"])
    institutions = sorted({s.institution for s in students})

    rosters = _write_rosters(spec, students, out)
    lms_rows = _lms_rows(spec, students, streams["lms"])
    survey_rows, nfc_truth = _survey_rows(spec, students, streams["surveys"])
    tool_lines, tool_truth = _tool_events(spec, students, streams["tools"])
    posts, pii_inventory = _forum_posts(
        spec, students, streams["forum"], streams["pii"], tool_truth
    )

    course_institution = dict(spec.courses)
    files: dict[str, int | dict] = {}
    ingest_plan: list[dict] = []
    for institution in institutions:
        rows = [row for s, row in lms_rows if s.institution == institution]
        name = f"lms-{institution}.csv"
        _write_csv(out / name, rows)
        files[name] = len(rows)
        ingest_plan.append({"file": name, "source": "lms",
                            "format": "csv", "institution": institution})
    for institution in institutions:
        rows = [row for s, row in survey_rows if s.institution == institution]
        name = f"surveys-{institution}.csv"
        _write_csv(out / name, rows)
        files[name] = len(rows)
        ingest_plan.append({"file": name, "source": "lms",
                            "format": "csv", "institution": institution})
    for institution in institutions:
        chunk = [p for p in posts
                 if course_institution[p["course_id"]] == institution]
        name = f"forum-{institution}.json"
        (out / name).write_text(
            json.dumps(chunk, indent=1, sort_keys=True) + "\n", "utf-8"
        )
        files[name] = {"posts": len(chunk),
                       "likes": sum(len(p["likes"]) for p in chunk)}
        ingest_plan.append({"file": name, "source": "forum",
                            "format": "json", "institution": institution})
    (out / "tools.ndjson").write_text(
        "".join(line + "\n" for line in tool_lines), "utf-8"
    )
    files["tools.ndjson"] = len(tool_lines)
    ingest_plan.append({"file": "tools.ndjson", "source": "tool",
                        "format": "ndjson", "institution": institutions[0]})

    likes_total = sum(len(p["likes"]) for p in posts)
    plain_lms = [row for _, row in lms_rows]
    plain_surveys = [row for _, row in survey_rows]
    manifest = {
        "seed": spec.seed,
        "generated_for_weeks": spec.weeks,
        "files": files,
        "ingest_plan": ingest_plan,
        "records_total": len(plain_lms) + len(plain_surveys) + len(posts)
        + likes_total + len(tool_lines),
        "event_type_counts": _expected_event_counts(
            plain_lms, plain_surveys, posts, likes_total, tool_truth
        ),
        "table_counts": _expected_table_counts(
            plain_lms, plain_surveys, posts, likes_total, tool_truth
        ),
        "planted": {
            "adoption": _adoption_truth(spec, students),
            "nfc": nfc_truth,
            "complexity": tool_truth["complexity"],
            "strategies": tool_truth["strategies"],
        },
        "pii": pii_inventory,
        "rosters": rosters,
        "raw_ids": [s.raw_id for s in students],
        "courses": dict(spec.courses),
        "window": {"from": spec.start, "to": _ts(spec, spec.weeks * 7.0)},
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=1, sort_keys=True) + "\n", "utf-8"
    )
    return manifest


# --- internals ---------------------------------------------------------------

def _streams(seed: int) -> dict[str, np.random.Generator]:
    names = ("students", "lms", "surveys", "tools", "forum", "pii")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {
        name: np.random.Generator(np.random.Philox(child))
        for name, child in zip(names, children)
    }


def _make_students(spec: ScenarioSpec, rng: np.random.Generator) -> list[_Student]:
    courses = sorted(spec.courses)
    by_inst: dict[str, list[str]] = {}
    for course in courses:
        by_inst.setdefault(spec.courses[course], []).append(course)
    n_gen_z = round(spec.students * spec.gen_z_fraction)
    students: list[_Student] = []
    rates = spec.planted.adoption_rates
    for i in range(spec.students):
        institution = "gt" if i % 2 == 0 else "tcsg"
        if institution not in by_inst:  # single-institution scenarios
            institution = next(iter(by_inst))
        course_pool = by_inst[institution]
        bucket = "gen-z" if i < n_gen_z else "pre-gen-z"
        birth_year = 1997 + (i % 9) if bucket == "gen-z" else 1968 + (i % 28)
        students.append(_Student(
            idx=i,
            raw_id=f"{institution}-stu-{i:05d}",
            institution=institution,
            course=course_pool[i % len(course_pool)],
            birth_year=birth_year,
            bucket=bucket,
            first=FIRST_NAMES[int(rng.integers(len(FIRST_NAMES)))],
            family=FAMILY_NAMES[int(rng.integers(len(FAMILY_NAMES)))],
            adopter=bool(rng.random() < rates.get(bucket, 0.0)),
            sami_active=bool(rng.random() < spec.rates["sami_active"]),
        ))
    return students


def _ts(spec: ScenarioSpec, days: float) -> str:
    base = parse_timestamp(spec.start)
    return format_timestamp(base + timedelta(days=days))


def _write_rosters(
    spec: ScenarioSpec, students: list[_Student], out: Path
) -> list[str]:
    rosters_dir = out / "rosters"
    rosters_dir.mkdir(exist_ok=True)
    paths = []
    for course in sorted(spec.courses):
        people = [
            {
                "raw_id": s.raw_id,
                "display_name": s.display_name,
                "variants": [s.first, s.family],
            }
            for s in students
            if s.course == course
        ]
        doc = {
            "institution": spec.courses[course],
            "course_id": course,
            "people": people,
        }
        path = rosters_dir / f"{course}.json"
        path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", "utf-8")
        paths.append(f"rosters/{course}.json")
    return paths


def _write_csv(path: Path, rows: list[list[str]]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["student_id", "course_id", "activity", "score", "timestamp"])
    writer.writerows(rows)
    path.write_text(buf.getvalue(), "utf-8")


def _lms_rows(
    spec: ScenarioSpec, students: list[_Student], rng: np.random.Generator
) -> list[tuple[_Student, list[str]]]:
    rows: list[tuple[_Student, list[str]]] = []
    for s in students:
        rows.append((s, [s.raw_id, s.course, "enrollment", str(s.birth_year),
                         _ts(spec, 0.0)]))
    for s in students:
        base = float(rng.normal(75.0, 8.0))
        drift = float(rng.normal(0.5, 0.5))
        for week in range(spec.weeks):
            views = int(rng.poisson(spec.rates["lms_views"]))
            for v in range(views):
                day = week * 7 + float(rng.uniform(0.0, 6.5))
                rows.append((s, [s.raw_id, s.course, f"view:unit-{week}", "",
                                 _ts(spec, day)]))
            if rng.random() < spec.rates["lms_quiz_prob"]:
                score = base + drift * week + float(rng.normal(0.0, 3.0))
                score = min(100.0, max(0.0, score))
                day = week * 7 + 5.0
                rows.append((s, [s.raw_id, s.course, f"quiz:week-{week}",
                                 f"{score:.1f}", _ts(spec, day)]))
    return rows


def _survey_rows(
    spec: ScenarioSpec, students: list[_Student], rng: np.random.Generator
) -> tuple[list[tuple[_Student, list[str]]], dict]:
    rows: list[tuple[_Student, list[str]]] = []
    shift = spec.planted.nfc_shift_sigma
    nfc_truth: dict = {"shift_sigma": shift, "n": 0, "adopters": 0}
    for instrument in sorted(spec.survey_n):
        count = min(spec.survey_n[instrument], len(students))
        chosen = rng.permutation(len(students))[:count]
        for idx in sorted(int(i) for i in chosen):
            s = students[idx]
            score = float(rng.normal(4.0, 1.0))
            if instrument == "NFC" and s.adopter:
                score += shift
            score = min(7.0, max(1.0, score))
            rows.append((s, [s.raw_id, s.course, f"survey:{instrument}",
                             f"{score:.2f}", _ts(spec, 3.0)]))
            if instrument == "NFC":
                nfc_truth["n"] += 1
                nfc_truth["adopters"] += int(s.adopter)
    return rows, nfc_truth


def _adoption_truth(spec: ScenarioSpec, students: list[_Student]) -> dict:
    actual: dict[str, dict[str, float]] = {}
    for s in students:
        entry = actual.setdefault(s.bucket, {"n": 0, "adopters": 0})
        entry["n"] += 1
        entry["adopters"] += int(s.adopter)
    for entry in actual.values():
        entry["rate"] = entry["adopters"] / entry["n"] if entry["n"] else 0.0
    return {
        "tool": spec.planted.adoption_tool,
        "planted_rates": dict(spec.planted.adoption_rates),
        "actual": actual,
    }


def _strategy_edit_plan(
    template: str, rng: np.random.Generator
) -> list[tuple[str, float, float]]:
    """Edit sequence realizing one labeling template, avoiding the other rules."""
    params = [f"p{k}" for k in rng.permutation(4)[:3]]
    base = {p: float(rng.uniform(1.0, 5.0)) for p in params}

    def zigzag(param: str, count: int) -> list[tuple[str, float, float]]:
        wobble = [0.5, -0.3, 0.4, -0.2, 0.6]
        edits = []
        value = base[param]
        for j in range(count):
            new = value + wobble[j % len(wobble)]
            edits.append((param, value, new))
            value = new
        return edits

    if template == "systematic-search":
        param = params[0]
        count = int(rng.integers(4, 8))
        step = float(rng.uniform(0.3, 0.8))
        value = base[param]
        edits = []
        for _ in range(count):
            new = value + step
            edits.append((param, value, new))
            value = new
        return edits
    if template == "decomposition":
        blocks = 2 + int(rng.integers(0, 2))
        edits = []
        for b in range(blocks):
            edits.extend(zigzag(params[b % len(params)], 2 + int(rng.integers(0, 2))))
        # distinct params per block by construction when blocks <= len(params)
        return edits
    if template == "global-local":
        refine = params[0]
        other = params[1]
        # global phase touches >= 2 params inside a 3-edit window and ends
        # off the refinement parameter so the suffix run is the local phase
        phase1 = [*zigzag(refine, 1), *zigzag(other, 1), *zigzag(refine, 1),
                  *zigzag(other, 1)]
        phase2 = zigzag(refine, 2 + int(rng.integers(0, 2)))
        return phase1 + phase2
    raise ValueError(f"unknown strategy template {template!r}")


def _tool_events(
    spec: ScenarioSpec, students: list[_Student], rng: np.random.Generator
) -> tuple[list[str], dict]:
    """NDJSON lines for jill-watson, sami, and vera, plus planted truth."""
    events: list[dict] = []
    weeks = spec.weeks
    f_start, f_end = spec.planted.complexity_start, spec.planted.complexity_end
    weekly_planted = [
        f_start + (f_end - f_start) * (w / max(weeks - 1, 1)) for w in range(weeks)
    ]
    weekly_actual = [[0, 0] for _ in range(weeks)]  # [higher, total]
    question_seq = 0

    def tool_event(**kw) -> dict:
        doc = {
            "event_type": kw["event_type"],
            "actor": kw["actor"],
            "action": kw["action"],
            "object": kw["object"],
            "event_time": kw["event_time"],
            "ed_app": kw["ed_app"],
            "group": kw["group"],
            "membership_role": kw.get("membership_role", "Learner"),
        }
        if kw.get("text") is not None:
            doc["text"] = kw["text"]
        if kw.get("extensions"):
            doc["extensions"] = kw["extensions"]
        return doc

    # jill-watson questions with the planted weekly complexity mix
    for s in students:
        if not s.adopter:
            continue
        for week in range(weeks):
            for _ in range(int(rng.poisson(spec.rates["jw_questions"]))):
                higher = bool(rng.random() < weekly_planted[week])
                weekly_actual[week][0] += int(higher)
                weekly_actual[week][1] += 1
                pool = HIGHER_ORDER_QUESTIONS if higher else LOWER_ORDER_QUESTIONS
                template = pool[int(rng.integers(len(pool)))]
                term = QUESTION_TERMS[int(rng.integers(len(QUESTION_TERMS)))]
                text = template.format(term=term, item=f"assignment {week + 1}")
                qid = f"q-{question_seq:06d}"
                question_seq += 1
                when = _ts(spec, week * 7 + float(rng.uniform(0.0, 6.9)))
                events.append(tool_event(
                    event_type="MessageEvent",
                    actor={"id": s.raw_id, "actor_type": "Person",
                           "institution": s.institution},
                    action="Asked",
                    object={"id": qid, "object_type": "Question"},
                    event_time=when,
                    ed_app="jill-watson",
                    group=s.course,
                    text=text,
                ))
                if rng.random() < spec.rates["jw_answer_prob"]:
                    answered = format_timestamp(
                        parse_timestamp(when) + timedelta(minutes=1)
                    )
                    events.append(tool_event(
                        event_type="MessageEvent",
                        actor={"id": "jill-watson", "actor_type": "SoftwareAgent"},
                        action="Answered",
                        object={"id": qid, "object_type": "Question"},
                        event_time=answered,
                        ed_app="jill-watson",
                        group=s.course,
                        membership_role="Agent",
                    ))

    # sami social activity
    for s in students:
        if not s.sami_active:
            continue
        for week in range(weeks):
            for verb in ("Asked", "Answered", "Commented"):
                for _ in range(int(rng.poisson(spec.rates["sami_activity"]))):
                    when = _ts(spec, week * 7 + float(rng.uniform(0.0, 6.9)))
                    text = SAMI_TEXTS[int(rng.integers(len(SAMI_TEXTS)))]
                    events.append(tool_event(
                        event_type="MessageEvent",
                        actor={"id": s.raw_id, "actor_type": "Person",
                               "institution": s.institution},
                        action=verb,
                        object={"id": f"sami-th-{s.course}-{week}",
                                "object_type": "Thread"},
                        event_time=when,
                        ed_app="sami",
                        group=s.course,
                        text=text if verb != "Answered" else None,
                    ))
            for _ in range(int(rng.poisson(spec.rates["sami_likes"]))):
                when = _ts(spec, week * 7 + float(rng.uniform(0.0, 6.9)))
                events.append(tool_event(
                    event_type="MessageEvent",
                    actor={"id": s.raw_id, "actor_type": "Person",
                           "institution": s.institution},
                    action="Liked",
                    object={"id": f"sami-th-{s.course}-{week}",
                            "object_type": "Thread"},
                    event_time=when,
                    ed_app="sami",
                    group=s.course,
                ))

    # vera strategy episodes from the labeling templates
    episodes: list[dict] = []
    counts: dict[str, int] = {}
    episode_seq = 0
    for template in sorted(spec.planted.strategy_episodes):
        for _ in range(spec.planted.strategy_episodes[template]):
            s = students[episode_seq % len(students)]
            session = f"sess-{episode_seq:05d}"
            day = float(rng.uniform(1.0, weeks * 7 - 1.0))
            start = parse_timestamp(_ts(spec, day))
            for j, (param, old, new) in enumerate(_strategy_edit_plan(template, rng)):
                events.append(tool_event(
                    event_type="ToolUseEvent",
                    actor={"id": s.raw_id, "actor_type": "Person",
                           "institution": s.institution},
                    action="Edited",
                    object={"id": f"model-{session}", "object_type": "Model"},
                    event_time=format_timestamp(start + timedelta(minutes=2 * j)),
                    ed_app="vera",
                    group=s.course,
                    extensions={
                        "session": session,
                        "parameter": param,
                        "old_value": round(old, 3),
                        "new_value": round(new, 3),
                    },
                ))
            events.append(tool_event(
                event_type="ToolUseEvent",
                actor={"id": s.raw_id, "actor_type": "Person",
                       "institution": s.institution},
                action="Ran",
                object={"id": f"model-{session}", "object_type": "Model"},
                event_time=format_timestamp(start + timedelta(hours=2)),
                ed_app="vera",
                group=s.course,
                extensions={"session": session},
            ))
            episodes.append({
                "actor_raw": s.raw_id,
                "session": session,
                "template": template,
                "course": s.course,
            })
            counts[template] = counts.get(template, 0) + 1
            episode_seq += 1

    events.sort(key=lambda e: (e["event_time"], e["actor"]["id"],
                               e["object"]["id"], e["action"]))
    lines = [json.dumps(e, sort_keys=True, separators=(",", ":")) for e in events]
    planted_slope = (f_end - f_start) / max(weeks - 1, 1) if weeks > 1 else 0.0
    truth = {
        "complexity": {
            "start": f_start,
            "end": f_end,
            "weeks": weeks,
            "planted_slope": planted_slope,
            "weekly_planted": weekly_planted,
            "weekly_actual": [
                {"higher": h, "total": t} for h, t in weekly_actual
            ],
            "n_questions": sum(t for _, t in weekly_actual),
        },
        "strategies": {"episodes": episodes, "counts": counts},
        "type_counts": _count_types(events),
        "verb_counts": _count_verbs(events),
    }
    return lines, truth


def _forum_posts(
    spec: ScenarioSpec,
    students: list[_Student],
    rng: np.random.Generator,
    pii_rng: np.random.Generator,
    tool_truth: dict,
) -> tuple[list[dict], dict]:
    posts: list[dict] = []
    post_seq = 0
    last_post_in_thread: dict[str, str] = {}
    for s in students:
        for week in range(spec.weeks):
            for _ in range(int(rng.poisson(spec.rates["forum_posts"]))):
                body = FORUM_BODIES[int(rng.integers(len(FORUM_BODIES)))].format(
                    item=f"assignment {week + 1}"
                )
                thread = f"th-{s.course}-{week}-{int(rng.integers(3))}"
                post_id = f"post-{post_seq:06d}"
                post_seq += 1
                created = _ts(spec, week * 7 + float(rng.uniform(0.0, 6.9)))
                reply_to = None
                if thread in last_post_in_thread and rng.random() < 0.3:
                    reply_to = last_post_in_thread[thread]
                likes = []
                for _ in range(int(rng.poisson(spec.rates["likes_per_post"]))):
                    liker = students[int(rng.integers(len(students)))]
                    likes.append({
                        "user_id": liker.raw_id,
                        "liked_at": format_timestamp(
                            parse_timestamp(created)
                            + timedelta(minutes=float(rng.uniform(5.0, 600.0)))
                        ),
                    })
                post = {
                    "post_id": post_id,
                    "author_id": s.raw_id,
                    "thread_id": thread,
                    "course_id": s.course,
                    "body": body,
                    "created_at": created,
                    "likes": likes,
                }
                if reply_to:
                    post["reply_to"] = reply_to
                last_post_in_thread[thread] = post_id
                posts.append(post)

    inventory = _plant_pii(spec, students, posts, pii_rng)
    return posts, inventory


def _plant_pii(
    spec: ScenarioSpec,
    students: list[_Student],
    posts: list[dict],
    rng: np.random.Generator,
) -> dict:
    """Embed planted PII strings into forum bodies; returns the inventory."""
    emails = [
        f"{FIRST_NAMES[i % len(FIRST_NAMES)].lower()}."
        f"{FAMILY_NAMES[i % len(FAMILY_NAMES)].lower()}{i}@example.edu"
        for i in range(spec.pii.emails)
    ]
    phones = [
        PHONE_FORMATS[i % len(PHONE_FORMATS)].format(suffix=i % 10000)
        for i in range(spec.pii.phones)
    ]
    gov_ids = [
        f"{100 + (i * 7) % 900:03d}-{10 + i % 90:02d}-{(1000 + i) % 10000:04d}"
        for i in range(spec.pii.gov_ids)
    ]
    mentions = []
    for i in range(spec.pii.roster_mentions):
        s = students[int(rng.integers(len(students)))]
        mentions.append(s.display_name if i % 2 == 0 else s.first)

    snippets = (
        [("email", f"Reach me at {{v}} for the notes.", v) for v in emails]
        + [("phone", "Text {v} if the room changes.", v) for v in phones]
        + [("gov-id-pattern", "The form asked for {v} which can't be right.", v)
           for v in gov_ids]
        + [("roster-name", "Big thanks to {v} for the recap.", v) for v in mentions]
    )
    if posts:
        for category, template, value in snippets:
            post = posts[int(rng.integers(len(posts)))]
            post["body"] = post["body"] + " " + template.format(v=value)
    return {
        "emails": emails,
        "phones": phones,
        "gov_ids": gov_ids,
        "roster_mentions": mentions,
    }


def _count_types(events: Sequence[dict]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for e in events:
        counts[e["event_type"]] = counts.get(e["event_type"], 0) + 1
    return counts


def _count_verbs(events: Sequence[dict]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for e in events:
        counts[e["action"]] = counts.get(e["action"], 0) + 1
    return counts


def _expected_event_counts(
    lms_rows, survey_rows, posts, likes_total, tool_truth
) -> dict[str, int]:
    counts = dict(tool_truth["type_counts"])
    nav = sum(1 for r in lms_rows if not r[2].startswith("quiz:"))
    assess = len(lms_rows) - nav + len(survey_rows)
    counts["NavigationEvent"] = counts.get("NavigationEvent", 0) + nav
    counts["AssessmentEvent"] = counts.get("AssessmentEvent", 0) + assess
    counts["MessageEvent"] = counts.get("MessageEvent", 0) + len(posts) + likes_total
    return counts


def _expected_table_counts(
    lms_rows, survey_rows, posts, likes_total, tool_truth
) -> dict[str, int]:
    enrollment = sum(1 for r in lms_rows if r[2] == "enrollment")
    views = sum(1 for r in lms_rows if r[2].startswith("view:"))
    quizzes = sum(1 for r in lms_rows if r[2].startswith("quiz:"))
    tool_interactions = sum(tool_truth["type_counts"].values())
    return {
        "enrollment": enrollment,
        "assessments": quizzes,
        "survey": len(survey_rows),
        "interactions": views + len(posts) + likes_total + tool_interactions,
    }

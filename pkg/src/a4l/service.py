"""HTTP service: ingest endpoints, role-gated metric feeds, feedback.

Access model (static bearer tokens mapped to credentials in configuration):

* Teacher — own courses; class aggregates plus per-pseudonym rows; small
  cells (n < 5) withheld.
* Learner — own courses; per-actor rows filtered to self; small cells
  withheld.
* Researcher — everything, pseudonymized, no suppression; may export.

Instructor feedback posts re-enter the pipeline as FeedbackEvents via the
normal batch path, so the next scheduler pass picks them up and the updated
feed reflects the note.
"""

from __future__ import annotations

import email.parser
import email.policy
import json
import threading
import time
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

from fastapi import Depends, FastAPI, HTTPException, Query, Request, Response

from . import analytics, ingest, privacy
from .config import AppConfig
from .model import format_timestamp
from .store import EventLog, QueryFilter

SMALL_CELL_N = 5

# Small-cell suppression protects student aggregates; counts of
# instructor-authored notes carry no learner identity, so they stay visible.
SUPPRESSION_EXEMPT_METRICS = frozenset({"feedback_count"})


class AccessDeniedError(PermissionError):
    pass


class UnknownInsight(KeyError):
    pass


@dataclass(frozen=True)
class AccessCredential:
    """Resolved caller identity; satisfies the privacy.Credential protocol."""

    principal_id: str
    role: str  # Teacher | Researcher | Learner
    institution: str
    course_scopes: tuple[str, ...] = ()
    can_deanonymize: bool = False
    pseudonym: str | None = None


class ServiceState:
    """Shared runtime: store, vaults, rosters, scheduler, credentials."""

    def __init__(self, config: AppConfig):
        self.config = config
        self.store = EventLog(config.store_dir)
        self.results_path = config.store_dir / "results.ndjson"
        self.vault_dir = config.store_dir / "vaults"
        self.vaults: dict[str, privacy.IdentityVault] = {}
        for institution, key in config.privacy_keys.items():
            path = self.vault_dir / f"{institution}.vault"
            if path.exists():
                self.vaults[institution] = privacy.IdentityVault.load(
                    path, institution, key
                )
            else:
                self.vaults[institution] = privacy.IdentityVault(institution, key)
        self.rosters: list[privacy.Roster] = (
            privacy.load_rosters(config.rosters_dir) if config.rosters_dir else []
        )
        jobs = analytics.load_jobs(config.jobs_file) if config.jobs_file.exists() else []
        self.scheduler = analytics.Scheduler(self.store, jobs, self.results_path)
        self._load_scheduler_state()
        self.credentials: dict[str, AccessCredential] = {}
        for entry in config.tokens:
            vault = self.vaults.get(entry.institution)
            pseudonym = (
                vault.pseudonymize(entry.principal_id) if vault else None
            )
            self.credentials[entry.token] = AccessCredential(
                principal_id=entry.principal_id,
                role=entry.role,
                institution=entry.institution,
                course_scopes=entry.courses,
                can_deanonymize=entry.can_deanonymize,
                pseudonym=pseudonym,
            )
        self.ingest_lock = threading.Lock()

    # -- persistence ---------------------------------------------------------

    def save_vaults(self) -> None:
        for institution, vault in self.vaults.items():
            vault.save(self.vault_dir / f"{institution}.vault")

    def _scheduler_state_path(self) -> Path:
        return self.config.store_dir / "scheduler-state.json"

    def _load_scheduler_state(self) -> None:
        path = self._scheduler_state_path()
        if not path.exists():
            return
        state = json.loads(path.read_text("utf-8"))
        for job in self.scheduler.jobs:
            saved = state.get(job.job_id)
            if saved:
                job.last_offset = int(saved["last_offset"])
                job.last_run_at = saved.get("last_run_at")

    def save_scheduler_state(self) -> None:
        state = {
            job.job_id: {"last_offset": job.last_offset, "last_run_at": job.last_run_at}
            for job in self.scheduler.jobs
        }
        path = self._scheduler_state_path()
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(state, sort_keys=True, indent=1), "utf-8")

    # -- operations ------------------------------------------------------------

    def ingest(self, batch: ingest.SourceBatch) -> ingest.IngestReceipt:
        with self.ingest_lock:
            receipt = ingest.ingest_batch(
                batch, store=self.store, vaults=self.vaults, rosters=self.rosters
            )
            self.save_vaults()
            return receipt

    def tick(self, now: float | None = None) -> list[str]:
        # ticks and ingests share the store; one lock keeps jobs reading a
        # settled snapshot rather than a mid-append manifest
        with self.ingest_lock:
            executed = self.scheduler.tick(time.time() if now is None else now)
            self.save_scheduler_state()
        return executed


# --- feed assembly ------------------------------------------------------------

def _result_course(result: Mapping) -> str | None:
    cohort = result.get("cohort", {})
    return cohort.get("bucket") if cohort.get("dimension") == "course" else None


def _window_overlaps(result: Mapping, time_from: str | None, time_to: str | None) -> bool:
    window = result.get("window", {})
    if time_from and window.get("to") and window["to"] <= time_from:
        return False
    if time_to and window.get("from") and window["from"] >= time_to:
        return False
    return True


def _suppress(result: Mapping) -> dict:
    return {
        "metric_id": result["metric_id"],
        "level": result["level"],
        "cohort": result["cohort"],
        "window": result["window"],
        "suppressed": True,
        "reason": f"n<{SMALL_CELL_N} withheld",
    }


def check_course_scope(credential: AccessCredential, course: str) -> None:
    if credential.role == "Researcher":
        return
    if course not in credential.course_scopes:
        raise AccessDeniedError(
            f"{credential.role} credential has no scope for course {course}"
        )


def redact_results(
    results: Sequence[Mapping], credential: AccessCredential, course: str
) -> list[dict]:
    """Apply course scoping, learner self-filtering, and small-cell
    suppression to raw metric-result documents."""
    out: list[dict] = []
    for result in results:
        result_course = _result_course(result)
        if result_course is not None and result_course != course:
            continue
        actor = result.get("actor")
        if actor is not None:
            if credential.role == "Learner" and actor != credential.pseudonym:
                continue
            out.append(dict(result))
            continue
        n = result.get("values", {}).get("n", 0)
        suppressible = result.get("metric_id") not in SUPPRESSION_EXEMPT_METRICS
        if credential.role != "Researcher" and suppressible and n < SMALL_CELL_N:
            out.append(_suppress(result))
        else:
            out.append(dict(result))
    return out


def build_feed(
    state: ServiceState,
    credential: AccessCredential,
    course: str,
    time_from: str | None = None,
    time_to: str | None = None,
) -> dict:
    """Deterministic feed document for (store snapshot, credential)."""
    check_course_scope(credential, course)
    results = [
        r for r in analytics.read_results(state.results_path)
        if _window_overlaps(r, time_from, time_to)
    ]
    feedback = [
        {
            "note_id": e.extensions.get("note_id", e.event_id),
            "author": e.actor.id,
            "insight": e.object.id,
            "text": e.text or "",
            "created_at": e.event_time,
        }
        for e in state.store.query(QueryFilter(
            course=course, event_type="FeedbackEvent",
            time_from=time_from, time_to=time_to,
        ))
    ]
    return {
        "course": course,
        "window": {"from": time_from, "to": time_to},
        "role": credential.role,
        "results": redact_results(results, credential, course),
        "feedback": feedback,
        "committed": state.store.committed(),
    }


def post_feedback(state: ServiceState, credential: AccessCredential, draft: Mapping) -> str:
    """Scrub, wrap, and re-ingest an instructor note; returns the note id.

    The note flows through the normal batch pipeline as a FeedbackEvent, so
    it is pseudonymized and scrubbed like any other record and shows up in
    the next scheduler pass.
    """
    if credential.role != "Teacher":
        raise AccessDeniedError("only Teacher credentials may post feedback")
    course = str(draft.get("course", ""))
    check_course_scope(credential, course)
    insight = draft.get("insight", {})
    metric_id = str(insight.get("metric_id", ""))
    window = insight.get("window", {})
    cohort = insight.get("cohort", {})
    if not _insight_exists(state, metric_id, window, cohort):
        raise UnknownInsight(f"{metric_id} @ {window} / {cohort}")
    note_id = str(uuid.uuid4())
    insight_key = "|".join([
        metric_id, str(window.get("from")), str(window.get("to")),
        str(cohort.get("dimension")), str(cohort.get("bucket")),
    ])
    now = format_timestamp(datetime.now(timezone.utc))
    candidate = {
        "event_type": "FeedbackEvent",
        "actor": {
            "id": credential.principal_id,
            "actor_type": "Person",
            "institution": credential.institution,
        },
        "action": "Annotated",
        "object": {"id": insight_key, "object_type": "Insight"},
        "event_time": now,
        "ed_app": "lms",
        "group": course,
        "membership_role": "Instructor",
        "text": str(draft.get("text", "")),
        "extensions": {"note_id": note_id},
    }
    line = json.dumps(candidate, sort_keys=True)
    batch = ingest.SourceBatch(
        batch_id=f"feedback:{note_id}",
        source="tool",
        institution=credential.institution,
        format="ndjson",
        payload=line.encode("utf-8"),
        manifest=ingest.BatchManifest(
            uploader=credential.principal_id, received_at=now, declared_count=1
        ),
    )
    receipt = state.ingest(batch)
    if receipt.accepted != 1:
        reasons = [q.reason for q in receipt.quarantine]
        raise ValueError(f"feedback note rejected by pipeline: {reasons}")
    return note_id


def _insight_exists(
    state: ServiceState, metric_id: str, window: Mapping, cohort: Mapping
) -> bool:
    for result in analytics.read_results(state.results_path):
        if (
            result["metric_id"] == metric_id
            and result["window"].get("from") == window.get("from")
            and result["window"].get("to") == window.get("to")
            and result["cohort"].get("dimension") == cohort.get("dimension")
            and result["cohort"].get("bucket") == cohort.get("bucket")
        ):
            return True
    return False


# --- HTTP layer ----------------------------------------------------------------

def parse_multipart(content_type: str, body: bytes) -> dict[str, bytes]:
    """Extract form-data parts by name using the stdlib MIME parser."""
    header = f"Content-Type: {content_type}\r\n\r\n".encode("ascii")
    message = email.parser.BytesParser(policy=email.policy.default).parsebytes(
        header + body
    )
    parts: dict[str, bytes] = {}
    if message.is_multipart():
        for part in message.iter_parts():
            name = part.get_param("name", header="content-disposition")
            if name:
                payload = part.get_payload(decode=True)
                parts[str(name)] = payload if payload is not None else b""
    return parts


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="a4l", docs_url=None, redoc_url=None)
    app.state.service = state

    def get_credential(request: Request) -> AccessCredential:
        header = request.headers.get("authorization", "")
        if not header.lower().startswith("bearer "):
            raise HTTPException(status_code=401, detail="bearer token required")
        credential = state.credentials.get(header[7:].strip())
        if credential is None:
            raise HTTPException(status_code=401, detail="unknown token")
        return credential

    @app.get("/v1/health")
    def health() -> dict:
        return {"status": "ok", "committed": state.store.committed()}

    @app.post("/v1/batches", status_code=202)
    async def post_batches(request: Request,
                           credential: AccessCredential = Depends(get_credential)):
        source = request.headers.get("x-a4l-source", "")
        institution = request.headers.get("x-a4l-institution", "")
        batch_id = request.headers.get("x-a4l-batch-id", "")
        if not (source and institution and batch_id):
            raise HTTPException(
                status_code=400,
                detail="X-A4L-Source, X-A4L-Institution, X-A4L-Batch-Id required",
            )
        parts = parse_multipart(request.headers.get("content-type", ""),
                                await request.body())
        if "payload" not in parts:
            raise HTTPException(status_code=400, detail="multipart payload part required")
        manifest_doc = {}
        if "manifest" in parts:
            try:
                manifest_doc = json.loads(parts["manifest"].decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError):
                raise HTTPException(status_code=400, detail="manifest part must be JSON")
        fmt = {"lms": "csv", "forum": "json", "tool": "ndjson"}.get(source)
        if fmt is None:
            raise HTTPException(status_code=400, detail=f"unknown source {source!r}")
        batch = ingest.SourceBatch(
            batch_id=batch_id,
            source=source,
            institution=institution,
            format=fmt,
            payload=parts["payload"],
            manifest=ingest.BatchManifest(
                uploader=str(manifest_doc.get("uploader", credential.principal_id)),
                received_at=format_timestamp(datetime.now(timezone.utc)),
                declared_count=int(manifest_doc.get("declared_count", -1)),
            ),
        )
        return _run_ingest(state, batch)

    @app.post("/v1/events", status_code=202)
    async def post_event(request: Request,
                         credential: AccessCredential = Depends(get_credential)):
        body = await request.body()
        line = body.decode("utf-8", errors="replace").strip()
        if not line or "\n" in line:
            raise HTTPException(status_code=400, detail="exactly one NDJSON line required")
        institution = request.headers.get("x-a4l-institution", credential.institution)
        digest = uuid.uuid5(uuid.NAMESPACE_URL, line)
        batch = ingest.SourceBatch(
            batch_id=f"push:{digest}",
            source="tool",
            institution=institution,
            format="ndjson",
            payload=body,
            manifest=ingest.BatchManifest(
                uploader=credential.principal_id,
                received_at=format_timestamp(datetime.now(timezone.utc)),
                declared_count=1,
            ),
        )
        return _run_ingest(state, batch)

    @app.get("/v1/metrics")
    def get_metrics(metric_id: str, course: str,
                    time_from: str | None = Query(None, alias="from"),
                    time_to: str | None = Query(None, alias="to"),
                    credential: AccessCredential = Depends(get_credential)) -> dict:
        try:
            feed = build_feed(state, credential, course, time_from, time_to)
        except AccessDeniedError as exc:
            raise HTTPException(status_code=403, detail=str(exc))
        results = [r for r in feed["results"] if r["metric_id"] == metric_id]
        return {"metric_id": metric_id, "course": course, "results": results}

    @app.get("/v1/dashboard/feed")
    def dashboard_feed(course: str,
                       time_from: str | None = Query(None, alias="from"),
                       time_to: str | None = Query(None, alias="to"),
                       credential: AccessCredential = Depends(get_credential)) -> dict:
        try:
            return build_feed(state, credential, course, time_from, time_to)
        except AccessDeniedError as exc:
            raise HTTPException(status_code=403, detail=str(exc))

    @app.post("/v1/feedback", status_code=201)
    async def feedback(request: Request,
                       credential: AccessCredential = Depends(get_credential)) -> dict:
        try:
            draft = await request.json()
        except json.JSONDecodeError:
            raise HTTPException(status_code=400, detail="JSON body required")
        try:
            note_id = post_feedback(state, credential, draft)
        except AccessDeniedError as exc:
            raise HTTPException(status_code=403, detail=str(exc))
        except UnknownInsight as exc:
            raise HTTPException(status_code=404, detail=f"unknown insight: {exc}")
        return {"note_id": note_id}

    @app.get("/v1/export")
    def export(credential: AccessCredential = Depends(get_credential)) -> Response:
        if credential.role != "Researcher":
            raise HTTPException(status_code=403, detail="export is researcher-only")
        payload = "".join(
            line + "\n" for _, line in state.store.read_lines()
        )
        return Response(content=payload, media_type="application/x-ndjson")

    return app


def _run_ingest(state: ServiceState, batch: ingest.SourceBatch) -> dict:
    try:
        receipt = state.ingest(batch)
    except ingest.DuplicateBatch:
        raise HTTPException(status_code=409, detail=f"duplicate batch {batch.batch_id}")
    except (ingest.BadHeader, ingest.BadEncoding, ingest.BadShape) as exc:
        raise HTTPException(status_code=400, detail=str(exc))
    except ingest.IngestUnavailable as exc:
        raise HTTPException(status_code=503, detail=str(exc))
    return receipt.to_json()

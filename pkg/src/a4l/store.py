"""Embedded single-node event store.

Layout under one root directory:

    events/segment-<n>.ndjson   append-only canonical event lines
    tables/<name>.tsv           structured projections
    manifest.json               commit point, segment map, batch ledger

A write is durable once the manifest commit (write-temp + atomic rename +
fsync) lands; readers only ever see offsets below the committed count, so a
crash between segment write and manifest commit leaves a physically present
but invisible tail that gets truncated on the next open. One writer, many
readers.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

from .model import (
    CanonicalEvent,
    TABLE_EVENT_TYPES,
    parse_canonical_line,
    to_canonical_line,
)

SEGMENT_SIZE = 5000

TABLE_COLUMNS = {
    "interactions": ("offset", "actor", "tool", "course", "verb", "event_time", "object"),
    "assessments": ("offset", "actor", "course", "item", "score", "event_time"),
    "enrollment": ("offset", "actor", "course", "role", "birth_year", "institution"),
    "survey": ("offset", "actor", "instrument", "score", "administered_at"),
}


class StoreUnavailable(RuntimeError):
    """Append could not be made durable; nothing became visible."""


class RangeNotFound(ValueError):
    """Offset range outside the committed log."""


class ExportFailed(OSError):
    """Snapshot export could not be written."""


@dataclass(frozen=True)
class QueryFilter:
    tool: str | None = None
    course: str | None = None
    actor: str | None = None
    event_type: str | None = None
    time_from: str | None = None  # inclusive
    time_to: str | None = None  # exclusive

    def __post_init__(self) -> None:
        if self.time_from and self.time_to and not self.time_from < self.time_to:
            raise ValueError("filter window requires from < to")

    def matches(self, event: CanonicalEvent) -> bool:
        if self.tool is not None and event.ed_app != self.tool:
            return False
        if self.course is not None and event.group != self.course:
            return False
        if self.actor is not None and event.actor.id != self.actor:
            return False
        if self.event_type is not None and event.event_type != self.event_type:
            return False
        if self.time_from is not None and event.event_time < self.time_from:
            return False
        if self.time_to is not None and event.event_time >= self.time_to:
            return False
        return True


@dataclass(frozen=True)
class ExportManifest:
    event_count: int
    sha256: str


def _fsync_dir(path: Path) -> None:
    fd = os.open(path, os.O_RDONLY)
    try:
        os.fsync(fd)
    finally:
        os.close(fd)


class EventLog:
    """Append-only canonical event log plus derived structured tables."""

    def __init__(self, root: Path | str, segment_size: int = SEGMENT_SIZE):
        self.root = Path(root)
        self.segment_size = segment_size
        self.events_dir = self.root / "events"
        self.tables_dir = self.root / "tables"
        self.manifest_path = self.root / "manifest.json"
        self.events_dir.mkdir(parents=True, exist_ok=True)
        self.tables_dir.mkdir(parents=True, exist_ok=True)
        if self.manifest_path.exists():
            self._manifest = json.loads(self.manifest_path.read_text("utf-8"))
        else:
            self._manifest = {
                "version": 1,
                "committed": 0,
                "segments": [],  # [{"file": name, "count": committed-in-segment}]
                "batches": {},  # batch_id -> [lo, hi)
                "projected": [],  # disjoint committed [lo, hi) already in tables
            }
            self._write_manifest()
        self._truncate_uncommitted()

    # -- internals -----------------------------------------------------------

    def _write_manifest(self) -> None:
        tmp = self.manifest_path.with_suffix(".json.tmp")
        data = json.dumps(self._manifest, sort_keys=True, indent=1)
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, self.manifest_path)
        _fsync_dir(self.root)

    def _truncate_uncommitted(self) -> None:
        """Drop physical lines past the commit point (crash leftovers)."""
        for seg in self._manifest["segments"]:
            path = self.events_dir / seg["file"]
            lines = path.read_text("utf-8").splitlines() if path.exists() else []
            if len(lines) > seg["count"]:
                with open(path, "w", encoding="utf-8") as fh:
                    for line in lines[: seg["count"]]:
                        fh.write(line + "\n")
                    fh.flush()
                    os.fsync(fh.fileno())
        known = {seg["file"] for seg in self._manifest["segments"]}
        for path in self.events_dir.glob("segment-*.ndjson"):
            if path.name not in known:
                path.unlink()

    def _open_segment(self) -> dict:
        segments = self._manifest["segments"]
        if not segments or segments[-1]["count"] >= self.segment_size:
            name = f"segment-{len(segments):06d}.ndjson"
            (self.events_dir / name).touch()
            segments.append({"file": name, "count": 0})
        return segments[-1]

    # -- write path ------------------------------------------------------------

    def committed(self) -> int:
        return int(self._manifest["committed"])

    def has_batch(self, batch_id: str) -> bool:
        return batch_id in self._manifest["batches"]

    def batch_range(self, batch_id: str) -> tuple[int, int] | None:
        r = self._manifest["batches"].get(batch_id)
        return (r[0], r[1]) if r else None

    def append(
        self, events: Sequence[CanonicalEvent], *, batch_id: str | None = None
    ) -> tuple[int, int]:
        """Append events durably; returns the contiguous [lo, hi) offset range.

        The manifest commit is the visibility point: on any failure before
        it, the in-memory state is restored from disk and the physical tail
        truncated, so the store snapshot is exactly the pre-call one.
        """
        lo = self.committed()
        try:
            remaining = list(events)
            while remaining:
                seg = self._open_segment()
                room = self.segment_size - seg["count"]
                chunk, remaining = remaining[:room], remaining[room:]
                path = self.events_dir / seg["file"]
                with open(path, "a", encoding="utf-8") as fh:
                    for event in chunk:
                        fh.write(to_canonical_line(event) + "\n")
                    fh.flush()
                    os.fsync(fh.fileno())
                seg["count"] += len(chunk)
            hi = lo + len(events)
            self._manifest["committed"] = hi
            if batch_id is not None:
                self._manifest["batches"][batch_id] = [lo, hi]
            self._commit()
        except Exception as exc:
            self._recover()
            if isinstance(exc, StoreUnavailable):
                raise
            raise StoreUnavailable(str(exc)) from exc
        return (lo, hi)

    def _commit(self) -> None:
        """Manifest write, split out so failure injection can target it."""
        self._write_manifest()

    def _recover(self) -> None:
        """Reload the on-disk manifest and drop any uncommitted tail."""
        if self.manifest_path.exists():
            self._manifest = json.loads(self.manifest_path.read_text("utf-8"))
        self._truncate_uncommitted()

    # -- read path -------------------------------------------------------------

    def read(self, lo: int = 0, hi: int | None = None) -> Iterator[CanonicalEvent]:
        for _, line in self.read_lines(lo, hi):
            yield parse_canonical_line(line)

    def read_lines(self, lo: int = 0, hi: int | None = None) -> Iterator[tuple[int, str]]:
        """Yield (offset, canonical line) for committed offsets in [lo, hi)."""
        committed = self.committed()
        hi = committed if hi is None else min(hi, committed)
        offset = 0
        for seg in self._manifest["segments"]:
            if offset >= hi:
                break
            if offset + seg["count"] <= lo:
                offset += seg["count"]
                continue
            path = self.events_dir / seg["file"]
            with open(path, "r", encoding="utf-8") as fh:
                for i, line in enumerate(fh):
                    if i >= seg["count"]:
                        break
                    pos = offset + i
                    if lo <= pos < hi:
                        yield pos, line.rstrip("\n")
            offset += seg["count"]

    def query(self, flt: QueryFilter) -> list[CanonicalEvent]:
        """Events matching every present filter field, time-ascending
        (store offset as tiebreak)."""
        hits = [
            (event.event_time, offset, event)
            for offset, event in enumerate(self.read())
            if flt.matches(event)
        ]
        hits.sort(key=lambda h: (h[0], h[1]))
        return [h[2] for h in hits]

    # -- projections -------------------------------------------------------------

    def project_tables(self, lo: int, hi: int) -> dict[str, int]:
        """Project [lo, hi) into the structured tables; returns per-table row
        deltas. Idempotent: already-projected offsets contribute nothing."""
        if lo < 0 or hi > self.committed() or lo > hi:
            raise RangeNotFound(f"range [{lo}, {hi}) outside committed log")
        uncovered = self._uncovered(lo, hi)
        deltas = {name: 0 for name in TABLE_COLUMNS}
        rows: dict[str, list[tuple]] = {name: [] for name in TABLE_COLUMNS}
        for sub_lo, sub_hi in uncovered:
            for offset, event in zip(
                range(sub_lo, sub_hi),
                self.read(sub_lo, sub_hi),
            ):
                routed = _route(event)
                if routed is None:
                    continue
                table, values = routed
                rows[table].append((offset, *values))
                deltas[table] += 1
        for name, new_rows in rows.items():
            if new_rows:
                self._append_rows(name, new_rows)
        if uncovered:
            merged = _merge_intervals(
                [tuple(r) for r in self._manifest["projected"]] + uncovered
            )
            self._manifest["projected"] = [list(r) for r in merged]
            self._write_manifest()
        return deltas

    def _uncovered(self, lo: int, hi: int) -> list[tuple[int, int]]:
        if lo == hi:
            return []
        covered = sorted(tuple(r) for r in self._manifest["projected"])
        out: list[tuple[int, int]] = []
        cursor = lo
        for c_lo, c_hi in covered:
            if c_hi <= cursor:
                continue
            if c_lo >= hi:
                break
            if c_lo > cursor:
                out.append((cursor, min(c_lo, hi)))
            cursor = max(cursor, c_hi)
            if cursor >= hi:
                break
        if cursor < hi:
            out.append((cursor, hi))
        return out

    def _append_rows(self, table: str, new_rows: list[tuple]) -> None:
        path = self.tables_dir / f"{table}.tsv"
        fresh = not path.exists()
        with open(path, "a", encoding="utf-8") as fh:
            if fresh:
                fh.write("\t".join(TABLE_COLUMNS[table]) + "\n")
            for row in new_rows:
                fh.write("\t".join(str(v) for v in row) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def read_table(self, table: str) -> list[dict[str, str]]:
        path = self.tables_dir / f"{table}.tsv"
        if not path.exists():
            return []
        lines = path.read_text("utf-8").splitlines()
        header = lines[0].split("\t")
        return [dict(zip(header, line.split("\t"))) for line in lines[1:]]

    # -- export ------------------------------------------------------------------

    def export_snapshot(self, path: Path | str) -> ExportManifest:
        """Canonical NDJSON dump of the committed log; deterministic."""
        digest = hashlib.sha256()
        count = 0
        try:
            with open(path, "wb") as fh:
                for _, line in self.read_lines():
                    data = (line + "\n").encode("utf-8")
                    fh.write(data)
                    digest.update(data)
                    count += 1
                fh.flush()
                os.fsync(fh.fileno())
        except OSError as exc:
            raise ExportFailed(str(exc)) from exc
        return ExportManifest(event_count=count, sha256=digest.hexdigest())


def _route(event: CanonicalEvent) -> tuple[str, tuple] | None:
    """Map one event to its structured-table row, or None for log-only types."""
    if event.event_type not in TABLE_EVENT_TYPES:
        return None
    ext = event.extensions
    if event.event_type == "NavigationEvent" and event.action == "Enrolled":
        return (
            "enrollment",
            (
                event.actor.id,
                event.group,
                event.membership_role,
                ext.get("birth_year", ""),
                event.actor.institution or "",
            ),
        )
    if event.event_type == "AssessmentEvent":
        if event.action == "Surveyed":
            return (
                "survey",
                (event.actor.id, ext.get("instrument", ""), ext.get("score", ""),
                 event.event_time),
            )
        return (
            "assessments",
            (event.actor.id, event.group, event.object.id, ext.get("score", ""),
             event.event_time),
        )
    return (
        "interactions",
        (event.actor.id, event.ed_app, event.group, event.action,
         event.event_time, event.object.id),
    )


def _merge_intervals(ranges: list[tuple[int, int]]) -> list[tuple[int, int]]:
    ranges = sorted(r for r in ranges if r[0] < r[1])
    out: list[tuple[int, int]] = []
    for lo, hi in ranges:
        if out and lo <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], hi))
        else:
            out.append((lo, hi))
    return out

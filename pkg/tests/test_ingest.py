from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from a4l import ingest, model, store

from conftest import make_vaults


def make_batch(payload: str | bytes, *, source="lms", fmt="csv",
               institution="gt", batch_id="b-1") -> ingest.SourceBatch:
    if isinstance(payload, str):
        payload = payload.encode("utf-8")
    return ingest.SourceBatch(
        batch_id=batch_id,
        source=source,
        institution=institution,
        format=fmt,
        payload=payload,
        manifest=ingest.BatchManifest("tester", "2025-09-01T00:00:00.000Z", -1),
    )


LMS_HEADER = "student_id,course_id,activity,score,timestamp\n"


def tool_line(i: int, *, actor="gt-stu-00001", text=None) -> str:
    doc = {
        "event_type": "MessageEvent",
        "actor": {"id": actor, "actor_type": "Person", "institution": "gt"},
        "action": "Asked",
        "object": {"id": f"q-{i}", "object_type": "Question"},
        "event_time": "2025-09-01T10:00:00.000Z",
        "ed_app": "jill-watson",
        "group": "bio-1011",
        "membership_role": "Learner",
    }
    if text is not None:
        doc["text"] = text
    return json.dumps(doc)


class TestParseLms:
    def test_two_valid_rows(self):
        payload = (LMS_HEADER
                   + "s1,bio-1011,quiz:hw1,88,2025-09-01T10:00:00Z\n"
                   + "s2,bio-1011,view:unit-1,,2025-09-01T11:00:00Z\n")
        candidates, quarantine = ingest.parse_lms_export(make_batch(payload))
        assert len(candidates) == 2
        assert quarantine == []
        assert candidates[0].event_type == "AssessmentEvent"
        assert candidates[1].event_type == "NavigationEvent"

    def test_bad_timestamp_quarantined(self):
        payload = LMS_HEADER + "s1,bio-1011,quiz:hw1,88,not-a-date\n"
        candidates, quarantine = ingest.parse_lms_export(make_batch(payload))
        assert candidates == []
        assert len(quarantine) == 1
        assert quarantine[0].reason == "timestamp-parse"

    def test_missing_header(self):
        with pytest.raises(ingest.BadHeader):
            ingest.parse_lms_export(
                make_batch("s1,bio-1011,quiz,88,2025-09-01T10:00:00Z\n")
            )

    def test_bad_encoding(self):
        with pytest.raises(ingest.BadEncoding):
            ingest.parse_lms_export(make_batch(b"\xff\xfe broken"))

    def test_raw_id_preserved_pre_privacy(self):
        payload = LMS_HEADER + "raw-student-7,bio-1011,enrollment,1999,2025-09-01T10:00:00Z\n"
        candidates, _ = ingest.parse_lms_export(make_batch(payload))
        assert candidates[0].actor.id == "raw-student-7"
        assert candidates[0].extensions["birth_year"] == 1999

    def test_score_out_of_range(self):
        payload = LMS_HEADER + "s1,bio-1011,quiz:hw1,130,2025-09-01T10:00:00Z\n"
        _, quarantine = ingest.parse_lms_export(make_batch(payload))
        assert quarantine[0].reason == "score-range"

    def test_unknown_activity(self):
        payload = LMS_HEADER + "s1,bio-1011,party,0,2025-09-01T10:00:00Z\n"
        _, quarantine = ingest.parse_lms_export(make_batch(payload))
        assert quarantine[0].reason == "activity-unknown"

    def test_conservation_rows(self):
        payload = (LMS_HEADER
                   + "s1,bio-1011,quiz:hw1,88,2025-09-01T10:00:00Z\n"
                   + "s2,bio-1011,oops,0,2025-09-01T10:00:00Z\n"
                   + ",bio-1011,quiz:hw1,70,2025-09-01T10:00:00Z\n")
        candidates, quarantine = ingest.parse_lms_export(make_batch(payload))
        assert len(candidates) + len(quarantine) == 3


def forum_payload(posts) -> str:
    return json.dumps(posts)


def forum_post(i: int, likes=(), **overrides) -> dict:
    doc = {
        "post_id": f"post-{i}",
        "author_id": "gt-stu-00003",
        "thread_id": "th-1",
        "course_id": "bio-1011",
        "body": "anyone up for a study group",
        "created_at": "2025-09-01T12:00:00Z",
        "likes": list(likes),
    }
    doc.update(overrides)
    return doc


class TestParseForum:
    def test_empty_array(self):
        candidates, quarantine = ingest.parse_forum_dump(
            make_batch("[]", source="forum", fmt="json")
        )
        assert (len(candidates), len(quarantine)) == (0, 0)

    def test_one_post_two_likes_three_candidates(self):
        likes = [{"user_id": "u1", "liked_at": "2025-09-01T13:00:00Z"},
                 {"user_id": "u2", "liked_at": "2025-09-01T14:00:00Z"}]
        candidates, quarantine = ingest.parse_forum_dump(
            make_batch(forum_payload([forum_post(0, likes)]), source="forum", fmt="json")
        )
        assert len(candidates) == 3
        assert quarantine == []
        assert [c.action for c in candidates] == ["Posted", "Liked", "Liked"]

    def test_likes_attributed_to_author(self):
        likes = [{"user_id": "someone-else", "liked_at": "2025-09-01T13:00:00Z"}]
        candidates, _ = ingest.parse_forum_dump(
            make_batch(forum_payload([forum_post(0, likes)]), source="forum", fmt="json")
        )
        like = candidates[1]
        assert like.actor.id == "gt-stu-00003"
        assert "someone-else" not in model.to_canonical_line(like)

    def test_reply_action(self):
        post = forum_post(1, reply_to="post-0")
        candidates, _ = ingest.parse_forum_dump(
            make_batch(forum_payload([post]), source="forum", fmt="json")
        )
        assert candidates[0].action == "Replied"

    def test_non_array_root(self):
        with pytest.raises(ingest.BadShape):
            ingest.parse_forum_dump(make_batch("{}", source="forum", fmt="json"))

    def test_orphaned_likes_quarantined(self):
        bad = forum_post(0, likes=[{"user_id": "u", "liked_at": "2025-09-01T13:00:00Z"}])
        del bad["author_id"]
        candidates, quarantine = ingest.parse_forum_dump(
            make_batch(forum_payload([bad]), source="forum", fmt="json")
        )
        assert candidates == []
        reasons = sorted(q.reason for q in quarantine)
        assert reasons == ["orphaned-like", "post-missing-author_id"]


class TestParseTool:
    def test_single_well_formed_line(self):
        candidates, quarantine = ingest.parse_tool_events(
            make_batch(tool_line(0) + "\n", source="tool", fmt="ndjson")
        )
        assert len(candidates) == 1
        assert quarantine == []

    def test_invalid_json_line(self):
        candidates, quarantine = ingest.parse_tool_events(
            make_batch("{nope\n", source="tool", fmt="ndjson")
        )
        assert candidates == []
        assert quarantine[0].reason == "parse-error"

    def test_mixed_file_seven_good_three_bad(self):
        lines = [tool_line(i) for i in range(7)]
        lines.insert(2, "{broken")
        lines.insert(5, json.dumps({"event_type": "MessageEvent"}))
        lines.append("[1,2,3]")
        payload = "\n".join(lines) + "\n"
        candidates, quarantine = ingest.parse_tool_events(
            make_batch(payload, source="tool", fmt="ndjson")
        )
        assert len(candidates) == 7
        assert len(quarantine) == 3

    def test_event_id_assigned_deterministically(self):
        batch = make_batch(tool_line(0) + "\n", source="tool", fmt="ndjson")
        first, _ = ingest.parse_tool_events(batch)
        second, _ = ingest.parse_tool_events(batch)
        assert first[0].event_id == second[0].event_id


class TestIngestBatch:
    def run(self, tmp_path, payload, *, source="tool", fmt="ndjson", batch_id="b-1",
            log=None, vaults=None):
        log = log or store.EventLog(tmp_path / "data")
        vaults = vaults or make_vaults()
        receipt = ingest.ingest_batch(
            make_batch(payload, source=source, fmt=fmt, batch_id=batch_id),
            store=log, vaults=vaults, rosters=(),
        )
        return receipt, log, vaults

    def test_five_event_tool_batch(self, tmp_path):
        payload = "\n".join(tool_line(i) for i in range(5)) + "\n"
        receipt, log, _ = self.run(tmp_path, payload)
        assert receipt.accepted == 5
        assert receipt.quarantined == 0
        assert (receipt.offset_lo, receipt.offset_hi) == (0, 5)
        assert log.committed() == 5

    def test_duplicate_batch_id(self, tmp_path):
        payload = tool_line(0) + "\n"
        receipt, log, vaults = self.run(tmp_path, payload)
        before = log.export_snapshot(tmp_path / "before.ndjson")
        with pytest.raises(ingest.DuplicateBatch):
            ingest.ingest_batch(
                make_batch(payload, source="tool", fmt="ndjson", batch_id="b-1"),
                store=log, vaults=vaults, rosters=(),
            )
        after = log.export_snapshot(tmp_path / "after.ndjson")
        assert before == after

    def test_no_raw_ids_at_rest(self, tmp_path):
        payload = tool_line(0, actor="gt-stu-00123") + "\n"
        receipt, log, _ = self.run(tmp_path, payload)
        export = (tmp_path / "x.ndjson")
        log.export_snapshot(export)
        assert "gt-stu-00123" not in export.read_text("utf-8")

    def test_text_scrubbed_at_rest(self, tmp_path):
        payload = tool_line(0, text="mail me at a@b.edu") + "\n"
        receipt, log, _ = self.run(tmp_path, payload)
        stored = next(log.read())
        assert stored.text == "mail me at [EMAIL_1]"
        assert receipt.scrub_span_counts == {"email": 1}

    def test_stored_events_pass_at_rest_validation(self, tmp_path):
        payload = tool_line(0, actor="gt-stu-00123", text="ok") + "\n"
        _, log, _ = self.run(tmp_path, payload)
        report = model.validate_event(model.event_to_dict(next(log.read())))
        assert report.valid

    def test_future_event_quarantined(self, tmp_path):
        doc = json.loads(tool_line(0))
        doc["event_time"] = "2099-01-01T00:00:00.000Z"
        receipt, _, _ = self.run(tmp_path, json.dumps(doc) + "\n")
        assert receipt.accepted == 0
        assert receipt.quarantine[0].reason == "validation:timestamp-future"

    def test_atomicity_on_store_failure(self, tmp_path, monkeypatch):
        log = store.EventLog(tmp_path / "data")
        vaults = make_vaults()
        payload = tool_line(0) + "\n"
        ingest.ingest_batch(make_batch(payload, source="tool", fmt="ndjson",
                                       batch_id="seed"),
                            store=log, vaults=vaults, rosters=())
        before = log.export_snapshot(tmp_path / "before.ndjson")

        def boom():
            raise OSError("no space")

        monkeypatch.setattr(log, "_commit", boom)
        with pytest.raises(ingest.IngestUnavailable):
            ingest.ingest_batch(
                make_batch("\n".join(tool_line(i) for i in range(3)) + "\n",
                           source="tool", fmt="ndjson", batch_id="b-2"),
                store=log, vaults=vaults, rosters=(),
            )
        monkeypatch.undo()
        assert log.export_snapshot(tmp_path / "after.ndjson") == before
        assert not log.has_batch("b-2")

    def test_unsupported_pair(self, tmp_path):
        with pytest.raises(ingest.BadShape):
            self.run(tmp_path, "x", source="lms", fmt="ndjson")

    @given(st.data())
    @settings(max_examples=50, deadline=None)
    def test_conservation_under_corruption(self, tmp_path_factory, data):
        """accepted + quarantined == input records, whatever we corrupt."""
        tmp = tmp_path_factory.mktemp("conserve")
        n = data.draw(st.integers(min_value=1, max_value=20))
        lines = [tool_line(i) for i in range(n)]
        for idx in data.draw(st.lists(
            st.integers(min_value=0, max_value=n - 1), max_size=8
        )):
            mode = data.draw(st.integers(min_value=0, max_value=3))
            if mode == 0:
                lines[idx] = lines[idx][: max(1, len(lines[idx]) // 2)]
            elif mode == 1:
                lines[idx] = json.dumps({"event_type": "MessageEvent"})
            elif mode == 2:
                doc = json.loads(tool_line(idx))
                doc["event_time"] = "not-a-time"
                lines[idx] = json.dumps(doc)
            else:
                doc = json.loads(tool_line(idx))
                doc["action"] = "Yodeled"
                lines[idx] = json.dumps(doc)
        payload = "\n".join(lines) + "\n"
        log = store.EventLog(tmp / "data")
        receipt = ingest.ingest_batch(
            make_batch(payload, source="tool", fmt="ndjson", batch_id="fuzz"),
            store=log, vaults=make_vaults(), rosters=(),
        )
        assert receipt.accepted + receipt.quarantined == n
        assert receipt.accepted == log.committed()

    def test_receipt_wire_form_has_no_raw_fragments(self, tmp_path):
        payload = "{broken json with secret-raw-id\n" + tool_line(1) + "\n"
        receipt, _, _ = self.run(tmp_path, payload)
        wire = json.dumps(receipt.to_json())
        assert "secret-raw-id" not in wire
        assert receipt.quarantine[0].raw.startswith("{broken")

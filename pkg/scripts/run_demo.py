#!/usr/bin/env python3
"""End-to-end demo: corpus -> ingest -> jobs -> teacher feed, in one process.

Usage: python scripts/run_demo.py [workdir]
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

from a4l import analytics, config, ingest, synth
from a4l.service import ServiceState, build_feed, post_feedback


def main() -> None:
    work = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("demo-run")
    work.mkdir(parents=True, exist_ok=True)

    spec = synth.ScenarioSpec(
        seed=42, students=60, weeks=4,
        survey_n={"NFC": 50, "SE": 30},
        planted=synth.PlantedEffects(
            strategy_episodes={"systematic-search": 8, "decomposition": 8,
                               "global-local": 8}),
        pii=synth.PlantedPII(emails=10, phones=8, gov_ids=5, roster_mentions=8),
    )
    manifest = synth.generate(spec, work / "corpus")
    print(f"generated {manifest['records_total']} records in {work / 'corpus'}")

    doc = json.loads(Path("conf/example-config.json").read_text())
    doc["a4l.store.dir"] = str(work / "data")
    doc["a4l.jobs.file"] = "conf/jobs.json"
    doc["a4l.privacy.rosters_dir"] = str(work / "corpus" / "rosters")
    cfg_path = work / "config.json"
    cfg_path.write_text(json.dumps(doc, indent=1))

    state = ServiceState(config.load_config(cfg_path))
    for step in manifest["ingest_plan"]:
        receipt = state.ingest(ingest.SourceBatch(
            batch_id=f"demo:{step['file']}",
            source=step["source"], institution=step["institution"],
            format=step["format"],
            payload=(work / "corpus" / step["file"]).read_bytes(),
            manifest=ingest.BatchManifest("demo", "2025-09-01T00:00:00.000Z", -1),
        ))
        print(f"  ingested {step['file']}: accepted={receipt.accepted} "
              f"quarantined={receipt.quarantined}")

    executed = state.tick(1.0)
    print(f"scheduler ran jobs: {executed}")

    teacher = state.credentials["demo-teacher"]
    insight = next(r for r in analytics.read_results(state.results_path)
                   if r["metric_id"] == "adoption_rate_by_cohort")
    note_id = post_feedback(state, teacher, {
        "course": "bio-1011",
        "insight": {"metric_id": insight["metric_id"],
                    "window": insight["window"], "cohort": insight["cohort"]},
        "text": "Adding a lab walkthrough for the low-adoption cohort.",
    })
    state.tick(1000.0)

    feed = build_feed(state, teacher, "bio-1011")
    aggregates = [r for r in feed["results"] if "actor" not in r]
    print(f"\nteacher feed for bio-1011: {len(feed['results'])} rows "
          f"({len(aggregates)} aggregates), {len(feed['feedback'])} notes")
    for row in aggregates[:8]:
        if row.get("suppressed"):
            print(f"  {row['metric_id']:28s} [{row['reason']}]")
        else:
            shown = {k: round(v, 3) for k, v in list(row["values"].items())[:4]}
            print(f"  {row['metric_id']:28s} {row['cohort']['bucket']:12s} {shown}")
    print(f"  feedback note {note_id} visible: "
          f"{any(n['note_id'] == note_id for n in feed['feedback'])}")


if __name__ == "__main__":
    main()

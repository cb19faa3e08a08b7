#!/usr/bin/env python3
"""Planted-effect recovery report: generate, ingest, and compare analytics
output against the corpus manifest's ground truth.

Usage: python scripts/recover_effects.py [--seed N] [workdir]
"""

from __future__ import annotations

import argparse
import collections
import tempfile
from pathlib import Path

from a4l import analytics, ingest, privacy, store, synth
from a4l.store import QueryFilter

KEYS = {"gt": bytes(32), "tcsg": bytes.fromhex("a5" * 32)}


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("workdir", nargs="?", default=None)
    parser.add_argument("--seed", type=int, default=42)
    args = parser.parse_args()
    work = Path(args.workdir) if args.workdir else Path(tempfile.mkdtemp())

    spec = synth.ScenarioSpec(seed=args.seed)
    manifest = synth.generate(spec, work / "corpus")
    vaults = {k: privacy.IdentityVault(k, v) for k, v in KEYS.items()}
    rosters = privacy.load_rosters(work / "corpus" / "rosters")
    log = store.EventLog(work / "data")
    for step in manifest["ingest_plan"]:
        ingest.ingest_batch(
            ingest.SourceBatch(
                batch_id=step["file"], source=step["source"],
                institution=step["institution"], format=step["format"],
                payload=(work / "corpus" / step["file"]).read_bytes(),
                manifest=ingest.BatchManifest("x", "2025-09-01T00:00:00.000Z", -1),
            ),
            store=log, vaults=vaults, rosters=rosters,
        )
    window = manifest["window"]
    prov = analytics.Provenance(0, log.committed(), "report")

    print(f"seed={args.seed}  events={log.committed()}")
    print("\n== adoption by generation (tool: jill-watson) ==")
    flt = QueryFilter(tool="jill-watson", time_from=window["from"],
                      time_to=window["to"])
    for r in analytics.run_metric("adoption_rate_by_cohort", log, flt,
                                  provenance=prov):
        planted = manifest["planted"]["adoption"]["planted_rates"][r.cohort.bucket]
        print(f"  {r.cohort.bucket:10s} rate={r.values['rate']:.3f} "
              f"(planted {planted})  n={int(r.values['n'])} "
              f"p={r.values.get('p', float('nan')):.2e}")

    print("\n== trait correlation (NFC shift planted) ==")
    for r in analytics.run_metric("trait_adoption_correlation", log,
                                  QueryFilter(tool="jill-watson"),
                                  provenance=prov):
        marker = " <- planted shift" if r.cohort.bucket == "NFC" else ""
        print(f"  {r.cohort.bucket:4s} r_pb={r.values['r_pb']:+.3f} "
              f"p={r.values.get('p', float('nan')):.2e} "
              f"n={int(r.values['n'])}{marker}")

    print("\n== question complexity trend ==")
    planted_slope = manifest["planted"]["complexity"]["planted_slope"]
    for r in analytics.run_metric("question_complexity_trend", log,
                                  QueryFilter(tool="jill-watson",
                                              time_from=window["from"],
                                              time_to=window["to"]),
                                  provenance=prov):
        print(f"  {r.cohort.bucket:10s} slope={r.values['slope']:.4f}/week "
              f"(planted {planted_slope:.4f})  questions={int(r.values['n'])}")

    print("\n== strategy label recovery ==")
    forward: dict[str, str] = {}
    for vault in vaults.values():
        forward.update(vault._forward)
    truth = {(forward[e["actor_raw"]], e["session"]): e["template"]
             for e in manifest["planted"]["strategies"]["episodes"]}
    episodes: dict[tuple, list] = collections.defaultdict(list)
    for e in log.query(QueryFilter(tool="vera", event_type="ToolUseEvent")):
        if e.action == "Edited":
            episodes[(e.actor.id, str(e.extensions["session"]))].append(
                (e.event_time, str(e.extensions["parameter"]),
                 float(e.extensions["old_value"]),
                 float(e.extensions["new_value"])))
    tally: dict[str, list[int]] = collections.defaultdict(lambda: [0, 0])
    for key, rows in episodes.items():
        rows.sort()
        label = analytics.strategy_label([(p, o, n) for _, p, o, n in rows])
        planted = truth[key]
        tally[planted][1] += 1
        tally[planted][0] += int(label == planted)
    for template, (hit, total) in sorted(tally.items()):
        print(f"  {template:18s} {hit}/{total}")


if __name__ == "__main__":
    main()

from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from a4l import ingest, privacy, store, synth

GT_KEY = bytes(32)  # all-zero key: pins the HMAC known-answer checks
TCSG_KEY = bytes.fromhex("a5" * 32)

KEYS = {"gt": GT_KEY, "tcsg": TCSG_KEY}


def make_vaults() -> dict[str, privacy.IdentityVault]:
    return {inst: privacy.IdentityVault(inst, key) for inst, key in KEYS.items()}


def ingest_corpus(corpus_dir: Path, store_dir: Path):
    """Run a generated corpus through the full pipeline in manifest order."""
    import json

    manifest = json.loads((corpus_dir / "manifest.json").read_text("utf-8"))
    vaults = make_vaults()
    rosters = privacy.load_rosters(corpus_dir / "rosters")
    log = store.EventLog(store_dir)
    receipts = []
    for step in manifest["ingest_plan"]:
        payload = (corpus_dir / step["file"]).read_bytes()
        batch = ingest.SourceBatch(
            batch_id=f"{step['source']}:{step['file']}",
            source=step["source"],
            institution=step["institution"],
            format=step["format"],
            payload=payload,
            manifest=ingest.BatchManifest("tests", "2025-09-01T00:00:00.000Z", -1),
        )
        receipts.append(
            ingest.ingest_batch(batch, store=log, vaults=vaults, rosters=rosters)
        )
    return manifest, log, vaults, rosters, receipts


@pytest.fixture(scope="session")
def corpus(tmp_path_factory) -> dict:
    """Default planted-effect scenario, generated and ingested once."""
    root = tmp_path_factory.mktemp("corpus")
    spec = synth.ScenarioSpec()
    manifest = synth.generate(spec, root / "c")
    ingested = ingest_corpus(root / "c", root / "data")
    _, log, vaults, rosters, receipts = ingested
    return {
        "spec": spec,
        "dir": root / "c",
        "manifest": manifest,
        "store": log,
        "vaults": vaults,
        "rosters": rosters,
        "receipts": receipts,
    }

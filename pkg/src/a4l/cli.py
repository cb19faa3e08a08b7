"""Unified command line: synth, ingest, export, serve, run-jobs."""

from __future__ import annotations

import hashlib
import json
import signal
import sys
import threading
import time
from datetime import datetime, timezone
from pathlib import Path

import click

from . import ingest as ingest_mod
from . import synth as synth_mod
from .config import ConfigError, load_config
from .model import format_timestamp
from .service import ServiceState, create_app


def _state(config_path: str) -> ServiceState:
    try:
        config = load_config(config_path)
    except ConfigError as exc:
        for key, message in exc.diagnostics:
            click.echo(f"config error: {key}: {message}", err=True)
        sys.exit(2)
    return ServiceState(config)


@click.group()
def main() -> None:
    """Learning-telemetry pipeline operations."""


@main.command("synth")
@click.option("--spec", "spec_path", type=click.Path(exists=True), default=None,
              help="Scenario JSON; omit for the built-in default scenario.")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
def synth_cmd(spec_path: str | None, out_dir: str, seed: int | None) -> None:
    """Generate a synthetic corpus with a ground-truth manifest."""
    if spec_path:
        spec = synth_mod.load_scenario(spec_path)
    else:
        spec = synth_mod.ScenarioSpec()
    if seed is not None:
        spec = synth_mod.ScenarioSpec(**{**_spec_dict(spec), "seed": seed})
    manifest = synth_mod.generate(spec, out_dir)
    click.echo(json.dumps({
        "out": out_dir,
        "records_total": manifest["records_total"],
        "files": manifest["files"],
    }, indent=1))


def _spec_dict(spec: synth_mod.ScenarioSpec) -> dict:
    from dataclasses import asdict
    doc = asdict(spec)
    doc["planted"] = synth_mod.PlantedEffects(**doc["planted"])
    doc["pii"] = synth_mod.PlantedPII(**doc["pii"])
    return doc


@main.command("ingest")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--source", type=click.Choice(["lms", "forum", "tool"]), required=True)
@click.option("--institution", type=click.Choice(["gt", "tcsg"]), required=True)
@click.option("--file", "file_path", type=click.Path(exists=True), required=True)
@click.option("--batch-id", default=None,
              help="Defaults to a content-derived id, making retries idempotent.")
def ingest_cmd(config_path: str, source: str, institution: str,
               file_path: str, batch_id: str | None) -> None:
    """Ingest one source file as a batch."""
    state = _state(config_path)
    payload = Path(file_path).read_bytes()
    if batch_id is None:
        digest = hashlib.sha256(payload).hexdigest()[:16]
        batch_id = f"{source}:{Path(file_path).name}:{digest}"
    fmt = {"lms": "csv", "forum": "json", "tool": "ndjson"}[source]
    batch = ingest_mod.SourceBatch(
        batch_id=batch_id,
        source=source,
        institution=institution,
        format=fmt,
        payload=payload,
        manifest=ingest_mod.BatchManifest(
            uploader="cli",
            received_at=format_timestamp(datetime.now(timezone.utc)),
            declared_count=-1,
        ),
    )
    try:
        receipt = state.ingest(batch)
    except ingest_mod.DuplicateBatch:
        click.echo(f"duplicate batch {batch_id}; store unchanged", err=True)
        sys.exit(3)
    except (ingest_mod.BadHeader, ingest_mod.BadEncoding, ingest_mod.BadShape) as exc:
        click.echo(f"bad batch: {exc}", err=True)
        sys.exit(1)
    click.echo(json.dumps(receipt.to_json(), indent=1))


@main.command("export")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def export_cmd(config_path: str, out_path: str) -> None:
    """Dump the committed log as canonical NDJSON."""
    state = _state(config_path)
    manifest = state.store.export_snapshot(out_path)
    click.echo(json.dumps(
        {"out": out_path, "events": manifest.event_count, "sha256": manifest.sha256}
    ))


@main.command("run-jobs")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--once", is_flag=True, default=False,
              help="Run one tick now, ignoring job intervals.")
def run_jobs_cmd(config_path: str, once: bool) -> None:
    """Execute scheduled metric jobs."""
    state = _state(config_path)
    if once:
        for job in state.scheduler.jobs:
            job.last_run_at = None  # force due
        executed = state.tick()
        click.echo(json.dumps({"executed": executed,
                               "failures": [f.job_id for f in state.scheduler.failures]}))
        return
    interval = state.config.scheduler_tick_s
    click.echo(f"scheduler loop every {interval}s; Ctrl-C to stop")
    try:
        while True:
            state.tick()
            time.sleep(interval)
    except KeyboardInterrupt:
        pass


@main.command("serve")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
def serve_cmd(config_path: str) -> None:
    """Run the HTTP API with the background scheduler."""
    import uvicorn

    state = _state(config_path)
    app = create_app(state)
    stop = threading.Event()

    def scheduler_loop() -> None:
        while not stop.is_set():
            try:
                state.tick()
            except Exception as exc:  # transient I/O must not kill the loop
                click.echo(f"scheduler tick failed: {exc!r}", err=True)
            stop.wait(state.config.scheduler_tick_s)

    worker = threading.Thread(target=scheduler_loop, daemon=True, name="scheduler")
    worker.start()

    server = uvicorn.Server(uvicorn.Config(
        app, host="127.0.0.1", port=state.config.api_port, log_level="warning"
    ))

    def handle_term(signum, frame):  # graceful: store appends are already durable
        stop.set()
        server.should_exit = True

    signal.signal(signal.SIGTERM, handle_term)
    try:
        server.run()
    finally:
        stop.set()
        state.save_scheduler_state()


if __name__ == "__main__":
    main()

"""Learning-telemetry pipeline: ingest, privacy, store, analytics, serving."""

__version__ = "0.1.0"

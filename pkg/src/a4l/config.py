"""Configuration loading and validation.

The config document is flat JSON with dotted keys. Required:

    a4l.store.dir          store root directory
    a4l.api.port           HTTP port
    a4l.privacy.key.gt     32-byte hex key for the gt vault
    a4l.privacy.key.tcsg   32-byte hex key for the tcsg vault
    a4l.auth.tokens        [{token, principal_id, role, institution,
                             courses, can_deanonymize}]
    a4l.jobs.file          job registry path

Optional: a4l.privacy.rosters_dir (scrub rosters), a4l.scheduler.tick_s.
Validation reports every invalid key at once, not just the first.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .model import INSTITUTIONS

ROLES = ("Teacher", "Researcher", "Learner")

REQUIRED_KEYS = (
    "a4l.store.dir",
    "a4l.api.port",
    "a4l.privacy.key.gt",
    "a4l.privacy.key.tcsg",
    "a4l.auth.tokens",
    "a4l.jobs.file",
)


class ConfigError(ValueError):
    def __init__(self, diagnostics: list[tuple[str, str]]):
        self.diagnostics = diagnostics
        lines = "; ".join(f"{key}: {msg}" for key, msg in diagnostics)
        super().__init__(f"invalid configuration: {lines}")


@dataclass(frozen=True)
class TokenEntry:
    token: str
    principal_id: str
    role: str
    institution: str
    courses: tuple[str, ...] = ()
    can_deanonymize: bool = False


@dataclass(frozen=True)
class AppConfig:
    store_dir: Path
    api_port: int
    privacy_keys: dict[str, bytes]
    tokens: tuple[TokenEntry, ...]
    jobs_file: Path
    rosters_dir: Path | None = None
    scheduler_tick_s: float = 15.0


def load_config(path: Path | str) -> AppConfig:
    """Parse and validate a config file; raises ConfigError naming every
    missing or malformed key."""
    diagnostics: list[tuple[str, str]] = []
    try:
        doc = json.loads(Path(path).read_text("utf-8"))
    except FileNotFoundError:
        raise ConfigError([(str(path), "config file not found")]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([(str(path), f"not valid JSON: {exc}")]) from None
    if not isinstance(doc, dict):
        raise ConfigError([(str(path), "config root must be a JSON object")])

    for key in REQUIRED_KEYS:
        if key not in doc:
            diagnostics.append((key, "missing required key"))

    keys: dict[str, bytes] = {}
    for institution in INSTITUTIONS:
        key_name = f"a4l.privacy.key.{institution}"
        raw = doc.get(key_name)
        if raw is None:
            continue  # already reported as missing
        try:
            material = bytes.fromhex(str(raw))
        except ValueError:
            diagnostics.append((key_name, "must be hex"))
            continue
        if len(material) != 32:
            diagnostics.append((key_name, "must decode to exactly 32 bytes"))
            continue
        keys[institution] = material

    port = doc.get("a4l.api.port")
    if port is not None and (not isinstance(port, int) or not 1 <= port <= 65535):
        diagnostics.append(("a4l.api.port", "must be an integer port number"))

    tokens: list[TokenEntry] = []
    raw_tokens = doc.get("a4l.auth.tokens")
    if raw_tokens is not None:
        if not isinstance(raw_tokens, list):
            diagnostics.append(("a4l.auth.tokens", "must be a list"))
        else:
            for i, entry in enumerate(raw_tokens):
                where = f"a4l.auth.tokens[{i}]"
                if not isinstance(entry, dict):
                    diagnostics.append((where, "must be an object"))
                    continue
                missing = [k for k in ("token", "principal_id", "role", "institution")
                           if not entry.get(k)]
                if missing:
                    diagnostics.append((where, f"missing {', '.join(missing)}"))
                    continue
                if entry["role"] not in ROLES:
                    diagnostics.append((where, f"role must be one of {ROLES}"))
                    continue
                if entry["institution"] not in INSTITUTIONS:
                    diagnostics.append(
                        (where, f"institution must be one of {INSTITUTIONS}")
                    )
                    continue
                tokens.append(TokenEntry(
                    token=str(entry["token"]),
                    principal_id=str(entry["principal_id"]),
                    role=str(entry["role"]),
                    institution=str(entry["institution"]),
                    courses=tuple(entry.get("courses", ())),
                    can_deanonymize=bool(entry.get("can_deanonymize", False)),
                ))

    tick_s = doc.get("a4l.scheduler.tick_s", 15.0)
    if not isinstance(tick_s, (int, float)) or tick_s <= 0:
        diagnostics.append(("a4l.scheduler.tick_s", "must be a positive number"))

    if diagnostics:
        raise ConfigError(diagnostics)

    rosters = doc.get("a4l.privacy.rosters_dir")
    return AppConfig(
        store_dir=Path(doc["a4l.store.dir"]),
        api_port=int(doc["a4l.api.port"]),
        privacy_keys=keys,
        tokens=tuple(tokens),
        jobs_file=Path(doc["a4l.jobs.file"]),
        rosters_dir=Path(rosters) if rosters else None,
        scheduler_tick_s=float(tick_s),
    )

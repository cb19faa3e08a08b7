"""Pseudonymization, identity vaults, and PII scrubbing of free text.

Structured identifiers become deterministic keyed tokens
(`anon:<institution>:<22 base64url chars>`, HMAC-SHA-256 truncated to 128
bits). One vault per institution holds the reverse mapping, sealed on disk
with AES-GCM under the institution key; every reverse lookup is access-logged,
denials included.

Free text is scrubbed by regex families (published in docs/pii-rules.md)
plus case-insensitive word-boundary matching of roster name variants.
Nicknames or initials beyond the declared variants are a known recall
limitation. The scrubber sits behind the plain
``(text, rosters) -> (text, report)`` contract so a model-based detector
can replace it without touching callers.
"""

from __future__ import annotations

import base64
import hashlib
import hmac
import json
import re
from dataclasses import dataclass
from datetime import datetime, timezone
from functools import lru_cache
from pathlib import Path
from typing import Protocol, Sequence

from cryptography.hazmat.primitives.ciphers.aead import AESGCM

PSEUDONYM_PREFIX = "anon"
TOKEN_BYTES = 16  # truncated HMAC-SHA-256 output


class EmptyIdentifier(ValueError):
    """Raw identifier is empty."""


class VaultMismatch(ValueError):
    """Operation crossed institution boundaries."""


class PseudonymNotFound(KeyError):
    """No mapping recorded for the given token."""


class AccessDenied(PermissionError):
    """Credential lacks the role required for the operation."""


def derive_token(raw_id: str, institution: str, key: bytes) -> str:
    """Keyed token for (institution, raw_id): HMAC-SHA-256, 128-bit, base64url."""
    digest = hmac.new(key, f"{institution}:{raw_id}".encode("utf-8"), hashlib.sha256)
    truncated = digest.digest()[:TOKEN_BYTES]
    body = base64.urlsafe_b64encode(truncated).rstrip(b"=").decode("ascii")
    return f"{PSEUDONYM_PREFIX}:{institution}:{body}"


class Credential(Protocol):
    """What deanonymization needs to know about a caller."""

    principal_id: str
    can_deanonymize: bool


@dataclass
class AccessLogEntry:
    who: str
    when: str
    pseudonym: str
    granted: bool


class IdentityVault:
    """Per-institution pseudonym registry with an access-logged reverse map.

    Mutation (new mappings, log appends) happens under the single ingest
    writer; lookups of already-recorded tokens are read-only.
    """

    VERSION = 1
    _MAGIC = "A4L-VAULT"

    def __init__(self, institution: str, key: bytes):
        if len(key) != 32:
            raise ValueError("vault key must be 32 bytes")
        self.institution = institution
        self._key = key
        self._reverse: dict[str, str] = {}  # token -> raw id
        self._forward: dict[str, str] = {}  # raw id -> token
        self.access_log: list[AccessLogEntry] = []

    def pseudonymize(self, raw_id: str, institution: str | None = None) -> str:
        """Deterministic token for raw_id; records the forward mapping."""
        if not raw_id:
            raise EmptyIdentifier("raw identifier is empty")
        if institution is not None and institution != self.institution:
            raise VaultMismatch(
                f"vault is {self.institution}, caller said {institution}"
            )
        cached = self._forward.get(raw_id)
        if cached is not None:
            return cached
        token = derive_token(raw_id, self.institution, self._key)
        self._forward[raw_id] = token
        self._reverse[token] = raw_id
        return token

    def deanonymize(self, pseudonym: str, credential: Credential) -> str:
        """Reverse lookup; appends an access-log entry in all cases."""
        granted = bool(getattr(credential, "can_deanonymize", False))
        self.access_log.append(
            AccessLogEntry(
                who=credential.principal_id,
                when=datetime.now(timezone.utc).isoformat(),
                pseudonym=pseudonym,
                granted=granted,
            )
        )
        if not granted:
            raise AccessDenied("credential may not reverse pseudonyms")
        parts = pseudonym.split(":")
        if len(parts) == 3 and parts[0] == PSEUDONYM_PREFIX and parts[1] != self.institution:
            raise VaultMismatch(
                f"token institution {parts[1]} does not match vault {self.institution}"
            )
        try:
            return self._reverse[pseudonym]
        except KeyError:
            raise PseudonymNotFound(pseudonym) from None

    # -- sealed persistence: versioned header + AES-GCM payload -------------

    def save(self, path: Path) -> None:
        payload = json.dumps(
            {
                "reverse": self._reverse,
                "access_log": [vars(e) for e in self.access_log],
            },
            sort_keys=True,
        ).encode("utf-8")
        header = f"{self._MAGIC} v{self.VERSION} {self.institution}\n".encode("ascii")
        nonce = hashlib.sha256(payload + self._key).digest()[:12]
        sealed = AESGCM(self._key).encrypt(nonce, payload, header)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(base64.b64encode(nonce + sealed))
            fh.write(b"\n")

    @classmethod
    def load(cls, path: Path, institution: str, key: bytes) -> "IdentityVault":
        raw = Path(path).read_bytes()
        header, _, body = raw.partition(b"\n")
        expect = f"{cls._MAGIC} v{cls.VERSION} {institution}".encode("ascii")
        if header != expect:
            raise VaultMismatch(f"vault header {header!r} does not match {institution}")
        blob = base64.b64decode(body.strip())
        nonce, sealed = blob[:12], blob[12:]
        payload = AESGCM(key).decrypt(nonce, sealed, header + b"\n")
        doc = json.loads(payload)
        vault = cls(institution, key)
        vault._reverse = dict(doc["reverse"])
        vault._forward = {raw_id: tok for tok, raw_id in vault._reverse.items()}
        vault.access_log = [AccessLogEntry(**e) for e in doc["access_log"]]
        return vault


def pseudonymize(raw_id: str, institution: str, vault: IdentityVault) -> str:
    """Module-level convenience mirroring IdentityVault.pseudonymize."""
    return vault.pseudonymize(raw_id, institution)


def deanonymize(pseudonym: str, credential: Credential, vault: IdentityVault) -> str:
    return vault.deanonymize(pseudonym, credential)


# --- text scrubbing ---------------------------------------------------------

@dataclass(frozen=True)
class Roster:
    """Course roster; raw PII that never leaves the privacy boundary."""

    institution: str
    course_id: str
    people: tuple["RosterEntry", ...]


@dataclass(frozen=True)
class RosterEntry:
    raw_id: str
    display_name: str
    variants: tuple[str, ...] = ()

    def all_names(self) -> tuple[str, ...]:
        names = [self.display_name, *self.variants]
        return tuple(n for n in names if n)


@dataclass(frozen=True)
class ScrubSpan:
    start: int
    end: int
    category: str
    replacement: str


@dataclass(frozen=True)
class ScrubReport:
    spans: tuple[ScrubSpan, ...]


# Category order is claim precedence: an earlier family wins overlaps.
# The same patterns are published in docs/pii-rules.md (tests diff them).
PII_PATTERNS: list[tuple[str, str, re.Pattern[str]]] = [
    (
        "url-with-userinfo",
        "URL",
        re.compile(r"[A-Za-z][A-Za-z0-9+.-]*://[^\s/:@]+:[^\s/@]*@[^\s]+"),
    ),
    (
        "email",
        "EMAIL",
        re.compile(r"[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}"),
    ),
    (
        "phone",
        "PHONE",
        re.compile(r"(?<!\d)(?:\+?1[\s.-]?)?(?:\(\d{3}\)\s?|\d{3}[\s.-])\d{3}[\s.-]\d{4}(?!\d)"),
    ),
    (
        "gov-id-pattern",
        "ID",
        re.compile(r"(?<!\d)\d{3}-\d{2}-\d{4}(?!\d)"),
    ),
]

_ROSTER_CATEGORY = "roster-name"
_ROSTER_LABEL = "NAME"


@lru_cache(maxsize=32)
def _roster_matcher(
    rosters: tuple[Roster, ...]
) -> tuple[re.Pattern[str], dict[str, str]] | None:
    """One combined word-boundary pattern over every roster name variant.

    Longest variants come first in the alternation so "Alice Chen" wins over
    a bare "Alice" at the same position. Matched surfaces map back to the
    roster person (first declarer wins on shared names), which keys token
    assignment per person rather than per surface form.
    """
    surface_to_person: dict[str, str] = {}
    names: list[str] = []
    for roster in rosters:
        for entry in roster.people:
            person_key = f"{roster.institution}:{entry.raw_id}"
            for name in entry.all_names():
                surface_to_person.setdefault(name.lower(), person_key)
                names.append(name)
    if not names:
        return None
    unique = list(dict.fromkeys(sorted(names, key=len, reverse=True)))
    pattern = re.compile(
        r"\b(?:" + "|".join(re.escape(n) for n in unique) + r")\b", re.IGNORECASE
    )
    return pattern, surface_to_person


def scrub_text(
    text: str, rosters: Sequence[Roster] = ()
) -> tuple[str, ScrubReport]:
    """Replace PII spans with category-indexed tokens.

    Spans are reported in original-text coordinates, non-overlapping and
    ascending. The same surface form (or the same roster person, whatever
    the variant used) maps to the same token within one document; all
    non-PII bytes are preserved.
    """
    if not text:
        return text, ScrubReport(spans=())

    claimed: list[tuple[int, int, str, str]] = []  # start, end, category, key

    def overlaps(start: int, end: int) -> bool:
        return any(s < end and start < e for s, e, _, _ in claimed)

    for category, _label, pattern in PII_PATTERNS:
        for m in pattern.finditer(text):
            if not overlaps(m.start(), m.end()):
                claimed.append((m.start(), m.end(), category, m.group(0)))

    matcher = _roster_matcher(tuple(rosters))
    if matcher is not None:
        pattern, surface_to_person = matcher
        for m in pattern.finditer(text):
            if not overlaps(m.start(), m.end()):
                person_key = surface_to_person[m.group(0).lower()]
                claimed.append((m.start(), m.end(), _ROSTER_CATEGORY, person_key))

    if not claimed:
        return text, ScrubReport(spans=())

    claimed.sort(key=lambda c: c[0])
    labels = {cat: label for cat, label, _ in PII_PATTERNS}
    labels[_ROSTER_CATEGORY] = _ROSTER_LABEL
    counters: dict[str, int] = {}
    token_by_key: dict[tuple[str, str], str] = {}

    pieces: list[str] = []
    spans: list[ScrubSpan] = []
    cursor = 0
    for start, end, category, key in claimed:
        token = token_by_key.get((category, key))
        if token is None:
            counters[category] = counters.get(category, 0) + 1
            token = f"[{labels[category]}_{counters[category]}]"
            token_by_key[(category, key)] = token
        pieces.append(text[cursor:start])
        pieces.append(token)
        cursor = end
        spans.append(ScrubSpan(start=start, end=end, category=category, replacement=token))
    pieces.append(text[cursor:])
    return "".join(pieces), ScrubReport(spans=tuple(spans))


def load_rosters(directory: Path) -> list[Roster]:
    """Read every rosters/<course>.json file in a directory."""
    rosters: list[Roster] = []
    for path in sorted(Path(directory).glob("*.json")):
        doc = json.loads(path.read_text("utf-8"))
        rosters.append(
            Roster(
                institution=doc["institution"],
                course_id=doc["course_id"],
                people=tuple(
                    RosterEntry(
                        raw_id=p["raw_id"],
                        display_name=p["display_name"],
                        variants=tuple(p.get("variants", ())),
                    )
                    for p in doc["people"]
                ),
            )
        )
    return rosters

"""Captured permission tokens and the participant database built from them.

Capture files are JSON Lines, one record per line, keys sorted::

    {"dst": "10.0.0.2:7410", "guid": "<32 hex>", "permissions_b64": "...",
     "src": "10.0.0.1:7410", "subject_name": "CN=talker", "timestamp": "2024-01-01T00:00:00Z"}

Loading is a set union keyed by participant GUID, so captures taken on
different links at different times can be merged in any order.
"""
from __future__ import annotations

import base64
import binascii
import json
import re
from dataclasses import dataclass, field
from datetime import datetime

from .permissions import (
    PermissionsError,
    PermissionsFile,
    format_timestamp,
    parse_permissions,
    parse_timestamp,
    serialize_permissions,
)

_GUID = re.compile(r"^[0-9a-f]{32}$")
_FIELDS = ("dst", "guid", "permissions_b64", "src", "subject_name", "timestamp")


class CaptureError(ValueError):
    pass


class UnknownParticipant(KeyError):
    pass


@dataclass(frozen=True)
class CaptureRecord:
    timestamp: datetime
    source_address: str
    destination_address: str
    participant_guid: str
    subject_name: str
    permissions_document: bytes

    def __post_init__(self):
        if not _GUID.match(self.participant_guid):
            raise CaptureError(f"guid must be 32 lowercase hex digits: {self.participant_guid!r}")

    def to_json(self) -> str:
        return json.dumps({
            "dst": self.destination_address,
            "guid": self.participant_guid,
            "permissions_b64": base64.b64encode(self.permissions_document).decode("ascii"),
            "src": self.source_address,
            "subject_name": self.subject_name,
            "timestamp": format_timestamp(self.timestamp),
        }, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "CaptureRecord":
        obj = json.loads(line)
        if not isinstance(obj, dict) or set(obj) != set(_FIELDS):
            raise CaptureError(f"record fields must be exactly {', '.join(_FIELDS)}")
        return cls(
            timestamp=parse_timestamp(obj["timestamp"]),
            source_address=obj["src"],
            destination_address=obj["dst"],
            participant_guid=obj["guid"],
            subject_name=obj["subject_name"],
            permissions_document=base64.b64decode(obj["permissions_b64"], validate=True),
        )


def encode_records(records) -> bytes:
    return "".join(r.to_json() + "\n" for r in records).encode("utf-8")


def _decode_jsonl(frames: bytes) -> list[CaptureRecord]:
    out = []
    for i, line in enumerate(frames.decode("utf-8").splitlines()):
        if not line.strip():
            continue
        try:
            out.append(CaptureRecord.from_json(line))
        except (ValueError, KeyError, binascii.Error) as exc:
            raise CaptureError(f"record {i}: {exc}") from None
    return out


# Decoders turning an opaque byte stream into records.  Real RTPS frame
# decoding would register here.
CODECS = {"jsonl": _decode_jsonl}


def decode_adapter(frames: bytes, codec: str = "jsonl") -> list[CaptureRecord]:
    try:
        decoder = CODECS[codec]
    except KeyError:
        raise CaptureError(f"unknown codec {codec!r}; known: {', '.join(sorted(CODECS))}") from None
    return decoder(frames)


@dataclass
class ParticipantEntry:
    guid: str
    subject_name: str
    permissions: PermissionsFile
    document: bytes
    endpoints: set = field(default_factory=set)
    first_seen: datetime | None = None
    last_seen: datetime | None = None


@dataclass(frozen=True)
class Anomaly:
    guid: str
    kind: str
    detail: str


class ParticipantDatabase:
    """Participants keyed by GUID."""

    def __init__(self):
        self.participants: dict[str, ParticipantEntry] = {}
        self.anomalies: list[Anomaly] = []

    def __len__(self):
        return len(self.participants)

    def __contains__(self, guid):
        return guid in self.participants

    def ids(self) -> list[str]:
        return sorted(self.participants)

    def entry(self, guid: str) -> ParticipantEntry:
        try:
            return self.participants[guid]
        except KeyError:
            raise UnknownParticipant(guid) from None

    def permissions(self, guid: str) -> PermissionsFile:
        return self.entry(guid).permissions

    def resolve(self, name: str) -> str:
        """Find a participant by GUID, full subject name, or its CN value."""
        if name in self.participants:
            return name
        hits = []
        for guid, e in self.participants.items():
            cn = dict(part.split("=", 1) for part in e.subject_name.split(",") if "=" in part).get("CN")
            if name in (e.subject_name, cn):
                hits.append(guid)
        if len(hits) != 1:
            raise UnknownParticipant(name if not hits else f"{name} (ambiguous)")
        return hits[0]

    def latest_observation(self) -> datetime | None:
        seen = [e.last_seen for e in self.participants.values() if e.last_seen]
        return max(seen) if seen else None

    def add(self, rec: CaptureRecord, index: int = 0) -> None:
        try:
            perm = parse_permissions(rec.permissions_document)
        except PermissionsError as exc:
            raise CaptureError(f"record {index} (guid {rec.participant_guid}): {exc}") from None
        cur = self.participants.get(rec.participant_guid)
        if cur is None:
            self.participants[rec.participant_guid] = ParticipantEntry(
                rec.participant_guid, rec.subject_name, perm, rec.permissions_document,
                {rec.source_address}, rec.timestamp, rec.timestamp)
            return
        cur.endpoints.add(rec.source_address)
        if perm != cur.permissions:
            self.anomalies.append(Anomaly(rec.participant_guid, "conflicting-permissions",
                                          f"differing document observed at "
                                          f"{format_timestamp(rec.timestamp)}"))
            # keep the earliest observed document (ties: smaller bytes) so the
            # merge result does not depend on load order
            if (rec.timestamp, rec.permissions_document) < (cur.first_seen, cur.document):
                cur.permissions = perm
                cur.document = rec.permissions_document
                cur.subject_name = rec.subject_name
        cur.first_seen = min(cur.first_seen, rec.timestamp)
        cur.last_seen = max(cur.last_seen, rec.timestamp)

    def snapshot(self) -> dict:
        """Canonical, order-independent view used for equality checks and export."""
        return {
            guid: {
                "subject_name": e.subject_name,
                "permissions": serialize_permissions(e.permissions).decode("utf-8"),
                "endpoints": sorted(e.endpoints),
                "first_seen": format_timestamp(e.first_seen),
                "last_seen": format_timestamp(e.last_seen),
            }
            for guid, e in sorted(self.participants.items())
        }

    def to_json(self) -> str:
        return json.dumps({
            "participants": self.snapshot(),
            "anomalies": [a.__dict__ for a in self.anomalies],
        }, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ParticipantDatabase":
        obj = json.loads(text)
        db = cls()
        for guid, p in obj["participants"].items():
            doc = p["permissions"].encode("utf-8")
            db.participants[guid] = ParticipantEntry(
                guid, p["subject_name"], parse_permissions(doc), doc, set(p["endpoints"]),
                parse_timestamp(p["first_seen"]), parse_timestamp(p["last_seen"]))
        db.anomalies = [Anomaly(**a) for a in obj.get("anomalies", [])]
        return db


def load_capture(records, into: ParticipantDatabase | None = None):
    """Merge ``records`` into a database; returns ``(db, new_anomalies)``."""
    db = into if into is not None else ParticipantDatabase()
    before = len(db.anomalies)
    for i, rec in enumerate(records):
        if not isinstance(rec, CaptureRecord):
            raise CaptureError(f"record {i}: not a CaptureRecord")
        db.add(rec, i)
    return db, db.anomalies[before:]

"""Append-only event log: one JSON record per line, replayable.

The first line is a header carrying the schema version, the full pipeline
config (so replay is self-contained), a hash of that config, and the RNG
seed. Every following line is `{"seq":N,"kind":...,"at":...,"payload":{...}}`
with seq contiguous from 1.
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, TextIO

SCHEMA_VERSION = 1

KIND_VIDEO_INGESTED = "video_ingested"
KIND_SEGMENT_CREATED = "segment_created"
KIND_TASK_DISPATCHED = "task_dispatched"
KIND_VOTE_RECEIVED = "vote_received"
KIND_SEGMENT_FINALIZED = "segment_finalized"
KIND_VIDEO_FINALIZED = "video_finalized"
KIND_WORKER_REGISTERED = "worker_registered"
KIND_GOLD_INJECTED = "gold_injected"
EVENT_KINDS = frozenset(
    {
        KIND_VIDEO_INGESTED,
        KIND_SEGMENT_CREATED,
        KIND_TASK_DISPATCHED,
        KIND_VOTE_RECEIVED,
        KIND_SEGMENT_FINALIZED,
        KIND_VIDEO_FINALIZED,
        KIND_WORKER_REGISTERED,
        KIND_GOLD_INJECTED,
    }
)


class LogError(ValueError):
    """Malformed or non-contiguous event log."""


def canonical_json(value) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"))


def config_hash(config_doc: dict) -> str:
    return hashlib.sha256(canonical_json(config_doc).encode()).hexdigest()


@dataclass(frozen=True)
class Event:
    seq: int
    kind: str
    at: float
    payload: dict

    def to_line(self) -> str:
        return canonical_json({"seq": self.seq, "kind": self.kind, "at": self.at, "payload": self.payload})


class EventLogWriter:
    """Serialized appender; owns seq numbering."""

    def __init__(self, stream: TextIO, config_doc: dict, seed: int | None, autoflush: bool = False):
        self._stream = stream
        self._autoflush = autoflush
        self.next_seq = 1
        header = {
            "schema": SCHEMA_VERSION,
            "seed": seed,
            "config": config_doc,
            "config_hash": config_hash(config_doc),
        }
        self._stream.write(canonical_json(header) + "\n")
        if autoflush:
            self._stream.flush()

    @classmethod
    def to_path(cls, path: str | Path, config_doc: dict, seed: int | None, autoflush: bool = False):
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        return cls(p.open("w", encoding="utf-8"), config_doc, seed, autoflush=autoflush)

    def append(self, kind: str, at: float, payload: dict) -> Event:
        if kind not in EVENT_KINDS:
            raise LogError(f"unknown event kind {kind!r}")
        ev = Event(self.next_seq, kind, at, payload)
        self.next_seq += 1
        self._stream.write(ev.to_line() + "\n")
        if self._autoflush:
            self._stream.flush()
        return ev

    def flush(self) -> None:
        self._stream.flush()

    def close(self) -> None:
        self._stream.flush()
        self._stream.close()


class NullLogWriter:
    """Swallow events; used by replay, which must not re-log."""

    def __init__(self):
        self.next_seq = 1

    def append(self, kind: str, at: float, payload: dict) -> Event:
        ev = Event(self.next_seq, kind, at, payload)
        self.next_seq += 1
        return ev

    def flush(self) -> None:
        pass

    def close(self) -> None:
        pass


def parse_header(line: str) -> dict:
    try:
        header = json.loads(line)
    except json.JSONDecodeError as exc:
        raise LogError(f"malformed header line: {exc}") from exc
    if not isinstance(header, dict) or "schema" not in header or "seq" in header:
        raise LogError("first line is not a log header")
    if header["schema"] != SCHEMA_VERSION:
        raise LogError(f"unsupported schema version {header['schema']!r}")
    return header


def read_log(
    lines: Iterable[str], tolerate_torn_tail: bool = False
) -> tuple[dict, Iterator[Event], list[str]]:
    """Parse a log into (header, event iterator, warnings).

    Seq gaps and mid-stream corruption raise LogError. With
    tolerate_torn_tail a final unparseable line (a torn write from a crash)
    is dropped with a warning instead.
    """
    it = iter(lines)
    try:
        first = next(it)
    except StopIteration:
        raise LogError("empty log: missing header line")
    header = parse_header(first)
    warnings: list[str] = []

    def events() -> Iterator[Event]:
        expected = 1
        pending: str | None = None
        for raw in it:
            if pending is not None:
                raise LogError(f"malformed record at seq {expected}: {pending}")
            if raw.strip() == "":
                continue
            try:
                doc = json.loads(raw)
                ev = Event(int(doc["seq"]), str(doc["kind"]), float(doc["at"]), dict(doc["payload"]))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                if tolerate_torn_tail:
                    pending = str(exc)  # fatal only if another line follows
                    continue
                raise LogError(f"malformed record at seq {expected}: {exc}") from exc
            if ev.kind not in EVENT_KINDS:
                raise LogError(f"unknown event kind {ev.kind!r} at seq {ev.seq}")
            if ev.seq != expected:
                raise LogError(f"seq gap: expected {expected}, found {ev.seq}")
            expected += 1
            yield ev
        if pending is not None:
            warnings.append(f"dropped torn trailing record: {pending}")

    return header, events(), warnings


def read_log_file(path: str | Path, tolerate_torn_tail: bool = False) -> tuple[dict, list[Event], list[str]]:
    with Path(path).open("r", encoding="utf-8") as fh:
        header, events, warnings = read_log(fh, tolerate_torn_tail=tolerate_torn_tail)
        return header, list(events), warnings


def buffer_writer(config_doc: dict, seed: int | None) -> tuple[EventLogWriter, io.StringIO]:
    buf = io.StringIO()
    return EventLogWriter(buf, config_doc, seed), buf

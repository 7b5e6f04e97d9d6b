"""Durable, append-only session persistence.

Layout under the store root:

    <root>/index.json                 list of {id, created_at}, newest last
    <root>/sessions/<id>/trace.jsonl  one record per line, causal order
    <root>/sessions/<id>/sketch.png   the uploaded sketch, stored once

Each trace line is an envelope {"type", "step", "ts", "payload"}; the
record vocabulary and payload fields are documented in docs/trace-format.md.
Appends are flushed and fsynced before returning, so an acknowledged record
survives a crash. One writer per session is enforced with an in-process
lock; readers always observe a prefix of the trace.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable

RECORD_TYPES = frozenset(
    {
        "session_meta",
        "init_program",
        "critique",
        "candidate",
        "verdict",
        "revert",
        "override",
        "final",
    }
)

class StoreError(RuntimeError):
    pass


class UnknownSession(StoreError):
    pass


class OutOfOrderRecord(StoreError):
    """A record arrived for a step other than the current or the next one."""


@dataclass(frozen=True)
class TraceRecord:
    type: str
    step: int | None
    ts: str
    payload: dict
    seq: int = -1  # 0-based position in the trace file; assigned by the store

    def to_line(self) -> str:
        return json.dumps(
            {"type": self.type, "step": self.step, "ts": self.ts, "payload": self.payload},
            ensure_ascii=True,
        )

    @classmethod
    def from_line(cls, line: str, seq: int = -1) -> "TraceRecord":
        raw = json.loads(line)
        return cls(
            type=raw["type"],
            step=raw.get("step"),
            ts=raw.get("ts", ""),
            payload=raw.get("payload", {}),
            seq=seq,
        )


@dataclass(frozen=True)
class SessionTrace:
    session_id: str
    records: tuple[TraceRecord, ...]

    @property
    def meta(self) -> TraceRecord:
        return self.records[0]

    def of_type(self, record_type: str) -> list[TraceRecord]:
        return [r for r in self.records if r.type == record_type]


@dataclass(frozen=True)
class SessionSummary:
    session_id: str
    created_at: str
    phase: str
    step_count: int
    instruction: str


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


class SessionStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.sessions_dir = self.root / "sessions"
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        self._index_path = self.root / "index.json"
        self._global_lock = threading.Lock()
        self._session_locks: dict[str, threading.Lock] = {}
        # Per-session ordering state: (newest step seen, verdict seen for it)
        self._step_state: dict[str, tuple[int, bool]] = {}
        self._record_counts: dict[str, int] = {}

    # -- session lifecycle ---------------------------------------------------

    def create_session(self, config_payload: dict, sketch_png: bytes) -> str:
        session_id = str(uuid.uuid4())
        session_dir = self.sessions_dir / session_id
        session_dir.mkdir(parents=True)
        (session_dir / "sketch.png").write_bytes(sketch_png)
        digest = "sha256:" + hashlib.sha256(sketch_png).hexdigest()
        created_at = _utc_now()
        with self._session_lock(session_id):
            self._append_record(
                session_id,
                TraceRecord(
                    type="session_meta",
                    step=None,
                    ts=created_at,
                    payload={
                        "id": session_id,
                        "created_at": created_at,
                        "config": config_payload,
                        "sketch_digest": digest,
                    },
                ),
            )
        with self._global_lock:
            entries = self._read_index()
            entries.append({"id": session_id, "created_at": created_at})
            self._write_index(entries)
        return session_id

    def session_exists(self, session_id: str) -> bool:
        return (self.sessions_dir / session_id / "trace.jsonl").exists()

    def sketch_png(self, session_id: str) -> bytes:
        path = self.sessions_dir / session_id / "sketch.png"
        if not path.exists():
            raise UnknownSession(session_id)
        return path.read_bytes()

    # -- appends ---------------------------------------------------------------

    def append(self, session_id: str, record_type: str, step: int | None, payload: dict) -> TraceRecord:
        """Durably append one record; ordering is validated per session."""
        if record_type not in RECORD_TYPES:
            raise StoreError(f"unknown record type {record_type!r}")
        if not self.session_exists(session_id):
            raise UnknownSession(session_id)
        record = TraceRecord(type=record_type, step=step, ts=_utc_now(), payload=payload)
        with self._session_lock(session_id):
            self._check_order(session_id, record)
            record = self._append_record(session_id, record)
        return record

    def _check_order(self, session_id: str, record: TraceRecord) -> None:
        if record.step is None:
            return
        current, closed = self._step_state.get(session_id) or self._scan_step_state(session_id)
        self._step_state[session_id] = (current, closed)
        if record.step == current:
            if record.type == "verdict":
                self._step_state[session_id] = (current, True)
            return
        if record.step == current + 1 and closed:
            self._step_state[session_id] = (record.step, record.type == "verdict")
            return
        raise OutOfOrderRecord(
            f"record for step {record.step} ({record.type}) arrived while "
            f"step {current} is {'closed' if closed else 'open'}"
        )

    def _scan_step_state(self, session_id: str) -> tuple[int, bool]:
        current, closed = 0, True
        for record in self._iter_records(session_id):
            if record.step is None:
                continue
            if record.step > current:
                current, closed = record.step, False
            if record.step == current and record.type == "verdict":
                closed = True
        return current, closed

    def _append_record(self, session_id: str, record: TraceRecord) -> TraceRecord:
        path = self.sessions_dir / session_id / "trace.jsonl"
        if session_id not in self._record_counts:
            count = 0
            if path.exists():
                with open(path, "r", encoding="utf-8") as fh:
                    count = sum(1 for line in fh if line.strip())
            self._record_counts[session_id] = count
        seq = self._record_counts[session_id]
        record = TraceRecord(
            type=record.type, step=record.step, ts=record.ts,
            payload=record.payload, seq=seq,
        )
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(record.to_line() + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        self._record_counts[session_id] = seq + 1
        return record

    # -- reads -----------------------------------------------------------------

    def _iter_records(self, session_id: str) -> Iterable[TraceRecord]:
        path = self.sessions_dir / session_id / "trace.jsonl"
        if not path.exists():
            raise UnknownSession(session_id)
        seq = 0
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    yield TraceRecord.from_line(line, seq)
                    seq += 1

    def load_trace(self, session_id: str) -> SessionTrace:
        return SessionTrace(session_id, tuple(self._iter_records(session_id)))

    def list_sessions(self, phase: str | None = None) -> list[SessionSummary]:
        """All sessions, newest first, optionally filtered by phase."""
        with self._global_lock:
            entries = self._read_index()
        summaries = []
        for entry in reversed(entries):
            try:
                summary = self._summarize(entry["id"], entry["created_at"])
            except UnknownSession:
                continue
            if phase is None or summary.phase == phase:
                summaries.append(summary)
        return summaries

    def _summarize(self, session_id: str, created_at: str) -> SessionSummary:
        phase = "awaiting_step"
        step_count = 0
        instruction = ""
        for record in self._iter_records(session_id):
            if record.type == "session_meta":
                instruction = record.payload.get("config", {}).get("instruction", "")
            elif record.type == "verdict" and record.step:
                step_count = max(step_count, record.step)
            elif record.type == "final":
                phase = record.payload.get("phase", phase)
        return SessionSummary(
            session_id=session_id,
            created_at=created_at,
            phase=phase,
            step_count=step_count,
            instruction=instruction,
        )

    # -- internals ----------------------------------------------------------

    def _session_lock(self, session_id: str) -> threading.Lock:
        with self._global_lock:
            lock = self._session_locks.get(session_id)
            if lock is None:
                lock = threading.Lock()
                self._session_locks[session_id] = lock
            return lock

    def _read_index(self) -> list[dict]:
        if not self._index_path.exists():
            return []
        try:
            return json.loads(self._index_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            # Rebuild from the directory tree; the index is a cache.
            entries = []
            for session_dir in sorted(self.sessions_dir.iterdir()):
                trace = session_dir / "trace.jsonl"
                if trace.exists():
                    with open(trace, "r", encoding="utf-8") as fh:
                        first = fh.readline().strip()
                    if first:
                        meta = TraceRecord.from_line(first)
                        entries.append(
                            {
                                "id": session_dir.name,
                                "created_at": meta.payload.get("created_at", ""),
                            }
                        )
            entries.sort(key=lambda e: e["created_at"])
            return entries

    def _write_index(self, entries: list[dict]) -> None:
        tmp = self._index_path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(entries, indent=2), encoding="utf-8")
        tmp.replace(self._index_path)

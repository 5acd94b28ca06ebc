"""File-backed event log and snapshot.

One directory holds one run:

    events.jsonl        append-only, one JSON record per line
    snapshot.json       current global state, rewritten atomically per append
    config.json         the run configuration, written once at init

The snapshot is always the fold of the log from the initial state; the
``replay_check`` function re-derives it independently and compares byte
for byte, which is the primary corruption/consistency oracle.

Writes come from a single owner (the simulator's client side); readers
(gateway request handlers, the replay tool) re-open the files on demand
and never block the writer.  Records are appended as single complete
lines, so a reader sees either the state before or after an append,
never a torn record; a trailing partial line is ignored.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .model import (
    ConsistencyError,
    EventRecord,
    InvalidTarget,
    NotFoundError,
    SimConfig,
    Snapshot,
    SUMMARY_MANAGER_ELECTED,
    SUMMARY_SYSTEM_FAILED,
    ComponentRole,
    is_legal_transition,
)

EVENTS_FILE = "events.jsonl"
SNAPSHOT_FILE = "snapshot.json"
CONFIG_FILE = "config.json"


def dump_event_line(record: EventRecord) -> bytes:
    return (json.dumps(record.to_dict(), ensure_ascii=False) + "\n").encode("utf-8")


def dump_snapshot_bytes(snapshot: Snapshot) -> bytes:
    return (json.dumps(snapshot.to_dict(), ensure_ascii=False, indent=2) + "\n").encode("utf-8")


def fold_event(snapshot: Snapshot, record: EventRecord) -> None:
    """Apply one event to a snapshot in place.

    Raises ConsistencyError on an illegal status edge.  Role changes ride
    on the documented "manager elected" summary: the event's node becomes
    the Manager and whoever held the role before drops to Agent.
    """
    row = snapshot.row(record.node)
    if record.transition is not None:
        src, dst = record.transition
        if row.status != src:
            raise ConsistencyError(
                f"event {record.event_id}: transition from {src.value} but node "
                f"{record.node} is {row.status.value}"
            )
        if not is_legal_transition(src, dst):
            raise ConsistencyError(
                f"event {record.event_id}: {src.value}->{dst.value} is not a legal edge"
            )
        row.status = dst
    if record.summary == SUMMARY_MANAGER_ELECTED:
        for other in snapshot.rows:
            if other.role is ComponentRole.MANAGER:
                other.role = ComponentRole.AGENT
        row.role = ComponentRole.MANAGER
    if record.summary == SUMMARY_SYSTEM_FAILED:
        snapshot.system_failed = True
    row.last_event_id = record.event_id
    snapshot.tick = record.tick


def fold_events(config: SimConfig, records: list[EventRecord]) -> Snapshot:
    snapshot = Snapshot.initial(config)
    for record in records:
        fold_event(snapshot, record)
    return snapshot


@dataclass
class NodeEventPage:
    """Every event of one node, newest first."""

    node: int
    events: list[EventRecord] = field(default_factory=list)


class EventStore:
    """Writer/reader handle over one run directory.

    ``create`` truncates any previous run in the directory and owns the
    files for appending; ``open`` attaches read-only to an existing run.
    """

    def __init__(self, path: Path, config: SimConfig, writable: bool):
        self.path = Path(path)
        self.config = config
        self.writable = writable
        self._snapshot: Snapshot | None = None
        self._next_event_id = 1
        self._last_tick = 0

    # -- lifecycle ---------------------------------------------------------

    @classmethod
    def create(cls, path: str | Path, config: SimConfig) -> "EventStore":
        config.validate()
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        store = cls(path, config, writable=True)
        (path / CONFIG_FILE).write_bytes(
            (json.dumps(config.to_dict(), indent=2) + "\n").encode("utf-8")
        )
        (path / EVENTS_FILE).write_bytes(b"")
        store._snapshot = Snapshot.initial(config)
        store._write_snapshot()
        return store

    @classmethod
    def open(cls, path: str | Path) -> "EventStore":
        path = Path(path)
        config_path = path / CONFIG_FILE
        if not config_path.exists():
            raise NotFoundError(f"{path} does not contain a run (missing {CONFIG_FILE})")
        config = SimConfig.from_dict(json.loads(config_path.read_text("utf-8")))
        return cls(path, config, writable=False)

    @property
    def events_path(self) -> Path:
        return self.path / EVENTS_FILE

    @property
    def snapshot_path(self) -> Path:
        return self.path / SNAPSHOT_FILE

    # -- writes ------------------------------------------------------------

    def append(self, record: EventRecord) -> int:
        if not self.writable:
            raise ConsistencyError("store opened read-only")
        assert self._snapshot is not None
        if not record.summary:
            raise ConsistencyError("event summary must not be empty")
        if record.tick < self._last_tick:
            raise ConsistencyError(
                f"tick went backwards: {record.tick} after {self._last_tick}"
            )
        record.event_id = self._next_event_id
        # Validate against a copy so a rejected append leaves no trace.
        probe = Snapshot.from_dict(self._snapshot.to_dict())
        fold_event(probe, record)
        with self.events_path.open("ab") as fh:
            fh.write(dump_event_line(record))
            fh.flush()
        self._snapshot = probe
        self._next_event_id += 1
        self._last_tick = record.tick
        self._write_snapshot()
        return record.event_id

    def _write_snapshot(self) -> None:
        assert self._snapshot is not None
        tmp = self.snapshot_path.with_suffix(".json.tmp")
        tmp.write_bytes(dump_snapshot_bytes(self._snapshot))
        os.replace(tmp, self.snapshot_path)

    # -- reads -------------------------------------------------------------

    def read_global(self) -> Snapshot:
        if self.writable and self._snapshot is not None:
            return Snapshot.from_dict(self._snapshot.to_dict())
        return Snapshot.from_dict(json.loads(self.snapshot_path.read_text("utf-8")))

    def iter_events(self):
        if not self.events_path.exists():
            return
        with self.events_path.open("rb") as fh:
            for raw in fh:
                if not raw.endswith(b"\n"):
                    break  # torn trailing write; the next read will see it whole
                line = raw.decode("utf-8").strip()
                if not line:
                    continue
                yield EventRecord.from_dict(json.loads(line))

    def read_node(self, node: int) -> NodeEventPage:
        if not 0 <= node < self.config.node_count:
            raise InvalidTarget(
                f"node {node} out of range for {self.config.node_count} nodes"
            )
        events = [e for e in self.iter_events() if e.node == node]
        events.sort(key=lambda e: e.event_id, reverse=True)
        return NodeEventPage(node=node, events=events)

    def read_event(self, event_id: int) -> EventRecord:
        for event in self.iter_events():
            if event.event_id == event_id:
                return event
        raise NotFoundError(f"no event with id {event_id}")


@dataclass
class ReplayReport:
    """Outcome of independently re-folding a run directory."""

    agree: bool
    events_checked: int
    issues: list[str] = field(default_factory=list)

    def describe(self) -> str:
        verdict = "AGREE" if self.agree else "DISAGREE"
        lines = [f"replay: {verdict} ({self.events_checked} events checked)"]
        lines.extend(f"  - {issue}" for issue in self.issues)
        return "\n".join(lines)


def replay_check(path: str | Path) -> ReplayReport:
    """Fold events.jsonl from scratch and compare against snapshot.json.

    Reports byte-level agreement of the re-derived snapshot with the
    persisted one, plus any illegal transitions or corrupt log lines.
    """
    path = Path(path)
    issues: list[str] = []
    config_path = path / CONFIG_FILE
    if not config_path.exists():
        raise NotFoundError(f"{path} does not contain a run (missing {CONFIG_FILE})")
    config = SimConfig.from_dict(json.loads(config_path.read_text("utf-8")))

    snapshot = Snapshot.initial(config)
    checked = 0
    last_id = 0
    last_tick = 0
    events_path = path / EVENTS_FILE
    if events_path.exists():
        with events_path.open("rb") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.decode("utf-8", errors="replace").strip()
                if not line:
                    continue
                try:
                    record = EventRecord.from_dict(json.loads(line))
                except (json.JSONDecodeError, KeyError, ValueError) as exc:
                    issues.append(f"corrupt log line {lineno}: {exc}")
                    continue
                if record.event_id != last_id + 1:
                    issues.append(
                        f"line {lineno}: event_id {record.event_id} breaks sequence after {last_id}"
                    )
                if record.tick < last_tick:
                    issues.append(
                        f"line {lineno}: tick {record.tick} regresses from {last_tick}"
                    )
                try:
                    fold_event(snapshot, record)
                except ConsistencyError as exc:
                    issues.append(f"line {lineno}: {exc}")
                last_id = record.event_id
                last_tick = max(last_tick, record.tick)
                checked += 1
    else:
        issues.append(f"missing {EVENTS_FILE}")

    snapshot_path = path / SNAPSHOT_FILE
    if snapshot_path.exists():
        persisted = snapshot_path.read_bytes()
        derived = dump_snapshot_bytes(snapshot)
        if persisted != derived:
            issues.append("derived snapshot differs from persisted snapshot.json")
    else:
        issues.append(f"missing {SNAPSHOT_FILE}")

    return ReplayReport(agree=not issues, events_checked=checked, issues=issues)

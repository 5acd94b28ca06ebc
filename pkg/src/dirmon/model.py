"""Domain model shared by the simulator, event store, gateway, and injector.

The moving parts of a run are components (one per node, each holding a
detection/isolation/recovery role), the user threads they host, the
detection tools watching those threads, and the recovery tools that bring
components back.  Everything observable is an EventRecord; the current
global state is a Snapshot, which is always the fold of the event log.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field


class DirmonError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(DirmonError):
    """A run configuration violates one of its invariants."""


class InvalidTarget(DirmonError):
    """An operation names a node, thread, link, or tool that does not exist."""


class ConsistencyError(DirmonError):
    """An append would corrupt the store (illegal transition, tick regression)."""


class NotFoundError(DirmonError):
    """A read names an unknown event or node."""


class ProtocolError(DirmonError):
    """A malformed or out-of-order frame on the notification socket."""


class RunEnded(DirmonError):
    """The operation requires an active run but the run has ended."""


class ComponentRole(str, enum.Enum):
    MANAGER = "Manager"
    AGENT = "Agent"
    BACKUP_AGENT = "BackupAgent"


class ComponentStatus(str, enum.Enum):
    OK = "OK"
    FAULTY = "Faulty"
    ISOLATED = "Isolated"
    RECOVERING = "Recovering"
    KILLED = "Killed"


# The only status edges that may ever appear in an event log.  Detection
# makes a component Faulty; the net isolates it on the following tick;
# isolation resolves into a recovery window when a recovery tool applies
# and into Killed when none does; a recovery window ends in OK or Killed.
LEGAL_TRANSITIONS: frozenset[tuple[ComponentStatus, ComponentStatus]] = frozenset(
    {
        (ComponentStatus.OK, ComponentStatus.FAULTY),
        (ComponentStatus.FAULTY, ComponentStatus.ISOLATED),
        (ComponentStatus.ISOLATED, ComponentStatus.RECOVERING),
        (ComponentStatus.ISOLATED, ComponentStatus.KILLED),
        (ComponentStatus.RECOVERING, ComponentStatus.OK),
        (ComponentStatus.RECOVERING, ComponentStatus.KILLED),
    }
)

# Summary lines with machine meaning.  The snapshot fold keys on these, so
# they are part of the on-disk compatibility surface (see docs/FORMATS.md).
SUMMARY_MANAGER_ELECTED = "manager elected"
SUMMARY_SYSTEM_FAILED = "system failed"
SUMMARY_RUN_STARTED = "run started"
SUMMARY_RUN_ENDED = "run ended"


def is_legal_transition(src: ComponentStatus, dst: ComponentStatus) -> bool:
    return (src, dst) in LEGAL_TRANSITIONS


@dataclass(frozen=True, order=True)
class ThreadId:
    """A user thread, identified by its hosting node and a per-node index.

    Indices are never reused within a run: a restarted or relocated thread
    always gets a fresh identity.
    """

    node: int
    local_index: int

    def __str__(self) -> str:
        return f"{self.node}:{self.local_index}"

    @classmethod
    def parse(cls, text: str) -> "ThreadId":
        node_s, _, idx_s = text.partition(":")
        try:
            return cls(int(node_s), int(idx_s))
        except ValueError as exc:
            raise InvalidTarget(f"bad thread id {text!r}") from exc


class DtoolKind(str, enum.Enum):
    WATCHDOG_TIMER = "WatchdogTimer"
    TRAP_HANDLER = "TrapHandler"


class RtoolKind(str, enum.Enum):
    THREAD_RESTART = "ThreadRestart"
    NODE_REBOOT = "NodeReboot"


class TrapKind(str, enum.Enum):
    DIV_ZERO = "DivZero"
    SEG_VIOL = "SegViol"

    def describe(self) -> str:
        return {
            TrapKind.DIV_ZERO: "integer division by zero",
            TrapKind.SEG_VIOL: "segmentation violation",
        }[self]


@dataclass
class SimConfig:
    """Static shape of a run.

    ``unwatched_threads`` lists initial thread ids that get no detection
    tools at all; faults on those threads are silent, which is exactly the
    coverage hole the injection loop exists to expose.  ``no_recovery_nodes``
    lists nodes with no recovery tools installed: components there go from
    Isolated straight to Killed.
    """

    node_count: int
    manager_node: int
    backup_nodes: tuple[int, ...]
    watchdog_timeout_ticks: int = 3
    recovery_ticks: int = 2
    rng_seed: int = 0
    threads_per_node: int = 2
    seconds_per_tick: float = 1.0
    unwatched_threads: tuple[tuple[int, int], ...] = ()
    no_recovery_nodes: tuple[int, ...] = ()

    def validate(self) -> None:
        if self.node_count < 1:
            raise ConfigError(f"node_count must be positive, got {self.node_count}")
        if not 0 <= self.manager_node < self.node_count:
            raise ConfigError(
                f"manager_node {self.manager_node} out of range for {self.node_count} nodes"
            )
        if not self.backup_nodes:
            raise ConfigError("backup_nodes must not be empty")
        for node in self.backup_nodes:
            if not 0 <= node < self.node_count:
                raise ConfigError(f"backup node {node} out of range for {self.node_count} nodes")
        if self.manager_node in self.backup_nodes:
            raise ConfigError(f"manager_node {self.manager_node} also listed as backup")
        if len(set(self.backup_nodes)) != len(self.backup_nodes):
            raise ConfigError("backup_nodes contains duplicates")
        if self.watchdog_timeout_ticks < 1:
            raise ConfigError("watchdog_timeout_ticks must be >= 1")
        if self.recovery_ticks < 1:
            raise ConfigError("recovery_ticks must be >= 1")
        if self.threads_per_node < 1:
            raise ConfigError("threads_per_node must be >= 1")
        if self.seconds_per_tick <= 0:
            raise ConfigError("seconds_per_tick must be > 0")
        for node, idx in self.unwatched_threads:
            if not 0 <= node < self.node_count:
                raise ConfigError(f"unwatched thread names node {node}, out of range")
            if not 0 <= idx < self.threads_per_node:
                raise ConfigError(f"unwatched thread index {idx} out of range")
        for node in self.no_recovery_nodes:
            if not 0 <= node < self.node_count:
                raise ConfigError(f"no_recovery node {node} out of range")

    def role_of(self, node: int) -> ComponentRole:
        if node == self.manager_node:
            return ComponentRole.MANAGER
        if node in self.backup_nodes:
            return ComponentRole.BACKUP_AGENT
        return ComponentRole.AGENT

    def elapsed_seconds(self, tick: int) -> float:
        return tick * self.seconds_per_tick

    def to_dict(self) -> dict:
        return {
            "node_count": self.node_count,
            "manager_node": self.manager_node,
            "backup_nodes": list(self.backup_nodes),
            "watchdog_timeout_ticks": self.watchdog_timeout_ticks,
            "recovery_ticks": self.recovery_ticks,
            "rng_seed": self.rng_seed,
            "threads_per_node": self.threads_per_node,
            "seconds_per_tick": self.seconds_per_tick,
            "unwatched_threads": [list(t) for t in self.unwatched_threads],
            "no_recovery_nodes": list(self.no_recovery_nodes),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        cfg = cls(
            node_count=data["node_count"],
            manager_node=data["manager_node"],
            backup_nodes=tuple(data["backup_nodes"]),
            watchdog_timeout_ticks=data.get("watchdog_timeout_ticks", 3),
            recovery_ticks=data.get("recovery_ticks", 2),
            rng_seed=data.get("rng_seed", 0),
            threads_per_node=data.get("threads_per_node", 2),
            seconds_per_tick=data.get("seconds_per_tick", 1.0),
            unwatched_threads=tuple(tuple(t) for t in data.get("unwatched_threads", [])),
            no_recovery_nodes=tuple(data.get("no_recovery_nodes", [])),
        )
        cfg.validate()
        return cfg


@dataclass
class EventRecord:
    """One log line: a timestamped happening on one node.

    ``transition`` is present only for status changes and must be a legal
    edge.  ``summary`` is the one-line text shown on node pages; ``detail``
    is the long-form text behind it.  ``event_id`` is assigned by the store
    on append (0 means "not yet appended").
    """

    tick: int
    node: int
    component_id: str
    summary: str
    detail: str = ""
    transition: tuple[ComponentStatus, ComponentStatus] | None = None
    elapsed_seconds: float = 0.0
    event_id: int = 0

    def to_dict(self) -> dict:
        src, dst = self.transition if self.transition else (None, None)
        return {
            "event_id": self.event_id,
            "tick": self.tick,
            "elapsed_seconds": self.elapsed_seconds,
            "node": self.node,
            "component_id": self.component_id,
            "from": src.value if src else None,
            "to": dst.value if dst else None,
            "summary": self.summary,
            "detail": self.detail,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EventRecord":
        transition = None
        if data.get("from") is not None and data.get("to") is not None:
            transition = (ComponentStatus(data["from"]), ComponentStatus(data["to"]))
        return cls(
            event_id=data["event_id"],
            tick=data["tick"],
            elapsed_seconds=data["elapsed_seconds"],
            node=data["node"],
            component_id=data["component_id"],
            transition=transition,
            summary=data["summary"],
            detail=data.get("detail", ""),
        )


@dataclass
class SnapshotRow:
    node: int
    role: ComponentRole
    status: ComponentStatus
    last_event_id: int = 0

    def to_dict(self) -> dict:
        return {
            "node": self.node,
            "role": self.role.value,
            "status": self.status.value,
            "last_event_id": self.last_event_id,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SnapshotRow":
        return cls(
            node=data["node"],
            role=ComponentRole(data["role"]),
            status=ComponentStatus(data["status"]),
            last_event_id=data["last_event_id"],
        )


@dataclass
class Snapshot:
    """Current global state: one row per configured node.

    ``tick`` is the tick of the latest persisted event; the store learns
    time only through appends, so quiet ticks do not move it.
    """

    tick: int
    system_failed: bool
    rows: list[SnapshotRow] = field(default_factory=list)

    def row(self, node: int) -> SnapshotRow:
        for r in self.rows:
            if r.node == node:
                return r
        raise NotFoundError(f"no snapshot row for node {node}")

    def to_dict(self) -> dict:
        return {
            "tick": self.tick,
            "system_failed": self.system_failed,
            "nodes": [r.to_dict() for r in self.rows],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Snapshot":
        return cls(
            tick=data["tick"],
            system_failed=data["system_failed"],
            rows=[SnapshotRow.from_dict(r) for r in data["nodes"]],
        )

    @classmethod
    def initial(cls, config: SimConfig) -> "Snapshot":
        rows = [
            SnapshotRow(node=n, role=config.role_of(n), status=ComponentStatus.OK)
            for n in range(config.node_count)
        ]
        return cls(tick=0, system_failed=False, rows=rows)


def component_id_for(node: int) -> str:
    """Stable id of the net component hosted on a node (one per node)."""
    return f"dir-{node}"

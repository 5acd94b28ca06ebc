"""dirmon: a deterministic fault-tolerance sandbox.

A simulated multi-node application is guarded by a detection/isolation/
recovery net; everything it does lands in an append-only event store with
a folded snapshot; a gateway republishes the three-level view (global,
per-node, per-event) over HTTP with live push; and a fault injector closes
the inject -> observe -> conclude -> correct loop.
"""

from .model import (
    ComponentRole,
    ComponentStatus,
    ConfigError,
    ConsistencyError,
    DirmonError,
    EventRecord,
    InvalidTarget,
    LEGAL_TRANSITIONS,
    NotFoundError,
    ProtocolError,
    RunEnded,
    SimConfig,
    Snapshot,
    ThreadId,
    TrapKind,
)
from .faults import (
    FaultKind,
    FaultSpec,
    FeedbackReport,
    InjectionReceipt,
    Injector,
    LoopReport,
    RoutingClass,
    classify,
)
from .sim import System, elect_lowest_ok_backup
from .store import EventStore, NodeEventPage, fold_events, replay_check

__version__ = "0.1.0"

__all__ = [
    "ComponentRole",
    "ComponentStatus",
    "ConfigError",
    "ConsistencyError",
    "DirmonError",
    "EventRecord",
    "EventStore",
    "FaultKind",
    "FaultSpec",
    "FeedbackReport",
    "InjectionReceipt",
    "Injector",
    "InvalidTarget",
    "LEGAL_TRANSITIONS",
    "LoopReport",
    "NodeEventPage",
    "NotFoundError",
    "ProtocolError",
    "RoutingClass",
    "RunEnded",
    "SimConfig",
    "Snapshot",
    "System",
    "ThreadId",
    "TrapKind",
    "classify",
    "elect_lowest_ok_backup",
    "fold_events",
    "replay_check",
]

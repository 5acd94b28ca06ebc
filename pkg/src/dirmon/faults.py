"""Interactive fault injection: validate, route, schedule, observe.

Six fault kinds are supported.  Link failures and node reboots are
system-level: they act on the substrate directly.  Traps, thread kills,
and forced watchdog timeouts are application-level: they become Manager
directives and only execute while a Manager with status OK exists, so a
headless net swallows them (marker, no consequences).

Every accepted injection leaves a marker event in the log before any of
its consequences, which makes attribution deterministic: an event belongs
to an injection iff it concerns the same target nodes and falls inside the
observation window that starts at the marker.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Callable

from .model import (
    ComponentStatus,
    DirmonError,
    EventRecord,
    InvalidTarget,
    RunEnded,
    SimConfig,
    ThreadId,
    TrapKind,
    component_id_for,
)
from .sim import ScheduledFault, System
from .store import EventStore

DEFAULT_OBSERVATION_WINDOW = 50


class FaultKind(str, enum.Enum):
    DIV_ZERO = "divzero"
    SEG_VIOL = "segviol"
    LINK_FAILURE = "link-down"
    NODE_REBOOT = "reboot"
    THREAD_KILL = "kill-thread"
    WATCHDOG_TIMEOUT = "watchdog-timeout"


class RoutingClass(str, enum.Enum):
    SYSTEM_LEVEL = "SystemLevel"
    APPLICATION_LEVEL = "ApplicationLevel"


ROUTING: dict[FaultKind, RoutingClass] = {
    FaultKind.DIV_ZERO: RoutingClass.APPLICATION_LEVEL,
    FaultKind.SEG_VIOL: RoutingClass.APPLICATION_LEVEL,
    FaultKind.THREAD_KILL: RoutingClass.APPLICATION_LEVEL,
    FaultKind.WATCHDOG_TIMEOUT: RoutingClass.APPLICATION_LEVEL,
    FaultKind.LINK_FAILURE: RoutingClass.SYSTEM_LEVEL,
    FaultKind.NODE_REBOOT: RoutingClass.SYSTEM_LEVEL,
}

_THREAD_KINDS = (FaultKind.DIV_ZERO, FaultKind.SEG_VIOL, FaultKind.THREAD_KILL)


@dataclass
class FaultSpec:
    """One injection request: what to break and when."""

    kind: FaultKind
    target: tuple[int, ...]
    at_tick: int | None = None
    request_id: str = ""

    def validate(self, config: SimConfig) -> None:
        kind, target = self.kind, self.target
        if kind in _THREAD_KINDS:
            if len(target) != 2:
                raise InvalidTarget(f"{kind.value} needs a (node, thread) target, got {target}")
            node, idx = target
            self._check_node(node, config)
            if idx < 0:
                raise InvalidTarget(f"thread index {idx} must be non-negative")
        elif kind is FaultKind.LINK_FAILURE:
            if len(target) != 2:
                raise InvalidTarget(f"link-down needs two endpoints, got {target}")
            a, b = target
            self._check_node(a, config)
            self._check_node(b, config)
            if a == b:
                raise InvalidTarget("link endpoints must differ")
        elif kind is FaultKind.NODE_REBOOT:
            if len(target) != 1:
                raise InvalidTarget(f"reboot needs one node, got {target}")
            self._check_node(target[0], config)
        elif kind is FaultKind.WATCHDOG_TIMEOUT:
            if len(target) not in (1, 2):
                raise InvalidTarget(
                    f"watchdog-timeout needs a node or (node, thread) target, got {target}"
                )
            self._check_node(target[0], config)
        else:  # pragma: no cover - enum is closed
            raise InvalidTarget(f"unknown fault kind {kind}")

    @staticmethod
    def _check_node(node: int, config: SimConfig) -> None:
        if not 0 <= node < config.node_count:
            raise InvalidTarget(f"node {node} out of range for {config.node_count} nodes")

    def scope_nodes(self) -> frozenset[int]:
        """Nodes whose events are attributable to this injection."""
        if self.kind is FaultKind.LINK_FAILURE:
            return frozenset(self.target)
        return frozenset({self.target[0]})

    def target_text(self) -> str:
        if self.kind in _THREAD_KINDS or (
            self.kind is FaultKind.WATCHDOG_TIMEOUT and len(self.target) == 2
        ):
            return f"{self.target[0]}:{self.target[1]}"
        if self.kind is FaultKind.LINK_FAILURE:
            a, b = sorted(self.target)
            return f"{a}-{b}"
        return str(self.target[0])

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "target": list(self.target),
            "at_tick": self.at_tick,
            "request_id": self.request_id,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FaultSpec":
        try:
            kind = FaultKind(data["kind"])
        except (KeyError, ValueError):
            raise InvalidTarget(f"unknown fault kind {data.get('kind')!r}")
        target = data.get("target")
        if not isinstance(target, (list, tuple)) or not all(
            isinstance(x, int) and not isinstance(x, bool) for x in target
        ):
            raise InvalidTarget(f"target must be a list of integers, got {target!r}")
        at_tick = data.get("at_tick")
        if at_tick is not None and (not isinstance(at_tick, int) or isinstance(at_tick, bool)):
            raise InvalidTarget(f"at_tick must be an integer, got {at_tick!r}")
        return cls(
            kind=kind,
            target=tuple(target),
            at_tick=at_tick,
            request_id=str(data.get("request_id", "")),
        )


def classify(spec: FaultSpec) -> RoutingClass:
    """Routing class of a fault: pure, total over the six kinds."""
    return ROUTING[spec.kind]


@dataclass
class InjectionReceipt:
    request_id: str
    routing: RoutingClass
    scheduled_tick: int
    queued: bool
    spec: FaultSpec
    resulting_event_ids: list[int] = field(default_factory=list)
    _fault: ScheduledFault | None = None

    @property
    def marker_event_id(self) -> int | None:
        return self._fault.marker_id if self._fault else None

    def to_dict(self) -> dict:
        return {
            "request_id": self.request_id,
            "routing": self.routing.value,
            "scheduled_tick": self.scheduled_tick,
            "queued": self.queued,
            "marker_event_id": self.marker_event_id,
            "resulting_event_ids": list(self.resulting_event_ids),
            "spec": self.spec.to_dict(),
        }


@dataclass
class FeedbackReport:
    """What the log said about one injection, measured from its marker."""

    injection: FaultSpec
    detected: bool
    detection_latency_ticks: int | None
    isolation_latency_ticks: int | None
    recovery_latency_ticks: int | None
    final_status: ComponentStatus

    def to_dict(self) -> dict:
        return {
            "injection": self.injection.to_dict(),
            "detected": self.detected,
            "detection_latency_ticks": self.detection_latency_ticks,
            "isolation_latency_ticks": self.isolation_latency_ticks,
            "recovery_latency_ticks": self.recovery_latency_ticks,
            "final_status": self.final_status.value,
        }


# Named predicates usable from scenario files ("expect <name>").
PREDICATES: dict[str, Callable[[FeedbackReport], bool]] = {
    "detected": lambda r: r.detected,
    "undetected": lambda r: not r.detected,
    "recovered": lambda r: r.recovery_latency_ticks is not None
    and r.final_status is ComponentStatus.OK,
    "killed": lambda r: r.final_status is ComponentStatus.KILLED,
    "any": lambda r: True,
}


@dataclass
class LoopEntry:
    spec: FaultSpec
    receipt: InjectionReceipt
    report: FeedbackReport | None
    expectation: str
    passed: bool

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "receipt": self.receipt.to_dict(),
            "report": self.report.to_dict() if self.report else None,
            "expectation": self.expectation,
            "passed": self.passed,
        }


@dataclass
class LoopReport:
    entries: list[LoopEntry] = field(default_factory=list)
    aborted: bool = False

    @property
    def all_passed(self) -> bool:
        return not self.aborted and all(e.passed for e in self.entries)

    def to_dict(self) -> dict:
        return {
            "all_passed": self.all_passed,
            "aborted": self.aborted,
            "entries": [e.to_dict() for e in self.entries],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def render_table(self) -> str:
        header = f"{'#':<3} {'fault':<22} {'tick':>5} {'routing':<17} {'verdict':<8} feedback"
        lines = [header, "-" * len(header)]
        for i, entry in enumerate(self.entries, start=1):
            fault = f"{entry.spec.kind.value} {entry.spec.target_text()}"
            verdict = "pass" if entry.passed else "FAIL"
            if entry.report is None:
                feedback = "never executed"
            elif entry.report.detected:
                feedback = (
                    f"detected +{entry.report.detection_latency_ticks}t"
                    f" isolated +{entry.report.isolation_latency_ticks}t"
                    + (
                        f" recovered +{entry.report.recovery_latency_ticks}t"
                        if entry.report.recovery_latency_ticks is not None
                        else ""
                    )
                    + f" final={entry.report.final_status.value}"
                )
            else:
                feedback = f"undetected, final={entry.report.final_status.value}"
            lines.append(
                f"{i:<3} {fault:<22} {entry.receipt.scheduled_tick:>5} "
                f"{entry.receipt.routing.value:<17} {verdict:<8} {feedback}"
            )
        if self.aborted:
            lines.append("loop aborted: system reached the terminal failed state")
        lines.append(f"result: {'all satisfied' if self.all_passed else 'model unsatisfying'}")
        return "\n".join(lines)


class Injector:
    """Front door for faults against one running system."""

    def __init__(self, system: System, store: EventStore,
                 window_ticks: int = DEFAULT_OBSERVATION_WINDOW):
        self.system = system
        self.store = store
        self.window_ticks = window_ticks
        self.receipts: list[InjectionReceipt] = []
        self._next_request = 1

    # -- submission ---------------------------------------------------------

    def inject(self, spec: FaultSpec) -> InjectionReceipt:
        if self.system.terminal:
            raise RunEnded("system is in a terminal failed state; no further injections")
        spec.validate(self.system.config)
        scheduled_tick = spec.at_tick if spec.at_tick is not None else self.system.tick + 1
        if scheduled_tick <= self.system.tick:
            raise InvalidTarget(
                f"at_tick {scheduled_tick} already passed (current tick {self.system.tick})"
            )
        self._check_overlap(spec, scheduled_tick)
        if not spec.request_id:
            spec.request_id = f"inj-{self._next_request}"
        self._next_request += 1
        routing = classify(spec)
        marker = EventRecord(
            tick=scheduled_tick,
            node=self._marker_node(spec),
            component_id=component_id_for(self._marker_node(spec)),
            summary=f"fault injected: {spec.kind.value} {spec.target_text()}",
            detail=(
                f"request {spec.request_id} routed as {routing.value}; "
                f"scheduled for tick {scheduled_tick}"
            ),
        )
        fault = self.system.submit_fault(
            scheduled_tick=scheduled_tick,
            manager_gated=routing is RoutingClass.APPLICATION_LEVEL,
            marker=marker,
            apply=self._build_action(spec),
        )
        receipt = InjectionReceipt(
            request_id=spec.request_id,
            routing=routing,
            scheduled_tick=scheduled_tick,
            queued=routing is RoutingClass.APPLICATION_LEVEL and not self.system.manager_ok(),
            spec=spec,
            _fault=fault,
        )
        self.receipts.append(receipt)
        return receipt

    def _check_overlap(self, spec: FaultSpec, scheduled_tick: int) -> None:
        scope = spec.scope_nodes()
        window_end = scheduled_tick + self.window_ticks
        for receipt in self.receipts:
            other_end = receipt.scheduled_tick + self.window_ticks
            if receipt.spec.scope_nodes() & scope and not (
                window_end < receipt.scheduled_tick or scheduled_tick > other_end
            ):
                raise InvalidTarget(
                    f"injection overlaps request {receipt.request_id} on the same target "
                    f"within its {self.window_ticks}-tick observation window"
                )

    @staticmethod
    def _marker_node(spec: FaultSpec) -> int:
        if spec.kind is FaultKind.LINK_FAILURE:
            return min(spec.target)
        return spec.target[0]

    def _build_action(self, spec: FaultSpec) -> Callable[[System], None]:
        kind, target = spec.kind, spec.target

        def soft(fn: Callable[[System], object], describe: str) -> Callable[[System], None]:
            # Targets can legitimately vanish between scheduling and execution
            # (killed earlier, relocated, node rebooted); record that instead
            # of crashing the tick loop.
            def action(system: System) -> None:
                try:
                    fn(system)
                except InvalidTarget as exc:
                    system._emit(
                        self._marker_node(spec),
                        "injection had no effect",
                        f"{describe}: {exc}",
                    )

            return action

        if kind in (FaultKind.DIV_ZERO, FaultKind.SEG_VIOL):
            trap = TrapKind.DIV_ZERO if kind is FaultKind.DIV_ZERO else TrapKind.SEG_VIOL
            tid = ThreadId(*target)
            return soft(lambda s: s.raise_trap(tid, trap), f"trap on {tid}")
        if kind is FaultKind.THREAD_KILL:
            tid = ThreadId(*target)
            return soft(lambda s: s.kill_thread(tid), f"kill of {tid}")
        if kind is FaultKind.WATCHDOG_TIMEOUT:
            if len(target) == 2:
                tid = ThreadId(*target)
                return soft(lambda s: s.force_watchdog_timeout(tid), f"forced timeout on {tid}")

            def forced_on_node(system: System) -> None:
                armed = sorted(
                    t for t, wd in system.watchdogs.items()
                    if t.node == target[0] and wd.armed
                )
                if not armed:
                    raise InvalidTarget(f"no armed watchdog timer on node {target[0]}")
                system.force_watchdog_timeout(armed[0])

            return soft(forced_on_node, f"forced timeout on node {target[0]}")
        if kind is FaultKind.LINK_FAILURE:
            a, b = target
            return soft(lambda s: s.set_link(a, b, False), f"link {a}-{b} down")
        if kind is FaultKind.NODE_REBOOT:
            node = target[0]
            return soft(lambda s: s.reboot_node(node), f"reboot of node {node}")
        raise InvalidTarget(f"unknown fault kind {kind}")  # pragma: no cover

    # -- observation ---------------------------------------------------------

    def observe(self, receipt: InjectionReceipt) -> FeedbackReport:
        """Scan the log after the marker and measure the net's reaction."""
        marker_id = receipt.marker_event_id
        if marker_id is None:
            raise DirmonError(
                f"injection {receipt.request_id} has no marker in the log yet; step further"
            )
        marker_tick = receipt._fault.marker.tick
        horizon = marker_tick + self.window_ticks
        scope = receipt.spec.scope_nodes()

        attributed: list[EventRecord] = []
        for event in self.store.iter_events():
            if event.event_id <= marker_id or event.tick > horizon:
                continue
            if event.node in scope:
                attributed.append(event)
        receipt.resulting_event_ids = [e.event_id for e in attributed]

        detection = isolation = recovery = None
        detected_node = None
        for event in attributed:
            if event.transition is None:
                continue
            _, dst = event.transition
            if dst is ComponentStatus.FAULTY and detection is None:
                detection = event.tick - marker_tick
                detected_node = event.node
            elif dst is ComponentStatus.ISOLATED and isolation is None:
                isolation = event.tick - marker_tick
            elif (
                event.transition[0] is ComponentStatus.RECOVERING
                and recovery is None
            ):
                recovery = event.tick - marker_tick

        snapshot = self.store.read_global()
        status_node = detected_node if detected_node is not None else min(scope)
        return FeedbackReport(
            injection=receipt.spec,
            detected=detection is not None,
            detection_latency_ticks=detection,
            isolation_latency_ticks=isolation,
            recovery_latency_ticks=recovery,
            final_status=snapshot.row(status_node).status,
        )

    def step_until_settled(self, receipt: InjectionReceipt) -> None:
        """Run the clock until the injection's outcome is decidable: either
        its recovery completed (or the component died) or the observation
        window has elapsed."""
        horizon = receipt.scheduled_tick + self.window_ticks
        while self.system.tick < horizon and not self.system.terminal:
            events = self.system.step()
            if receipt.marker_event_id is None:
                continue
            for event in events:
                if event.node not in receipt.spec.scope_nodes() or event.transition is None:
                    continue
                src, dst = event.transition
                if src is ComponentStatus.RECOVERING or dst is ComponentStatus.KILLED:
                    return

    # -- the assessment loop ---------------------------------------------------

    def run_loop(self, scenario: list[tuple[FaultSpec, str | Callable]]) -> LoopReport:
        """Inject, observe, and judge each scenario entry in turn.

        A predicate may be a name from PREDICATES or any callable over the
        FeedbackReport.  Correcting the design is the operator's move: this
        returns the evidence and leaves the configuration to them.
        """
        if not scenario:
            raise DirmonError("scenario must not be empty")
        report = LoopReport()
        for spec, predicate in scenario:
            if self.system.terminal:
                report.aborted = True
                break
            pred_name = predicate if isinstance(predicate, str) else getattr(
                predicate, "__name__", "custom"
            )
            pred_fn = PREDICATES[predicate] if isinstance(predicate, str) else predicate
            receipt = self.inject(spec)
            self.step_until_settled(receipt)
            if receipt.marker_event_id is None:
                report.entries.append(
                    LoopEntry(spec, receipt, None, pred_name, passed=False)
                )
                continue
            feedback = self.observe(receipt)
            report.entries.append(
                LoopEntry(spec, receipt, feedback, pred_name, passed=bool(pred_fn(feedback)))
            )
        return report

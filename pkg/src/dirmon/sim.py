"""Deterministic discrete-time simulator of a guarded multi-node application.

Every node hosts one net component (Manager, Agent, or BackupAgent) plus a
set of user threads.  Threads are watched by detection tools: a watchdog
timer that expects one heartbeat per tick, and a trap handler that catches
division-by-zero / protection-violation traps.  Watchdog timers are hosted
by the current Manager's node, so heartbeats from remote threads cross the
link between their node and the Manager's node; taking that link down
starves the watchdogs, which is the detection path for link failures.

Time advances in ticks.  Each ``step`` runs fixed phases:

1. heartbeats: every alive, reachable thread credits its watchdog;
2. scheduled faults: injection markers are logged and due actions applied
   (manager-routed actions wait until a Manager with status OK exists);
3. net reactions: Faulty components from earlier ticks are isolated
   (trapped threads relocated), isolated ones enter a recovery window or
   are killed when no recovery tool applies, and recovery windows that
   have lasted exactly ``recovery_ticks`` close;
4. watchdogs whose target has been silent for >= timeout ticks fire;
5. if the Manager's status is Faulty, Isolated, or Killed, the lowest-index
   BackupAgent with status OK is elected; with no candidate the run ends
   in a terminal system-failed state.

All mutation happens on this single logical timeline, so two runs with the
same configuration and the same submitted faults produce byte-identical
event logs.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .model import (
    ComponentRole,
    ComponentStatus,
    ConfigError,
    DirmonError,
    EventRecord,
    InvalidTarget,
    RtoolKind,
    SimConfig,
    SUMMARY_MANAGER_ELECTED,
    SUMMARY_RUN_ENDED,
    SUMMARY_RUN_STARTED,
    SUMMARY_SYSTEM_FAILED,
    ThreadId,
    TrapKind,
    component_id_for,
)
from .store import EventStore


def elect_lowest_ok_backup(candidates: Iterable[tuple[int, ComponentStatus]]) -> int | None:
    """The election rule: lowest node index among OK backup agents.

    Pure so it can be checked by brute force independently of any run.
    """
    ok_nodes = [node for node, status in candidates if status is ComponentStatus.OK]
    return min(ok_nodes) if ok_nodes else None


@dataclass
class SimThread:
    tid: ThreadId
    alive: bool = True
    trap: TrapKind | None = None  # set when a trap handler caught its death


@dataclass
class Watchdog:
    """Watchdog timer expecting one heartbeat per tick from its target."""

    target: ThreadId
    timeout: int
    armed: bool = True
    last_seen_tick: int = 0


@dataclass
class TrapHandler:
    target: ThreadId
    armed: bool = True


@dataclass
class Component:
    node: int
    cid: str
    role: ComponentRole
    status: ComponentStatus = ComponentStatus.OK
    threads: list[ThreadId] = field(default_factory=list)
    status_since: int = 0
    recovery_started: int | None = None
    recovery_tool: RtoolKind | None = None
    fault_cause: str = ""


@dataclass
class ScheduledFault:
    """A fault queued for execution inside the tick loop.

    The marker is logged at ``scheduled_tick`` whether or not the action
    can run yet; manager-gated actions stay queued until a Manager with
    status OK exists, so a dead net produces markers but no consequences.
    """

    seq: int
    scheduled_tick: int
    manager_gated: bool
    marker: EventRecord
    apply: Callable[["System"], None]
    marker_id: int | None = None
    executed_tick: int | None = None


def _link_key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


class System:
    """A spawned run: all state plus the substrate operations."""

    def __init__(self, config: SimConfig, store: EventStore, on_event=None):
        self.config = config
        self.store = store
        self.on_event = on_event
        self.tick = 0
        self.system_failed = False
        self.components: list[Component] = []
        self.threads: dict[ThreadId, SimThread] = {}
        self.watchdogs: dict[ThreadId, Watchdog] = {}
        self.trap_handlers: dict[ThreadId, TrapHandler] = {}
        self.links: dict[tuple[int, int], bool] = {}
        self.rng = random.Random(config.rng_seed)  # reserved for stochastic models
        self._next_local_index: dict[int, int] = {}
        self._pending: list[ScheduledFault] = []
        self._fault_seq = 0
        self._tick_events: list[EventRecord] = []

    # -- construction --------------------------------------------------------

    @classmethod
    def spawn(cls, config: SimConfig, store: EventStore, on_event=None) -> "System":
        config.validate()
        if store.config.to_dict() != config.to_dict():
            raise ConfigError("store was initialized with a different configuration")
        sys = cls(config, store, on_event)
        for node in range(config.node_count):
            comp = Component(node=node, cid=component_id_for(node), role=config.role_of(node))
            sys.components.append(comp)
            sys._next_local_index[node] = 0
            for _ in range(config.threads_per_node):
                sys._spawn_thread(comp, watched=None)
        for a in range(config.node_count):
            for b in range(a + 1, config.node_count):
                sys.links[(a, b)] = True
        sys._emit(
            config.manager_node,
            SUMMARY_RUN_STARTED,
            detail=(
                f"{config.node_count} nodes, manager on node {config.manager_node}, "
                f"backup agents on {sorted(config.backup_nodes)}, "
                f"watchdog timeout {config.watchdog_timeout_ticks} ticks, "
                f"recovery window {config.recovery_ticks} ticks, seed {config.rng_seed}"
            ),
        )
        return sys

    def _spawn_thread(self, comp: Component, watched: bool | None) -> ThreadId:
        """Create a fresh thread on a component and arm its detection tools.

        ``watched=None`` means "consult the coverage config" (initial spawn);
        restarted and relocated threads are always covered.
        """
        idx = self._next_local_index[comp.node]
        self._next_local_index[comp.node] = idx + 1
        tid = ThreadId(comp.node, idx)
        self.threads[tid] = SimThread(tid)
        comp.threads.append(tid)
        if watched is None:
            watched = (comp.node, idx) not in self.config.unwatched_threads
        if watched:
            self.watchdogs[tid] = Watchdog(
                target=tid,
                timeout=self.config.watchdog_timeout_ticks,
                last_seen_tick=self.tick,
            )
            self.trap_handlers[tid] = TrapHandler(target=tid)
        return tid

    # -- small queries --------------------------------------------------------

    @property
    def terminal(self) -> bool:
        return self.system_failed

    def component(self, node: int) -> Component:
        if not 0 <= node < self.config.node_count:
            raise InvalidTarget(f"node {node} out of range for {self.config.node_count} nodes")
        return self.components[node]

    def manager_node(self) -> int | None:
        for comp in self.components:
            if comp.role is ComponentRole.MANAGER:
                return comp.node
        return None

    def manager_ok(self) -> bool:
        node = self.manager_node()
        return node is not None and self.components[node].status is ComponentStatus.OK

    def link_up(self, a: int, b: int) -> bool:
        if a == b:
            return True
        return self.links.get(_link_key(a, b), True)

    def thread(self, tid: ThreadId) -> SimThread:
        th = self.threads.get(tid)
        if th is None:
            raise InvalidTarget(f"unknown thread {tid}")
        return th

    def alive_threads(self, node: int) -> list[ThreadId]:
        return [t for t in self.component(node).threads if self.threads[t].alive]

    # -- event plumbing -------------------------------------------------------

    def _emit(self, node, summary, detail="", transition=None, component_id=None) -> EventRecord:
        record = EventRecord(
            tick=self.tick,
            node=node,
            component_id=component_id or component_id_for(node),
            summary=summary,
            detail=detail,
            transition=transition,
            elapsed_seconds=self.config.elapsed_seconds(self.tick),
        )
        self.store.append(record)
        self._tick_events.append(record)
        if self.on_event is not None:
            self.on_event(record)
        return record

    def _transition(self, comp: Component, dst: ComponentStatus, summary, detail="") -> EventRecord:
        record = self._emit(comp.node, summary, detail, transition=(comp.status, dst))
        comp.status = dst
        comp.status_since = self.tick
        return record

    # -- fault scheduling (used by the injector) ------------------------------

    def submit_fault(self, scheduled_tick: int, manager_gated: bool, marker: EventRecord,
                     apply: Callable[["System"], None]) -> ScheduledFault:
        if self.terminal:
            raise DirmonError("system is in a terminal failed state")
        if scheduled_tick <= self.tick:
            raise InvalidTarget(
                f"cannot schedule at tick {scheduled_tick}; current tick is {self.tick}"
            )
        fault = ScheduledFault(
            seq=self._fault_seq,
            scheduled_tick=scheduled_tick,
            manager_gated=manager_gated,
            marker=marker,
            apply=apply,
        )
        self._fault_seq += 1
        self._pending.append(fault)
        return fault

    # -- the tick loop ---------------------------------------------------------

    def finish(self) -> EventRecord:
        """Close the run with its terminal log entry (works even after a
        system-failed halt, so completed stores always end with it)."""
        node = self.manager_node()
        if node is None:
            node = self.config.manager_node
        return self._emit(
            node,
            SUMMARY_RUN_ENDED,
            detail=f"run closed at tick {self.tick}"
            + ("; system had failed" if self.system_failed else ""),
        )

    def step(self) -> list[EventRecord]:
        """Advance one tick; returns this tick's events in emission order."""
        self._tick_events = []
        if self.terminal:
            return []
        self.tick += 1

        self._phase_heartbeats()
        self._phase_scheduled_faults()
        self._phase_reactions()
        self._phase_watchdog_fires()
        self._phase_election()
        return list(self._tick_events)

    def _phase_heartbeats(self) -> None:
        host = self.manager_node()
        for tid in sorted(self.watchdogs):
            wd = self.watchdogs[tid]
            if not wd.armed:
                continue
            th = self.threads[tid]
            if th.alive and (host is None or self.link_up(tid.node, host)):
                wd.last_seen_tick = self.tick

    def _phase_scheduled_faults(self) -> None:
        for fault in sorted(self._pending, key=lambda f: (f.scheduled_tick, f.seq)):
            if fault.scheduled_tick > self.tick:
                continue
            if fault.marker_id is None:
                fault.marker.tick = self.tick
                fault.marker.elapsed_seconds = self.config.elapsed_seconds(self.tick)
                self.store.append(fault.marker)
                self._tick_events.append(fault.marker)
                if self.on_event is not None:
                    self.on_event(fault.marker)
                fault.marker_id = fault.marker.event_id
            if fault.manager_gated and not self.manager_ok():
                continue  # stays queued until a Manager is OK again
            fault.apply(self)
            fault.executed_tick = self.tick
            self._pending.remove(fault)

    def _phase_reactions(self) -> None:
        for comp in self.components:
            if comp.status is ComponentStatus.FAULTY and comp.status_since < self.tick:
                self._isolate(comp)
            elif comp.status is ComponentStatus.ISOLATED and comp.status_since < self.tick:
                self._start_recovery_or_kill(comp)
            elif (
                comp.status is ComponentStatus.RECOVERING
                and comp.recovery_started is not None
                and comp.recovery_started + self.config.recovery_ticks == self.tick
            ):
                self._finish_recovery(comp)

    def _isolate(self, comp: Component) -> None:
        self._transition(
            comp,
            ComponentStatus.ISOLATED,
            "component isolated",
            f"net fenced off component {comp.cid} after fault ({comp.fault_cause or 'unknown'})",
        )
        trapped = [t for t in comp.threads if self.threads[t].trap is not None]
        if comp.node in self.config.no_recovery_nodes:
            comp.recovery_tool = None
        elif trapped or any(not self.threads[t].alive for t in comp.threads):
            comp.recovery_tool = RtoolKind.THREAD_RESTART
        else:
            # nothing is verifiably dead on the node (link starvation or a
            # forced timeout): reboot the whole suspect node
            comp.recovery_tool = RtoolKind.NODE_REBOOT
        for tid in trapped:
            self._relocate_auto(tid)

    def _start_recovery_or_kill(self, comp: Component) -> None:
        if comp.recovery_tool is None:
            self._transition(
                comp,
                ComponentStatus.KILLED,
                "component killed",
                f"no recovery tool installed on node {comp.node}; component abandoned",
            )
            for tid in list(comp.threads):
                self._retire_thread(tid)
            return
        tool = comp.recovery_tool
        self._transition(
            comp,
            ComponentStatus.RECOVERING,
            "recovery started",
            f"{tool.value} engaged, window {self.config.recovery_ticks} ticks",
        )
        comp.recovery_started = self.tick
        if tool is RtoolKind.NODE_REBOOT:
            for tid in list(comp.threads):
                if self.threads[tid].alive:
                    self.threads[tid].alive = False
                self._disarm_tools(tid)

    def _finish_recovery(self, comp: Component) -> None:
        replaced = 0
        for tid in list(comp.threads):
            th = self.threads[tid]
            if th.alive:
                continue
            if th.trap is not None:
                continue  # trapped thread that could not be relocated stays dead
            self._retire_thread(tid)
            self._spawn_thread(comp, watched=True)
            replaced += 1
        self._transition(
            comp,
            ComponentStatus.OK,
            "recovery complete",
            f"{comp.recovery_tool.value if comp.recovery_tool else 'recovery'} finished; "
            f"{replaced} thread(s) freshly restarted",
        )
        comp.recovery_started = None
        comp.recovery_tool = None
        comp.fault_cause = ""

    def _phase_watchdog_fires(self) -> None:
        for tid in sorted(self.watchdogs):
            wd = self.watchdogs[tid]
            if not wd.armed:
                continue
            if self.tick - wd.last_seen_tick < wd.timeout:
                continue
            wd.armed = False
            comp = self.component(tid.node)
            if comp.status is not ComponentStatus.OK:
                continue  # detection already under way; no duplicate transition
            comp.fault_cause = f"watchdog timeout on thread {tid}"
            self._transition(
                comp,
                ComponentStatus.FAULTY,
                "watchdog timeout",
                f"thread {tid} missed {wd.timeout} heartbeat(s); "
                f"last heartbeat seen at tick {wd.last_seen_tick}",
            )

    def _phase_election(self) -> None:
        node = self.manager_node()
        if node is None:
            return
        status = self.components[node].status
        if status in (ComponentStatus.FAULTY, ComponentStatus.ISOLATED, ComponentStatus.KILLED):
            self._run_election()

    # -- net actions -----------------------------------------------------------

    def _run_election(self) -> int | None:
        old = self.manager_node()
        candidates = [
            (c.node, c.status) for c in self.components if c.role is ComponentRole.BACKUP_AGENT
        ]
        winner = elect_lowest_ok_backup(candidates)
        if winner is None:
            self.system_failed = True
            self._emit(
                old,
                SUMMARY_SYSTEM_FAILED,
                detail="manager lost and no backup agent with status OK remains; run is terminal",
            )
            return None
        if old is not None:
            self.components[old].role = ComponentRole.AGENT
        self.components[winner].role = ComponentRole.MANAGER
        self._emit(
            winner,
            SUMMARY_MANAGER_ELECTED,
            detail=(
                f"backup agent on node {winner} takes over from node {old}; "
                f"candidates considered: {[n for n, _ in sorted(candidates)]}"
            ),
        )
        return winner

    def _relocate_auto(self, tid: ThreadId) -> EventRecord | None:
        """Relocate a trapped thread to the lowest-index OK node besides its own."""
        for comp in self.components:
            if comp.node != tid.node and comp.status is ComponentStatus.OK:
                return self._do_relocate(tid, comp.node)
        return self._emit(
            tid.node,
            "relocation failed",
            f"no node with an OK component available to take thread {tid}; thread stays dead",
        )

    def _do_relocate(self, tid: ThreadId, to: int) -> EventRecord:
        source = self.component(tid.node)
        dest = self.component(to)
        source.threads.remove(tid)
        self._disarm_tools(tid)
        self.threads[tid].trap = None
        new_tid = self._spawn_thread(dest, watched=True)
        self._emit(
            source.node,
            "thread relocated away",
            f"thread {tid} moved to node {to} as {new_tid}",
        )
        return self._emit(
            dest.node,
            "thread relocated here",
            f"thread {tid} from node {tid.node} restarted as {new_tid}",
        )

    def _retire_thread(self, tid: ThreadId) -> None:
        comp = self.component(tid.node)
        if tid in comp.threads:
            comp.threads.remove(tid)
        self._disarm_tools(tid)
        self.threads[tid].alive = False

    def _disarm_tools(self, tid: ThreadId) -> None:
        self.watchdogs.pop(tid, None)
        self.trap_handlers.pop(tid, None)

    # -- substrate operations ----------------------------------------------------

    def raise_trap(self, tid: ThreadId, kind: TrapKind) -> EventRecord | None:
        """Trigger a trap on a thread.

        With an armed trap handler the hosting component goes Faulty this
        tick and the thread is relocated during isolation.  Without one the
        thread dies silently: no event, no detection, the measurable cost
        of a coverage hole.
        """
        th = self.thread(tid)
        if not th.alive:
            raise InvalidTarget(f"thread {tid} is not alive")
        handler = self.trap_handlers.get(tid)
        th.alive = False
        if handler is None or not handler.armed:
            return None
        th.trap = kind
        wd = self.watchdogs.get(tid)
        if wd is not None:
            wd.armed = False  # trap already caught; no second detection
        comp = self.component(tid.node)
        if comp.status is ComponentStatus.OK:
            comp.fault_cause = f"trap ({kind.describe()}) in thread {tid}"
            return self._transition(
                comp,
                ComponentStatus.FAULTY,
                "trap caught",
                f"{kind.value} trap: {kind.describe()} in thread {tid}; "
                "thread will be relocated during recovery",
            )
        return self._emit(
            comp.node,
            "trap caught",
            f"{kind.value} trap: {kind.describe()} in thread {tid} while component "
            f"already {comp.status.value}; handled by the recovery in progress",
        )

    def kill_thread(self, tid: ThreadId) -> None:
        """Kill a thread outright.  Silent: any event comes from detection."""
        th = self.thread(tid)
        if not th.alive:
            raise InvalidTarget(f"thread {tid} is already dead")
        th.alive = False

    def force_watchdog_timeout(self, tid: ThreadId) -> EventRecord | None:
        """Make the watchdog watching ``tid`` behave as if it had timed out."""
        wd = self.watchdogs.get(tid)
        if wd is None or not wd.armed:
            raise InvalidTarget(f"no armed watchdog timer watches thread {tid}")
        comp = self.component(tid.node)
        if comp.status is not ComponentStatus.OK:
            return None  # idempotent on non-OK
        wd.armed = False
        comp.fault_cause = f"forced watchdog timeout on thread {tid}"
        return self._transition(
            comp,
            ComponentStatus.FAULTY,
            "watchdog timeout",
            f"watchdog on thread {tid} fired on request, bypassing its countdown",
        )

    def set_link(self, a: int, b: int, up: bool) -> EventRecord:
        if a == b:
            raise InvalidTarget(f"link endpoints must differ, got {a}-{a}")
        for node in (a, b):
            if not 0 <= node < self.config.node_count:
                raise InvalidTarget(f"node {node} out of range")
        key = _link_key(a, b)
        self.links[key] = up
        state = "up" if up else "down"
        return self._emit(
            key[0],
            f"link {key[0]}-{key[1]} {state}",
            f"messages between nodes {key[0]} and {key[1]} are "
            + ("delivered again" if up else "dropped"),
            component_id=f"link-{key[0]}-{key[1]}",
        )

    def relocate_thread(self, tid: ThreadId, to: int) -> EventRecord:
        th = self.thread(tid)
        dest = self.component(to)
        if to == tid.node:
            raise InvalidTarget("cannot relocate a thread onto its own node")
        if dest.status is not ComponentStatus.OK:
            raise InvalidTarget(f"destination node {to} is {dest.status.value}, not OK")
        if tid not in self.component(tid.node).threads:
            raise InvalidTarget(f"thread {tid} no longer belongs to node {tid.node}")
        return self._do_relocate(tid, to)

    def elect_manager(self) -> int | None:
        node = self.manager_node()
        if node is not None and self.components[node].status not in (
            ComponentStatus.FAULTY,
            ComponentStatus.ISOLATED,
            ComponentStatus.KILLED,
        ):
            raise InvalidTarget("current manager is healthy; nothing to elect")
        return self._run_election()

    def reboot_node(self, node: int) -> EventRecord:
        """Reboot a node: straight to a recovery window, election first if
        the node holds the Manager role."""
        comp = self.component(node)
        if comp.status is ComponentStatus.KILLED:
            return self._emit(node, "reboot ignored", "reboot of killed node ignored")
        if comp.status is ComponentStatus.RECOVERING:
            # the node is already down and restarting; a recovery window is
            # never stretched (it always lasts exactly recovery_ticks)
            return self._emit(node, "reboot coincides with recovery",
                              f"node {node} is already restarting; window unchanged")
        comp.fault_cause = "node reboot commanded"
        if comp.status is ComponentStatus.OK:
            self._transition(comp, ComponentStatus.FAULTY, "node reboot commanded",
                             f"node {node} taken down for reboot")
        if comp.status is ComponentStatus.FAULTY:
            self._transition(comp, ComponentStatus.ISOLATED, "component isolated",
                             f"component {comp.cid} fenced off for reboot")
        if comp.role is ComponentRole.MANAGER:
            self._run_election()
            if self.terminal:
                return self._tick_events[-1]
        record = self._transition(
            comp,
            ComponentStatus.RECOVERING,
            "recovery started",
            f"{RtoolKind.NODE_REBOOT.value} engaged, window "
            f"{self.config.recovery_ticks} ticks",
        )
        comp.recovery_tool = RtoolKind.NODE_REBOOT
        comp.recovery_started = self.tick
        for tid in list(comp.threads):
            if self.threads[tid].alive:
                self.threads[tid].alive = False
            self._disarm_tools(tid)
        return record

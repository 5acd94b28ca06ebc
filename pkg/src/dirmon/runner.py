"""The two-step launcher: ensure a gateway, then drive a run against it.

Step one starts a gateway subprocess, unless a live one already answers on
the configured address, in which case it is reused.  Step two initializes
the store, spawns the system, connects the notifier, executes the scenario
on the shared clock, and reports the verdicts.

Headless mode skips the gateway entirely and captures the notification
frames to a file, so the whole pipeline can run with no network at all;
paced mode sleeps ``seconds_per_tick`` per tick so a human can watch.
"""
from __future__ import annotations

import json
import subprocess
import sys
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path

from .faults import DEFAULT_OBSERVATION_WINDOW, FaultSpec, Injector, LoopEntry, LoopReport, PREDICATES
from .model import ConfigError, DirmonError, InvalidTarget, SimConfig
from .notify import CaptureNotifier, KIND_INJECT, MonitorClient
from .scenario import Directive, load_scenario
from .sim import System
from .store import EventStore

REPORT_FILE = "report.json"


@dataclass
class RunConfig:
    sim: SimConfig
    store_dir: Path
    scenario_path: Path | None = None
    headless: bool = True
    http_bind: tuple[str, int] = ("127.0.0.1", 8787)
    notify_bind: tuple[str, int] = ("127.0.0.1", 8788)
    ticks: int | None = None
    window: int = DEFAULT_OBSERVATION_WINDOW
    poll_interval: float = 2.0
    static_dir: Path | None = None
    pace: bool | None = None  # None: pace iff a gateway is attached

    def effective_pace(self) -> bool:
        return (not self.headless) if self.pace is None else self.pace


def probe_gateway(http_bind: tuple[str, int], timeout: float = 1.0) -> dict | None:
    """Return /api/health of a live gateway at the address, None if nothing
    answers, and raise ConfigError if something that is not a gateway does."""
    host, port = http_bind
    url = f"http://{host}:{port}/api/health"
    try:
        with urllib.request.urlopen(url, timeout=timeout) as resp:
            payload = json.loads(resp.read().decode("utf-8"))
    except urllib.error.HTTPError as exc:
        raise ConfigError(
            f"port {port} is in use but does not serve the gateway API (HTTP {exc.code})"
        )
    except (urllib.error.URLError, TimeoutError, json.JSONDecodeError, OSError):
        return None
    if payload.get("service") != "dirmon-gateway":
        raise ConfigError(f"port {port} is in use by a different service")
    return payload


def ensure_gateway(run: RunConfig) -> dict:
    """Reuse a live gateway or spawn one as a detached subprocess."""
    health = probe_gateway(run.http_bind)
    if health is not None:
        return health
    host, port = run.http_bind
    nhost, nport = run.notify_bind
    cmd = [
        sys.executable, "-m", "dirmon", "gateway",
        "--store", str(run.store_dir),
        "--http", f"{host}:{port}",
        "--notify", f"{nhost}:{nport}",
        "--poll-interval", str(run.poll_interval),
    ]
    if run.static_dir is not None:
        cmd += ["--static", str(run.static_dir)]
    log_path = Path(run.store_dir) / "gateway.log"
    log_path.parent.mkdir(parents=True, exist_ok=True)
    with log_path.open("ab") as log:
        subprocess.Popen(
            cmd, stdout=log, stderr=log, stdin=subprocess.DEVNULL, start_new_session=True
        )
    deadline = time.monotonic() + 10.0
    while time.monotonic() < deadline:
        health = probe_gateway(run.http_bind)
        if health is not None:
            return health
        time.sleep(0.1)
    raise ConfigError(f"gateway did not come up on {host}:{port} within 10s")


def _validate_directives(directives: list[Directive], config: SimConfig, window: int) -> None:
    """Fail before the run starts: bad targets and overlapping injections
    are configuration errors, reported with their scenario line."""
    open_windows: list[tuple[int, frozenset[int], int]] = []
    for d in directives:
        if d.is_repair:
            a, b = d.args
            for node in (a, b):
                if not 0 <= node < config.node_count:
                    raise ConfigError(f"scenario line {d.line_no}: node {node} out of range")
            if a == b:
                raise ConfigError(f"scenario line {d.line_no}: link endpoints must differ")
            continue
        spec = d.fault_spec()
        try:
            spec.validate(config)
        except InvalidTarget as exc:
            raise ConfigError(f"scenario line {d.line_no}: {exc}")
        scope = spec.scope_nodes()
        for start, other_scope, line_no in open_windows:
            if scope & other_scope and d.tick <= start + window:
                raise ConfigError(
                    f"scenario line {d.line_no}: overlaps the injection from line "
                    f"{line_no} inside its {window}-tick observation window"
                )
        open_windows.append((d.tick, scope, d.line_no))


@dataclass
class RunResult:
    exit_code: int
    report: LoopReport
    system_failed: bool
    store_dir: Path
    final_tick: int
    events_logged: int
    interactive: list = field(default_factory=list)

    def summary_line(self) -> str:
        state = "system FAILED" if self.system_failed else "system survived"
        return (
            f"run finished at tick {self.final_tick}: {self.events_logged} events, "
            f"{state}, verdicts {'pass' if self.report.all_passed else 'FAIL'}"
        )


def execute_run(run: RunConfig) -> RunResult:
    """Drive one full run; returns the verdicts and the exit code."""
    directives = load_scenario(run.scenario_path) if run.scenario_path else []
    _validate_directives([d for d in directives], run.sim, run.window)

    if run.headless:
        notifier = None
    else:
        ensure_gateway(run)

    store = EventStore.create(run.store_dir, run.sim)
    if run.headless:
        notifier = CaptureNotifier(run.store_dir)
    else:
        notifier = MonitorClient(run.notify_bind)
    notifier.hello(tick=0)

    system = System.spawn(run.sim, store, on_event=notifier.on_event)
    injector = Injector(system, store, window_ticks=run.window)

    judged: list[tuple[Directive, object]] = []
    repairs: dict[int, list[Directive]] = {}
    for d in directives:
        if d.is_repair:
            repairs.setdefault(d.tick, []).append(d)
            continue
        receipt = injector.inject(d.fault_spec())
        judged.append((d, receipt))

    last_fault_tick = max((d.tick for d in directives), default=0)
    end_tick = run.ticks if run.ticks is not None else (
        last_fault_tick + run.window if directives else 0
    )

    interactive: list = []
    pace = run.effective_pace()
    tick = 0
    while tick < end_tick and not system.terminal:
        system.step()
        tick = system.tick
        for d in repairs.get(tick, []):
            system.set_link(d.args[0], d.args[1], up=True)
        _drain_gateway_requests(notifier, injector, interactive)
        if pace:
            time.sleep(run.sim.seconds_per_tick)

    report = LoopReport()
    for d, receipt in judged:
        expectation = d.expect or "any"
        if receipt.marker_event_id is None:
            report.entries.append(LoopEntry(receipt.spec, receipt, None, expectation,
                                            passed=False))
            continue
        feedback = injector.observe(receipt)
        passed = bool(PREDICATES[expectation](feedback))
        report.entries.append(LoopEntry(receipt.spec, receipt, feedback, expectation, passed))
    report.aborted = system.terminal and any(r.marker_event_id is None for _, r in judged)

    final_event = system.finish()
    notifier.shutdown(final_event.event_id, system.tick)
    notifier.close()

    (Path(run.store_dir) / REPORT_FILE).write_text(report.to_json() + "\n", encoding="utf-8")

    events_logged = sum(1 for _ in store.iter_events())
    exit_code = 0 if (report.all_passed and not system.system_failed) else 1
    return RunResult(
        exit_code=exit_code,
        report=report,
        system_failed=system.system_failed,
        store_dir=Path(run.store_dir),
        final_tick=system.tick,
        events_logged=events_logged,
        interactive=interactive,
    )


def _drain_gateway_requests(notifier, injector: Injector, interactive: list) -> None:
    for frame in notifier.poll_inbound():
        if frame.get("kind") != KIND_INJECT:
            continue
        request_id = str(frame.get("request_id", ""))
        try:
            spec = FaultSpec.from_dict(dict(frame.get("spec") or {}))
            spec.request_id = request_id or spec.request_id
            receipt = injector.inject(spec)
            interactive.append(receipt)
            notifier.send_receipt(
                {
                    "request_id": receipt.request_id,
                    "accepted": True,
                    "routing": receipt.routing.value,
                    "scheduled_tick": receipt.scheduled_tick,
                    "queued": receipt.queued,
                }
            )
        except DirmonError as exc:
            notifier.send_receipt(
                {"request_id": request_id, "accepted": False, "reason": str(exc)}
            )

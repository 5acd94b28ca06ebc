"""Gateway between a running system and its human observers.

One face listens on a stream socket for the running side's notifications;
the other publishes the three-level view over HTTP.  A notification is a
doorbell, not a data channel: on every ``transition`` frame the gateway
re-reads the store from disk and broadcasts a fresh global view to all
subscribed update streams, so the files stay the single source of truth
and the gateway can be restarted at any time.

Endpoints (the compatibility surface):

    GET  /api/global        current global view
    GET  /api/node/{id}     one node's events, newest first
    GET  /api/event/{id}    full detail of one event
    GET  /api/stream        server-sent events: global view per broadcast
    POST /api/inject        forward a fault request to the running system
    GET  /api/health        liveness probe (identifies this service)

Anything else is served from the optional static directory, which is where
the browser frontend lives.
"""
from __future__ import annotations

import json
import mimetypes
import os
import queue
import socket
import sys
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .faults import FaultSpec
from .model import ComponentStatus, InvalidTarget, NotFoundError, ProtocolError, Snapshot
from .notify import (
    FrameSplitter,
    KIND_HELLO,
    KIND_INJECT,
    KIND_RECEIPT,
    KIND_SHUTDOWN,
    KIND_TRANSITION,
    encode_frame,
    read_frame,
)
from .store import EventStore

STATUS_COLORS = {
    ComponentStatus.OK: "green",
    ComponentStatus.FAULTY: "red",
    ComponentStatus.ISOLATED: "red",
    ComponentStatus.RECOVERING: "yellow",
    ComponentStatus.KILLED: "gray",
}

DEFAULT_POLL_INTERVAL = 2.0
INJECT_TIMEOUT = 10.0


def global_view(snapshot: Snapshot | None, run_active: bool, run_ended: bool,
                seconds_per_tick: float, poll_interval: float, update_seq: int,
                threads_per_node: int = 0) -> dict:
    rows = []
    if snapshot is not None:
        for row in snapshot.rows:
            rows.append(
                {
                    "node": row.node,
                    "role": row.role.value,
                    "status": row.status.value,
                    "color": STATUS_COLORS[row.status],
                    "last_event_id": row.last_event_id,
                    "node_link": f"/api/node/{row.node}",
                }
            )
    return {
        "level": "global",
        "update_seq": update_seq,
        "tick": snapshot.tick if snapshot else 0,
        "system_failed": snapshot.system_failed if snapshot else False,
        "run_active": run_active,
        "run_ended": run_ended,
        "seconds_per_tick": seconds_per_tick,
        "poll_interval_seconds": poll_interval,
        "threads_per_node": threads_per_node,
        "nodes": rows,
    }


def node_view(page, snapshot: Snapshot) -> dict:
    return {
        "level": "node",
        "node": page.node,
        "as_of_tick": snapshot.tick,
        "as_of_event_id": max((r.last_event_id for r in snapshot.rows), default=0),
        "global_link": "/api/global",
        "events": [
            {
                "event_id": e.event_id,
                "tick": e.tick,
                "elapsed_seconds": e.elapsed_seconds,
                "summary": e.summary,
                "event_link": f"/api/event/{e.event_id}",
            }
            for e in page.events
        ],
    }


def event_view(record) -> dict:
    return {
        "level": "event",
        "event": record.to_dict(),
        "node_link": f"/api/node/{record.node}",
    }


class GatewayState:
    """Shared state between the notification listener and HTTP handlers."""

    def __init__(self, store_dir: str | Path, poll_interval: float = DEFAULT_POLL_INTERVAL,
                 static_dir: str | Path | None = None):
        self.store_dir = Path(store_dir)
        self.poll_interval = poll_interval
        self.static_dir = Path(static_dir).resolve() if static_dir else None
        self.lock = threading.RLock()
        self.run_active = False
        self.run_ended = False
        self.last_update_seq = 0
        self._subscribers: list[queue.Queue] = []
        self._sender = None  # callable sending a frame to the connected system
        self._pending: dict[str, dict] = {}
        self._request_seq = 0

    # -- store access ---------------------------------------------------------

    def open_store(self) -> EventStore | None:
        try:
            return EventStore.open(self.store_dir)
        except NotFoundError:
            return None

    def build_global(self, update_seq: int | None = None) -> dict:
        store = self.open_store()
        snapshot = store.read_global() if store else None
        seconds = store.config.seconds_per_tick if store else 1.0
        threads = store.config.threads_per_node if store else 0
        if update_seq is None:
            update_seq = self.last_update_seq
            if snapshot is not None:
                update_seq = max(update_seq, *(r.last_event_id for r in snapshot.rows), 0)
        return global_view(
            snapshot, self.run_active, self.run_ended, seconds, self.poll_interval,
            update_seq, threads_per_node=threads,
        )

    # -- update fan-out ---------------------------------------------------------

    def subscribe(self) -> tuple[queue.Queue, dict]:
        with self.lock:
            q: queue.Queue = queue.Queue()
            initial = self.build_global()
            self._subscribers.append(q)
            return q, initial

    def unsubscribe(self, q: queue.Queue) -> None:
        with self.lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def on_hello(self) -> None:
        with self.lock:
            self.run_active = True
            self.run_ended = False
            self.last_update_seq = 0

    def on_transition(self, event_id: int, tick: int) -> None:
        with self.lock:
            payload = self.build_global(update_seq=event_id)
            self.last_update_seq = event_id
            for q in self._subscribers:
                q.put(payload)

    def on_shutdown(self) -> None:
        with self.lock:
            self.run_active = False
            self.run_ended = True

    # -- injection forwarding ----------------------------------------------------

    def attach_sender(self, sender) -> bool:
        with self.lock:
            if self._sender is not None:
                return False
            self._sender = sender
            return True

    def detach_sender(self) -> None:
        with self.lock:
            self._sender = None
            self.run_active = False

    def forward_injection(self, spec: FaultSpec, timeout: float = INJECT_TIMEOUT) -> tuple[int, dict]:
        with self.lock:
            if self.run_ended:
                return 409, {"accepted": False, "reason": "run has ended"}
            sender = self._sender
            if sender is None:
                return 503, {"accepted": False, "reason": "no running system connected"}
            if not spec.request_id:
                self._request_seq += 1
                spec.request_id = f"req-{self._request_seq}"
            if spec.request_id in self._pending:
                return 400, {"accepted": False,
                             "reason": f"request_id {spec.request_id} already in flight"}
            entry = {"event": threading.Event(), "response": None}
            self._pending[spec.request_id] = entry
        try:
            sender({"kind": KIND_INJECT, "request_id": spec.request_id, "spec": spec.to_dict()})
        except OSError:
            with self.lock:
                self._pending.pop(spec.request_id, None)
            return 503, {"accepted": False, "reason": "running system hung up"}
        if not entry["event"].wait(timeout):
            with self.lock:
                self._pending.pop(spec.request_id, None)
            return 504, {"accepted": False, "reason": "no receipt from the running system"}
        with self.lock:
            self._pending.pop(spec.request_id, None)
        response = dict(entry["response"])
        response.pop("kind", None)
        return (200 if response.get("accepted") else 400), response

    def resolve_receipt(self, message: dict) -> None:
        with self.lock:
            entry = self._pending.get(str(message.get("request_id")))
        if entry is not None:
            entry["response"] = message
            entry["event"].set()


class NotificationListener(threading.Thread):
    """Accepts the running system's connection; one at a time."""

    def __init__(self, state: GatewayState, bind: tuple[str, int]):
        super().__init__(daemon=True, name="dirmon-notify-listener")
        self.state = state
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self.sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self.sock.bind(bind)
        self.sock.listen(4)
        self.sock.settimeout(0.25)
        self.port = self.sock.getsockname()[1]
        self._stopping = threading.Event()

    def stop(self) -> None:
        self._stopping.set()
        try:
            self.sock.close()
        except OSError:
            pass

    def run(self) -> None:
        while not self._stopping.is_set():
            try:
                conn, _ = self.sock.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            worker = threading.Thread(
                target=self._serve_connection, args=(conn,), daemon=True,
                name="dirmon-notify-conn",
            )
            worker.start()

    def _serve_connection(self, conn: socket.socket) -> None:
        send_lock = threading.Lock()

        def sender(message: dict) -> None:
            with send_lock:
                conn.sendall(encode_frame(message))

        if not self.state.attach_sender(sender):
            # a system is already connected; refuse the newcomer
            conn.close()
            return
        last_transition_id = 0
        saw_hello = False
        try:
            while True:
                message = read_frame(conn)
                if message is None:
                    break
                kind = message.get("kind")
                if not saw_hello and kind != KIND_HELLO:
                    raise ProtocolError(f"first frame must be {KIND_HELLO!r}, got {kind!r}")
                if kind == KIND_HELLO:
                    saw_hello = True
                    self.state.on_hello()
                elif kind == KIND_TRANSITION:
                    event_id = int(message["event_id"])
                    if event_id <= last_transition_id:
                        raise ProtocolError(
                            f"transition ids must increase: {event_id} after {last_transition_id}"
                        )
                    last_transition_id = event_id
                    self.state.on_transition(event_id, int(message.get("tick", 0)))
                elif kind == KIND_SHUTDOWN:
                    self.state.on_shutdown()
                elif kind == KIND_RECEIPT:
                    self.state.resolve_receipt(message)
                else:
                    raise ProtocolError(f"unknown frame kind {kind!r}")
        except (ProtocolError, ValueError, KeyError) as exc:
            print(f"notification protocol error: {exc}", file=sys.stderr)
        except OSError:
            pass
        finally:
            self.state.detach_sender()
            try:
                conn.close()
            except OSError:
                pass


class ApiHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "dirmon-gateway"

    @property
    def state(self) -> GatewayState:
        return self.server.state  # type: ignore[attr-defined]

    def log_message(self, format, *args):  # noqa: A002 - stdlib signature
        pass

    # -- helpers -----------------------------------------------------------

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload, ensure_ascii=False).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _send_error_json(self, status: int, message: str) -> None:
        self._send_json(status, {"error": message})

    # -- GET ----------------------------------------------------------------

    def do_GET(self) -> None:  # noqa: N802 - stdlib naming
        path = self.path.split("?", 1)[0]
        try:
            if path == "/api/global":
                if self.state.open_store() is None:
                    self._send_error_json(503, "no run present in the store directory")
                else:
                    self._send_json(200, self.state.build_global())
            elif path.startswith("/api/node/"):
                self._get_node(path.removeprefix("/api/node/"))
            elif path.startswith("/api/event/"):
                self._get_event(path.removeprefix("/api/event/"))
            elif path == "/api/stream":
                self._stream()
            elif path == "/api/health":
                self._send_json(
                    200,
                    {
                        "service": "dirmon-gateway",
                        "status": "ok",
                        "pid": os.getpid(),
                        "run_active": self.state.run_active,
                        "run_ended": self.state.run_ended,
                        "store": str(self.state.store_dir),
                        "poll_interval_seconds": self.state.poll_interval,
                    },
                )
            else:
                self._static(path)
        except BrokenPipeError:
            pass

    def _get_node(self, raw: str) -> None:
        store = self.state.open_store()
        if store is None:
            self._send_error_json(503, "no run present in the store directory")
            return
        try:
            node = int(raw)
        except ValueError:
            self._send_error_json(404, f"bad node id {raw!r}")
            return
        try:
            page = store.read_node(node)
        except InvalidTarget as exc:
            self._send_error_json(404, str(exc))
            return
        self._send_json(200, node_view(page, store.read_global()))

    def _get_event(self, raw: str) -> None:
        store = self.state.open_store()
        if store is None:
            self._send_error_json(503, "no run present in the store directory")
            return
        try:
            event_id = int(raw)
        except ValueError:
            self._send_error_json(404, f"bad event id {raw!r}")
            return
        try:
            record = store.read_event(event_id)
        except NotFoundError as exc:
            self._send_error_json(404, str(exc))
            return
        self._send_json(200, event_view(record))

    def _stream(self) -> None:
        q, initial = self.state.subscribe()
        try:
            self.send_response(200)
            self.send_header("Content-Type", "text/event-stream; charset=utf-8")
            self.send_header("Cache-Control", "no-cache")
            self.send_header("Access-Control-Allow-Origin", "*")
            # chunked framing so clients see each message as soon as it is sent
            self.send_header("Transfer-Encoding", "chunked")
            self.end_headers()
            retry_ms = int(self.state.poll_interval * 1000)
            self._write_chunk(f"retry: {retry_ms}\n\n")
            self._write_sse(initial)
            while True:
                try:
                    payload = q.get(timeout=15.0)
                except queue.Empty:
                    self._write_chunk(": keepalive\n\n")
                    continue
                self._write_sse(payload)
        except (BrokenPipeError, ConnectionResetError):
            pass
        finally:
            self.state.unsubscribe(q)

    def _write_sse(self, payload: dict) -> None:
        data = json.dumps(payload, ensure_ascii=False)
        self._write_chunk(f"data: {data}\n\n")

    def _write_chunk(self, text: str) -> None:
        data = text.encode("utf-8")
        self.wfile.write(f"{len(data):X}\r\n".encode("ascii") + data + b"\r\n")
        self.wfile.flush()

    def _static(self, path: str) -> None:
        root = self.state.static_dir
        if root is None or not root.exists():
            self._send_error_json(404, f"no route for {path}")
            return
        rel = path.lstrip("/") or "index.html"
        target = (root / rel).resolve()
        if not target.is_relative_to(root) or not target.is_file():
            self._send_error_json(404, f"no route for {path}")
            return
        content_type = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        body = target.read_bytes()
        self.send_response(200)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    # -- POST ---------------------------------------------------------------

    def do_POST(self) -> None:  # noqa: N802 - stdlib naming
        path = self.path.split("?", 1)[0]
        if path != "/api/inject":
            self._send_error_json(404, f"no route for {path}")
            return
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        try:
            body = json.loads(raw.decode("utf-8")) if raw else {}
        except (UnicodeDecodeError, json.JSONDecodeError):
            self._send_json(400, {"accepted": False, "reason": "body is not valid JSON"})
            return
        store = self.state.open_store()
        try:
            spec = FaultSpec.from_dict(body)
            if store is not None:
                spec.validate(store.config)
        except InvalidTarget as exc:
            self._send_json(400, {"accepted": False, "reason": str(exc)})
            return
        status, payload = self.state.forward_injection(spec)
        self._send_json(status, payload)


class Gateway:
    """Embeddable gateway: HTTP server plus notification listener."""

    def __init__(self, store_dir: str | Path, http_bind: tuple[str, int] = ("127.0.0.1", 0),
                 notify_bind: tuple[str, int] = ("127.0.0.1", 0),
                 poll_interval: float = DEFAULT_POLL_INTERVAL,
                 static_dir: str | Path | None = None):
        self.state = GatewayState(store_dir, poll_interval, static_dir)
        self.listener = NotificationListener(self.state, notify_bind)
        self.httpd = ThreadingHTTPServer(http_bind, ApiHandler)
        self.httpd.daemon_threads = True
        self.httpd.state = self.state  # type: ignore[attr-defined]
        self._http_thread: threading.Thread | None = None

    @property
    def http_port(self) -> int:
        return self.httpd.server_address[1]

    @property
    def notify_port(self) -> int:
        return self.listener.port

    def start(self) -> None:
        self.listener.start()
        self._http_thread = threading.Thread(
            target=self.httpd.serve_forever, daemon=True, name="dirmon-gateway-http"
        )
        self._http_thread.start()

    def stop(self) -> None:
        self.listener.stop()
        self.httpd.shutdown()
        self.httpd.server_close()

    def serve_forever(self) -> None:
        self.start()
        try:
            threading.Event().wait()
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

"""Framed notification protocol between a running system and the gateway.

A frame is a 4-byte big-endian payload length followed by that many bytes
of UTF-8 JSON.  The running side sends ``hello`` once, ``transition`` for
every appended event (ids strictly increasing), and ``shutdown`` at the
end.  The gateway may send ``inject`` frames back on the same connection;
the running side answers each with a ``receipt`` frame.

In headless runs the same traffic is captured to ``notifications.jsonl``
in the store directory instead of a socket.
"""
from __future__ import annotations

import json
import select
import socket
import struct
from pathlib import Path

from .model import EventRecord, ProtocolError

_HEADER = struct.Struct(">I")
MAX_FRAME_BYTES = 1 << 20

KIND_HELLO = "hello"
KIND_TRANSITION = "transition"
KIND_SHUTDOWN = "shutdown"
KIND_INJECT = "inject"
KIND_RECEIPT = "receipt"

NOTIFICATIONS_FILE = "notifications.jsonl"


def encode_frame(message: dict) -> bytes:
    payload = json.dumps(message, ensure_ascii=False).encode("utf-8")
    if len(payload) > MAX_FRAME_BYTES:
        raise ProtocolError(f"frame of {len(payload)} bytes exceeds limit")
    return _HEADER.pack(len(payload)) + payload


def recv_exact(sock: socket.socket, count: int) -> bytes | None:
    """Read exactly ``count`` bytes; None on a clean EOF at a frame boundary."""
    chunks = b""
    while len(chunks) < count:
        chunk = sock.recv(count - len(chunks))
        if not chunk:
            if chunks:
                raise ProtocolError("connection closed mid-frame")
            return None
        chunks += chunk
    return chunks


def read_frame(sock: socket.socket) -> dict | None:
    header = recv_exact(sock, _HEADER.size)
    if header is None:
        return None
    (length,) = _HEADER.unpack(header)
    if length > MAX_FRAME_BYTES:
        raise ProtocolError(f"declared frame length {length} exceeds limit")
    payload = recv_exact(sock, length)
    if payload is None:
        raise ProtocolError("connection closed mid-frame")
    try:
        message = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"frame is not valid JSON: {exc}")
    if not isinstance(message, dict) or "kind" not in message:
        raise ProtocolError("frame must be a JSON object with a 'kind' field")
    return message


class FrameSplitter:
    """Incremental decoder for the non-blocking receive path."""

    def __init__(self) -> None:
        self._buffer = bytearray()

    def feed(self, data: bytes) -> list[dict]:
        self._buffer.extend(data)
        frames = []
        while True:
            if len(self._buffer) < _HEADER.size:
                break
            (length,) = _HEADER.unpack(self._buffer[: _HEADER.size])
            if length > MAX_FRAME_BYTES:
                raise ProtocolError(f"declared frame length {length} exceeds limit")
            if len(self._buffer) < _HEADER.size + length:
                break
            payload = bytes(self._buffer[_HEADER.size : _HEADER.size + length])
            del self._buffer[: _HEADER.size + length]
            try:
                message = json.loads(payload.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise ProtocolError(f"frame is not valid JSON: {exc}")
            if not isinstance(message, dict) or "kind" not in message:
                raise ProtocolError("frame must be a JSON object with a 'kind' field")
            frames.append(message)
        return frames


class MonitorClient:
    """Socket notifier used when a gateway is attached."""

    def __init__(self, address: tuple[str, int], connect_timeout: float = 5.0):
        self.sock = socket.create_connection(address, timeout=connect_timeout)
        self.sock.settimeout(None)
        self._splitter = FrameSplitter()
        self.closed = False

    def hello(self, tick: int = 0) -> None:
        self._send({"kind": KIND_HELLO, "event_id": 0, "tick": tick})

    def on_event(self, record: EventRecord) -> None:
        self._send(
            {"kind": KIND_TRANSITION, "event_id": record.event_id, "tick": record.tick}
        )

    def shutdown(self, event_id: int, tick: int) -> None:
        self._send({"kind": KIND_SHUTDOWN, "event_id": event_id, "tick": tick})

    def send_receipt(self, receipt: dict) -> None:
        self._send({"kind": KIND_RECEIPT, **receipt})

    def poll_inbound(self) -> list[dict]:
        """Drain any inject frames the gateway pushed, without blocking."""
        frames: list[dict] = []
        if self.closed:
            return frames
        while True:
            readable, _, _ = select.select([self.sock], [], [], 0)
            if not readable:
                break
            data = self.sock.recv(65536)
            if not data:
                self.closed = True
                break
            frames.extend(self._splitter.feed(data))
        return frames

    def _send(self, message: dict) -> None:
        if self.closed:
            return
        try:
            self.sock.sendall(encode_frame(message))
        except OSError:
            self.closed = True

    def close(self) -> None:
        if not self.closed:
            try:
                self.sock.close()
            finally:
                self.closed = True


class CaptureNotifier:
    """Headless stand-in for MonitorClient: frames land in a capture file."""

    def __init__(self, store_dir: str | Path):
        self.path = Path(store_dir) / NOTIFICATIONS_FILE
        self.path.write_bytes(b"")

    def hello(self, tick: int = 0) -> None:
        self._write({"kind": KIND_HELLO, "event_id": 0, "tick": tick})

    def on_event(self, record: EventRecord) -> None:
        self._write(
            {"kind": KIND_TRANSITION, "event_id": record.event_id, "tick": record.tick}
        )

    def shutdown(self, event_id: int, tick: int) -> None:
        self._write({"kind": KIND_SHUTDOWN, "event_id": event_id, "tick": tick})

    def send_receipt(self, receipt: dict) -> None:
        self._write({"kind": KIND_RECEIPT, **receipt})

    def poll_inbound(self) -> list[dict]:
        return []

    def close(self) -> None:
        pass

    def _write(self, message: dict) -> None:
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(message, ensure_ascii=False) + "\n")

"""Network endpoints over the broker: TCP NDJSON and an HTTP facade.

TCP speaks the record protocol directly: clients send sub/cmd lines,
the server pushes pub frames and acks. HTTP mirrors the same data for
browsers: JSON state and history queries, a server-sent-event stream of
record lines, and a command POST. Both are thin shells; every rule
about ordering and retention lives in the broker.
"""
from __future__ import annotations

import json
import socketserver
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from . import wire
from .telemetry import Broker, Subscription, TelemetryError

COMMAND_TIMEOUT_SLACK = 1.0  # s on top of one control period

_MIME = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".svg": "image/svg+xml",
    ".png": "image/png",
    ".ico": "image/x-icon",
    ".map": "application/json",
}


def parse_address(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host:
        host = "127.0.0.1"
    try:
        return host, int(port)
    except ValueError:
        raise ValueError(f"bad listen address {text!r}, expected host:port") from None


# --------------------------- TCP ------------------------------------------

class _TcpHandler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        broker: Broker = self.server.broker  # type: ignore[attr-defined]
        write_lock = threading.Lock()
        subs: list[Subscription] = []

        def send(record: dict) -> bool:
            try:
                line = wire.encode_line(record).encode("utf-8")
                with write_lock:
                    self.wfile.write(line)
                    self.wfile.flush()
                return True
            except (OSError, ValueError):
                return False

        def pump(sub: Subscription) -> None:
            while True:
                frame = sub.get(timeout=0.5)
                if frame is None:
                    if sub.closed:
                        return
                    continue
                if not send(frame):
                    broker.unsubscribe(sub)
                    return

        try:
            for raw in self.rfile:
                try:
                    record = wire.decode(raw.decode("utf-8"))
                except (UnicodeDecodeError, wire.WireError) as exc:
                    send({"t": "err", "error": str(exc)})
                    continue
                kind = record.get("t")
                if kind == "sub":
                    try:
                        sub = broker.subscribe(str(record.get("pattern")))
                    except TelemetryError as exc:
                        send({"t": "err", "error": str(exc)})
                        continue
                    subs.append(sub)
                    threading.Thread(target=pump, args=(sub,), daemon=True).start()
                elif kind == "cmd":
                    self._handle_cmd(broker, record, send)
                else:
                    send({"t": "err", "error": f"unsupported record type {kind!r}"})
        finally:
            for sub in subs:
                broker.unsubscribe(sub)

    def _handle_cmd(self, broker: Broker, record: dict, send) -> None:
        cmd_id = str(record.get("id") or "")
        if not cmd_id:
            send({"t": "err", "error": "cmd needs an id"})
            return
        try:
            done = broker.submit_command(
                str(record.get("kind")), record.get("payload") or {}, cmd_id,
                on_resolve=lambda ack: send(ack),
            )
        except TelemetryError as exc:
            send({"t": "ack", "id": cmd_id, "ok": False, "error": str(exc)})
            return
        timeout = self.server.command_timeout  # type: ignore[attr-defined]
        if not done.wait(timeout=timeout):
            # the resolve hook still delivers the real ack later
            send({"t": "ack", "id": cmd_id, "ok": False, "pending": True})


class TelemetryTCPServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int], broker: Broker,
                 command_timeout: float = 11.0) -> None:
        super().__init__(address, _TcpHandler)
        self.broker = broker
        self.command_timeout = command_timeout


# --------------------------- HTTP -----------------------------------------

class _HttpHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    # the default handler logs every request to stderr; keep runs quiet
    def log_message(self, fmt, *args) -> None:
        pass

    @property
    def broker(self) -> Broker:
        return self.server.broker  # type: ignore[attr-defined]

    def _json(self, status: int, payload) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self._cors()
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _cors(self) -> None:
        self.send_header("Access-Control-Allow-Origin", "*")

    def do_OPTIONS(self) -> None:
        self.send_response(204)
        self._cors()
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self) -> None:
        url = urlparse(self.path)
        query = parse_qs(url.query)
        if url.path == "/api/state":
            self._json(200, self.broker.snapshot())
        elif url.path == "/api/history":
            self._history(query)
        elif url.path == "/api/stream":
            self._stream(query)
        elif url.path == "/api/command":
            self._command_status(query)
        else:
            self._static(url.path)

    def _history(self, query: dict) -> None:
        topic = (query.get("topic") or [""])[0]
        try:
            t_from = float((query.get("from") or ["0"])[0])
            t_to = float((query.get("to") or ["1e18"])[0])
        except ValueError:
            self._json(400, {"error": "from/to must be numbers"})
            return
        if not topic:
            self._json(400, {"error": "topic parameter required"})
            return
        try:
            frames = self.broker.history(topic, t_from, t_to)
        except TelemetryError as exc:
            self._json(400, {"error": str(exc)})
            return
        self._json(200, frames)

    def _stream(self, query: dict) -> None:
        pattern = (query.get("pattern") or ["*/*/*"])[0]
        try:
            sub = self.broker.subscribe(pattern)
        except TelemetryError as exc:
            self._json(400, {"error": str(exc)})
            return
        self.send_response(200)
        self._cors()
        self.send_header("Content-Type", "text/event-stream")
        self.send_header("Cache-Control", "no-store")
        self.end_headers()
        try:
            idle = 0
            while True:
                frame = sub.get(timeout=0.5)
                if frame is None:
                    if sub.closed:
                        return
                    idle += 1
                    if idle >= 20:  # comment line keeps proxies awake
                        self.wfile.write(b": ping\n\n")
                        self.wfile.flush()
                        idle = 0
                    continue
                idle = 0
                data = wire.encode(frame)
                self.wfile.write(f"data: {data}\n\n".encode("utf-8"))
                self.wfile.flush()
        except (OSError, ValueError):
            pass
        finally:
            self.broker.unsubscribe(sub)
            self.close_connection = True

    def _command_status(self, query: dict) -> None:
        cmd_id = (query.get("id") or [""])[0]
        if not cmd_id:
            self._json(400, {"error": "id parameter required"})
            return
        result = self.broker.command_result(cmd_id)
        if result is None:
            self._json(404, {"id": cmd_id, "error": "unknown or unresolved command"})
        else:
            self._json(200, result)

    def do_POST(self) -> None:
        url = urlparse(self.path)
        if url.path != "/api/command":
            self._json(404, {"error": "no such route"})
            return
        try:
            length = int(self.headers.get("Content-Length") or 0)
            doc = json.loads(self.rfile.read(length).decode("utf-8"))
            if not isinstance(doc, dict):
                raise ValueError("command body must be an object")
        except (ValueError, UnicodeDecodeError) as exc:
            self._json(400, {"error": f"bad command body: {exc}"})
            return
        kind = doc.get("kind")
        payload = doc.get("payload") or {}
        cmd_id = str(doc.get("id") or self.server.next_command_id())  # type: ignore[attr-defined]
        if not isinstance(kind, str) or not kind:
            self._json(400, {"error": "command needs a kind"})
            return
        try:
            done = self.broker.submit_command(kind, payload, cmd_id)
        except TelemetryError as exc:
            self._json(400, {"error": str(exc), "id": cmd_id})
            return
        timeout = self.server.command_timeout  # type: ignore[attr-defined]
        if not done.wait(timeout=timeout):
            self._json(504, {"id": cmd_id, "pending": True})
            return
        self._json(200, self.broker.command_result(cmd_id))

    def _static(self, path: str) -> None:
        root = self.server.static_dir  # type: ignore[attr-defined]
        if root is None:
            self._json(404, {"error": "no such route"})
            return
        if path == "/":
            path = "/index.html"
        target = (root / path.lstrip("/")).resolve()
        if not str(target).startswith(str(root.resolve())) or not target.is_file():
            self._json(404, {"error": "no such route"})
            return
        body = target.read_bytes()
        self.send_response(200)
        self._cors()
        self.send_header("Content-Type",
                         _MIME.get(target.suffix, "application/octet-stream"))
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


class TelemetryHTTPServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address: tuple[str, int], broker: Broker,
                 command_timeout: float = 11.0,
                 static_dir: str | Path | None = None) -> None:
        super().__init__(address, _HttpHandler)
        self.broker = broker
        self.command_timeout = command_timeout
        self.static_dir = Path(static_dir) if static_dir else None
        self._cmd_seq = 0
        self._cmd_lock = threading.Lock()

    def next_command_id(self) -> str:
        with self._cmd_lock:
            self._cmd_seq += 1
            return f"h-{self._cmd_seq}"


def start_servers(
    broker: Broker,
    tcp: str | None,
    http: str | None,
    command_timeout: float,
    static_dir: str | Path | None = None,
) -> list:
    """Bind and launch the requested servers on daemon threads."""
    servers = []
    if tcp:
        servers.append(TelemetryTCPServer(parse_address(tcp), broker, command_timeout))
    if http:
        servers.append(TelemetryHTTPServer(parse_address(http), broker,
                                           command_timeout, static_dir))
    for srv in servers:
        threading.Thread(target=srv.serve_forever, daemon=True).start()
    return servers

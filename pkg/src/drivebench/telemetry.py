"""Telemetry: per-control-period frames, ring logging, CSV export, live stream.

Frames are produced on the engine thread.  The :class:`FrameLog` sink keeps a
bounded ring of them and exports CSV; the :class:`StreamServer` fans frames
out to websocket clients at ``/stream`` and forwards their commands back to
the engine's inbox.

Wire grammar (one text message per line-oriented payload):

    FRAME t=0.01 w_ref=120.0 w_meas=3.2 ia=... ib=... ic=... id=... iq=...
          theta_e=... da=... db=... dc=... mode=foc pwm=1 sat=0 trip=0
    CMD <id> <name> [args...]        client -> server
    ACK <id>                         server -> client
    ERR <id|-> <text>                server -> client

Command names and arguments match the scenario timeline commands:
``set_speed_ref 120``, ``set_mode foc``, ``set_load_torque 0.5``,
``set_gain kp_w 0.7``, ``pwm_enable 1``, ``set_id_ref 2.0``.

The engine never blocks on a slow client: each client has a bounded outbox
and frames are dropped (and counted) per client when it fills up.
"""

from __future__ import annotations

import queue
import threading
from collections import deque
from dataclasses import dataclass

from .scenario import Command, ScenarioError, command_from_fields

CSV_FIELDS = ("t", "w_ref", "w_meas", "ia", "ib", "ic", "id", "iq",
              "theta_e", "da", "db", "dc", "mode", "pwm", "sat", "trip")


class TelemetryError(RuntimeError):
    pass


@dataclass
class TelemetryFrame:
    t: float
    w_ref: float
    w_meas: float
    ia: float
    ib: float
    ic: float
    id: float
    iq: float
    theta_e: float
    da: float
    db: float
    dc: float
    mode: str
    pwm: bool
    sat: bool
    trip: bool

    def csv_row(self) -> str:
        return ",".join((
            repr(self.t), repr(self.w_ref), repr(self.w_meas),
            repr(self.ia), repr(self.ib), repr(self.ic),
            repr(self.id), repr(self.iq), repr(self.theta_e),
            repr(self.da), repr(self.db), repr(self.dc),
            self.mode, str(int(self.pwm)), str(int(self.sat)),
            str(int(self.trip)),
        ))

    def wire(self) -> str:
        return (f"FRAME t={self.t!r} w_ref={self.w_ref!r} "
                f"w_meas={self.w_meas!r} ia={self.ia!r} ib={self.ib!r} "
                f"ic={self.ic!r} id={self.id!r} iq={self.iq!r} "
                f"theta_e={self.theta_e!r} da={self.da!r} db={self.db!r} "
                f"dc={self.dc!r} mode={self.mode} pwm={int(self.pwm)} "
                f"sat={int(self.sat)} trip={int(self.trip)}")


class FrameLog:
    """Bounded ring of frames with an eviction counter and CSV export."""

    def __init__(self, capacity: int = 1 << 20):
        self.capacity = capacity
        self._frames = deque(maxlen=capacity)
        self.appended = 0
        self._last_t = None

    def __len__(self):
        return len(self._frames)

    @property
    def evicted(self) -> int:
        return max(0, self.appended - self.capacity)

    def record(self, frame: TelemetryFrame) -> None:
        if self._last_t is not None and frame.t <= self._last_t:
            raise TelemetryError(
                f"frame timestamp {frame.t} not after {self._last_t}")
        self._last_t = frame.t
        self._frames.append(frame)
        self.appended += 1

    def frames(self):
        return iter(self._frames)

    @property
    def oldest(self) -> TelemetryFrame | None:
        return self._frames[0] if self._frames else None

    def export_csv(self, path: str) -> int:
        """Write header plus one row per frame; returns the data row count."""
        rows = 0
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(CSV_FIELDS) + "\n")
            for frame in self._frames:
                fh.write(frame.csv_row() + "\n")
                rows += 1
        return rows


def parse_command_line(line: str):
    """Parse a ``CMD`` wire message; returns ``(msg_id, Command)``.

    Raises :class:`ScenarioError` with the offending field on bad input.
    """
    parts = line.strip().split()
    if len(parts) < 3 or parts[0] != "CMD":
        raise ScenarioError("command", "expected 'CMD <id> <name> [args...]'")
    msg_id = parts[1]
    kind = parts[2]
    args = parts[3:]
    if kind == "set_gain":
        if len(args) != 2:
            raise ScenarioError("command", "set_gain needs '<name> <value>'")
        fields = {"name": args[0], "value": args[1]}
    elif kind == "set_mode":
        if len(args) != 1:
            raise ScenarioError("command", "set_mode needs a mode")
        fields = {"mode": args[0]}
    elif kind == "pwm_enable":
        if len(args) != 1:
            raise ScenarioError("command", "pwm_enable needs 0/1")
        fields = {"enabled": args[0]}
    else:
        if len(args) != 1:
            raise ScenarioError("command", f"{kind} needs one value")
        fields = {"value": args[0]}
    return msg_id, command_from_fields(kind, fields, "command")


class _Client:
    def __init__(self, conn, outbox_size: int):
        self.conn = conn
        self.outbox = queue.Queue(maxsize=outbox_size)
        self.dropped = 0
        self.alive = True


class StreamServer:
    """Websocket fan-out of frames plus command intake.

    ``command_sink`` is called with a :class:`~drivebench.scenario.Command`
    for every accepted command (the engine's inbox).  Frames are broadcast
    every ``decimation``-th :meth:`publish` call.
    """

    def __init__(self, port: int, command_sink, decimation: int = 10,
                 host: str = "127.0.0.1", outbox_size: int = 512,
                 static_dir: str | None = None):
        self.port = port
        self.host = host
        self.command_sink = command_sink
        self.decimation = max(1, decimation)
        self.outbox_size = outbox_size
        self.static_dir = static_dir
        self._clients: list[_Client] = []
        self._lock = threading.Lock()
        self._publish_count = 0
        self._server = None
        self._thread = None

    @property
    def client_drop_counts(self) -> list[int]:
        """Frames dropped per connected client (bounded outbox overflow)."""
        with self._lock:
            return [c.dropped for c in self._clients]

    # -- engine side --------------------------------------------------------

    def publish(self, frame: TelemetryFrame) -> None:
        self._publish_count += 1
        if self._publish_count % self.decimation:
            return
        line = frame.wire()
        with self._lock:
            clients = list(self._clients)
        for client in clients:
            try:
                client.outbox.put_nowait(line)
            except queue.Full:
                client.dropped += 1

    # -- transport side ------------------------------------------------------

    def start(self):
        from websockets.sync.server import serve

        self._server = serve(self._handle, self.host, self.port,
                             process_request=self._process_request)
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        daemon=True, name="telemetry-server")
        self._thread.start()
        return self

    def stop(self):
        if self._server is not None:
            self._server.shutdown()
            self._thread.join(timeout=5)
            self._server = None

    def _process_request(self, connection, request):
        if request.path == "/stream" or self.static_dir is None:
            return None
        return self._serve_static(connection, request.path)

    def _serve_static(self, connection, path):
        import os
        from http import HTTPStatus

        from websockets.datastructures import Headers
        from websockets.http11 import Response

        root = os.path.abspath(self.static_dir)
        name = "index.html" if path == "/" else path.lstrip("/").split("?")[0]
        full = os.path.abspath(os.path.normpath(os.path.join(root, name)))
        if not full.startswith(root + os.sep) or not os.path.isfile(full):
            return connection.respond(HTTPStatus.NOT_FOUND, "not found\n")
        ctype = {"html": "text/html; charset=utf-8", "js": "text/javascript",
                 "css": "text/css", "map": "application/json",
                 "json": "application/json"}.get(full.rsplit(".", 1)[-1],
                                                 "application/octet-stream")
        with open(full, "rb") as fh:
            body = fh.read()
        headers = Headers()
        headers["Content-Type"] = ctype
        headers["Content-Length"] = str(len(body))
        return Response(HTTPStatus.OK, "OK", headers, body)

    def _handle(self, conn):
        client = _Client(conn, self.outbox_size)
        with self._lock:
            self._clients.append(client)
        sender = threading.Thread(target=self._send_loop, args=(client,),
                                  daemon=True)
        sender.start()
        try:
            for message in conn:
                if isinstance(message, bytes):
                    message = message.decode("utf-8", "replace")
                self._handle_message(client, message)
        except Exception:
            pass
        finally:
            client.alive = False
            with self._lock:
                if client in self._clients:
                    self._clients.remove(client)

    def _handle_message(self, client, message):
        try:
            msg_id, cmd = parse_command_line(message)
        except ScenarioError as exc:
            parts = message.strip().split()
            bad_id = parts[1] if len(parts) > 1 and parts[0] == "CMD" else "-"
            self._safe_send(client, f"ERR {bad_id} {exc}")
            return
        try:
            self.command_sink(cmd)
        except Exception as exc:  # engine rejected it
            self._safe_send(client, f"ERR {msg_id} {exc}")
            return
        self._safe_send(client, f"ACK {msg_id}")

    def _send_loop(self, client):
        while client.alive:
            try:
                line = client.outbox.get(timeout=0.25)
            except queue.Empty:
                continue
            if not self._safe_send(client, line):
                return

    def _safe_send(self, client, line) -> bool:
        try:
            client.conn.send(line)
            return True
        except Exception:
            client.alive = False
            return False

"""HTTP service exposing the pipeline: worker-pull task polling, vote
submission, and decision queries.

Built on the stdlib threading HTTP server: request handlers call straight
into the engine, whose lock provides the single-writer guarantee; a
background thread drives `tick` off the wall clock. The event log is flushed
on every append in service mode, so a killed server leaves a replayable log.
"""

from __future__ import annotations

import json
import re
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .pipeline import ModerationEngine, RequestError

_STATUS_BY_CODE = {
    "not_found": 404,
    "unknown_segment": 404,
    "unknown_worker": 404,
    "duplicate": 409,
    "terminal": 409,
    "unassigned": 409,
    "invalid": 400,
}

_ROUTES = [
    ("POST", re.compile(r"^/videos$"), "post_video"),
    ("POST", re.compile(r"^/workers$"), "post_worker"),
    ("GET", re.compile(r"^/workers/(?P<worker_id>[^/]+)/tasks$"), "get_task"),
    ("POST", re.compile(r"^/votes$"), "post_vote"),
    ("GET", re.compile(r"^/videos/(?P<video_id>[^/]+)/decision$"), "get_decision"),
    ("GET", re.compile(r"^/metrics$"), "get_metrics"),
]


class ModerationService:
    def __init__(self, engine: ModerationEngine, host: str = "127.0.0.1", port: int = 8080,
                 tick_interval: float = 0.25, clock=time.time):
        self.engine = engine
        self.clock = clock
        self.tick_interval = tick_interval
        self._stop = threading.Event()
        self._last_tick = 0.0
        handler = _make_handler(self)
        self.httpd = ThreadingHTTPServer((host, port), handler)  # raises OSError if port busy
        self._tick_thread = threading.Thread(target=self._tick_loop, daemon=True)
        self._serve_thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self.httpd.server_address[1]

    def start(self) -> None:
        self._tick_thread.start()
        self._serve_thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._serve_thread.start()

    def serve_forever(self) -> None:
        self._tick_thread.start()
        self.httpd.serve_forever()

    def shutdown(self) -> None:
        self._stop.set()
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._tick_thread.is_alive():
            self._tick_thread.join(timeout=5)
        self.engine.log.flush()

    def _tick_loop(self) -> None:
        while not self._stop.wait(self.tick_interval):
            now = self.clock()
            # Wall clocks can step backwards (NTP); the engine requires
            # monotone ticks, so clamp.
            self._last_tick = max(self._last_tick, now)
            self.engine.tick(self._last_tick)

    # ---------------------------------------------------------- endpoints

    def post_video(self, body: dict, _m) -> tuple[int, dict]:
        result = self.engine.ingest_video(
            str(body.get("id", "")),
            float(body.get("duration_s", 0)),
            str(body.get("locale", "")),
            self.clock(),
        )
        result.pop("actions", None)
        result["status"] = "in-review"
        return 201, result

    def post_worker(self, body: dict, _m) -> tuple[int, dict]:
        result = self.engine.register_worker(
            str(body.get("id", "")),
            str(body.get("identity_class", "unsigned")),
            str(body.get("locale", "")),
            self.clock(),
        )
        return 201, result

    def get_task(self, _body, m) -> tuple[int, dict | None]:
        task = self.engine.next_task(m["worker_id"])
        if task is None:
            return 204, None
        task["server_time"] = self.clock()
        return 200, task

    def post_vote(self, body: dict, _m) -> tuple[int, dict]:
        ack = self.engine.submit_vote(
            str(body.get("segment_id", "")),
            str(body.get("worker_id", "")),
            str(body.get("opinion", "")),
            self.clock(),
        )
        ack.pop("actions", None)
        ack["accepted"] = True
        return 200, ack

    def get_decision(self, _body, m) -> tuple[int, dict]:
        return 200, self.engine.query_decision(m["video_id"])

    def get_metrics(self, _body, _m) -> tuple[int, dict]:
        return 200, self.engine.metrics()


def _make_handler(service: ModerationService):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # quiet; the event log is the record
            pass

        def _send(self, status: int, doc: dict | None, extra_headers: dict | None = None) -> None:
            body = b"" if doc is None else json.dumps(doc).encode()
            self.send_response(status)
            self.send_header("Access-Control-Allow-Origin", "*")
            if extra_headers:
                for k, v in extra_headers.items():
                    self.send_header(k, v)
            if doc is not None:
                self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            if body:
                self.wfile.write(body)

        def _dispatch(self, method: str) -> None:
            for verb, pattern, name in _ROUTES:
                if verb != method:
                    continue
                m = pattern.match(self.path)
                if not m:
                    continue
                body = {}
                if method == "POST":
                    length = int(self.headers.get("Content-Length") or 0)
                    raw = self.rfile.read(length) if length else b""
                    try:
                        body = json.loads(raw) if raw else {}
                    except json.JSONDecodeError:
                        self._send(400, {"error": "invalid", "message": "body is not JSON"})
                        return
                try:
                    status, doc = getattr(service, name)(body, m.groupdict())
                except RequestError as exc:
                    self._send(_STATUS_BY_CODE.get(exc.code, 400), {"error": exc.code, "message": str(exc)})
                    return
                except (TypeError, ValueError) as exc:
                    self._send(400, {"error": "invalid", "message": str(exc)})
                    return
                headers = None
                if status == 204 and name == "get_task":
                    eligible_at = service.engine.next_eligible_at(m.groupdict()["worker_id"])
                    if eligible_at is not None:
                        headers = {"X-Next-Eligible-At": f"{eligible_at:.3f}"}
                self._send(status, doc, headers)
                return
            self._send(404, {"error": "not_found", "message": f"no route for {method} {self.path}"})

        def do_GET(self) -> None:
            self._dispatch("GET")

        def do_POST(self) -> None:
            self._dispatch("POST")

        def do_OPTIONS(self) -> None:
            self.send_response(204)
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.send_header("Content-Length", "0")
            self.end_headers()

    return Handler

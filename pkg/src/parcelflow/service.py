"""JSON-over-HTTP facade for registration, tracking, reports and bin occupancy.

Handlers are thin adapters: each one calls a single module operation and
maps its errors onto ``{code, message}`` bodies.
"""

from __future__ import annotations

import json
import logging
import re
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import unquote

from .core import DEFAULT_ZONES, EventKind, read_events, validate_label
from .engine import summarize
from .errors import TrackingError, ValidationError
from .metrics import classification_report, from_pairs
from .tracking import Checkpoint

log = logging.getLogger(__name__)

PREFIX = "/api/v1"


class ApiError(Exception):
    def __init__(self, http_status, code, message, **extra):
        super().__init__(message)
        self.http_status = http_status
        self.code = code
        self.message = message
        self.extra = extra

    def body(self):
        return {"code": self.code, "message": self.message, **self.extra}


def pairs_from_events(events):
    """(truth, predicted) pairs from every X-ray outcome in a simulation log."""
    out = []
    for ev in events:
        if ev.kind is EventKind.STATION_DONE and ev.payload.get("station") == "XRAY" and "truth" in ev.payload:
            out.append((ev.payload["truth"], ev.payload["measurement"]["predicted_class"]))
    return out


class ParcelService:
    def __init__(self, store, sim_events=None, zones=DEFAULT_ZONES, clock=time.time):
        self.store = store
        self.sim_events = None if sim_events is None else list(sim_events)
        self.zones = tuple(zones)
        self.clock = clock

    @classmethod
    def with_sim_log(cls, store, path, **kw):
        with open(path, encoding="utf-8") as fh:
            return cls(store, read_events(fh), **kw)

    def handle(self, method, path, body=b""):
        """Dispatch one request; returns ``(status, json-able body)``."""
        try:
            return self._route(method, path.split("?", 1)[0], body)
        except ApiError as err:
            return err.http_status, err.body()

    def _route(self, method, path, body):
        if method == "POST" and path == f"{PREFIX}/parcels":
            return self.register(self._json(body))
        m = re.fullmatch(rf"{PREFIX}/parcels/([^/]+)/(track|checkpoints)", path)
        if m and method == "GET" and m.group(2) == "track":
            return self.track(unquote(m.group(1)))
        if m and method == "POST" and m.group(2) == "checkpoints":
            return self.checkpoint(unquote(m.group(1)), self._json(body))
        if method == "GET" and path == f"{PREFIX}/report/classification":
            return self.report()
        if method == "GET" and path == f"{PREFIX}/bins":
            return self.bins()
        raise ApiError(404, "NOT_FOUND", f"no route for {method} {path}")

    @staticmethod
    def _json(body):
        try:
            doc = json.loads(body.decode("utf-8") if isinstance(body, bytes) else body)
        except (UnicodeDecodeError, ValueError):
            raise ApiError(400, "BAD_REQUEST", "body is not valid UTF-8 JSON") from None
        if not isinstance(doc, dict):
            raise ApiError(400, "BAD_REQUEST", "body must be a JSON object")
        return doc

    def register(self, doc):
        fields = {k: v for k, v in doc.items() if k != "route"}
        try:
            label = validate_label(fields, self.zones)
            route = doc.get("route")
            if route is None:
                self.store.register_parcel(label.id, self.clock())
            else:
                if not isinstance(route, list) or not all(isinstance(c, dict) for c in route):
                    raise ValidationError(["route must be a list of {name, lat, lon} objects"])
                try:
                    checkpoints = [Checkpoint.from_dict(c) for c in route]
                except KeyError as exc:
                    raise ValidationError([f"route checkpoint is missing {exc}"]) from None
                self.store.register_route(label.id, checkpoints, self.clock())
        except ValidationError as exc:
            raise ApiError(400, "VALIDATION", str(exc), errors=exc.errors) from None
        except TrackingError as exc:
            if exc.code == "DUPLICATE_PARCEL":
                raise ApiError(409, "DUPLICATE", exc.message) from None
            raise ApiError(400, "VALIDATION", exc.message, errors=[exc.message]) from None
        return 201, {"id": label.id}

    def track(self, parcel_id):
        try:
            return 200, self.store.query_track(parcel_id).to_dict()
        except TrackingError as exc:
            raise ApiError(404, "NOT_FOUND", exc.message) from None

    def checkpoint(self, parcel_id, doc):
        name = doc.get("name")
        ts = doc.get("ts", self.clock())
        if not isinstance(name, str) or isinstance(ts, bool) or not isinstance(ts, (int, float)):
            raise ApiError(400, "BAD_REQUEST", "body needs a string 'name' and numeric 'ts'")
        try:
            return 200, self.store.record_checkpoint(parcel_id, name, ts).to_dict()
        except TrackingError as exc:
            if exc.code == "UNKNOWN_PARCEL":
                raise ApiError(404, "NOT_FOUND", exc.message) from None
            raise ApiError(400, "BAD_REQUEST", f"{exc.code}: {exc.message}") from None

    def report(self):
        pairs = pairs_from_events(self.sim_events or [])
        if not pairs:
            raise ApiError(404, "NOT_FOUND", "no simulation data loaded")
        return 200, classification_report(from_pairs(pairs)).to_dict(rounded=True)

    def bins(self):
        if self.sim_events is None:
            raise ApiError(404, "NOT_FOUND", "no simulation log loaded")
        r = summarize(self.sim_events)
        return 200, {"bins": r.bin_occupancy, "dumped": r.dumped, "injected": r.injected}


def encode_body(body):
    return json.dumps(body, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


class _Handler(BaseHTTPRequestHandler):
    service: ParcelService = None
    protocol_version = "HTTP/1.1"

    def _serve(self, method):
        length = self.headers.get("Content-Length")
        try:
            body = self.rfile.read(int(length)) if length else b""
        except ValueError:
            status, payload = 400, {"code": "BAD_REQUEST", "message": "bad Content-Length"}
        else:
            status, payload = self.service.handle(method, self.path, body)
        data = encode_body(payload)
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self):
        self._serve("GET")

    def do_POST(self):
        self._serve("POST")

    def log_message(self, fmt, *args):
        log.info("%s " + fmt, self.address_string(), *args)


def make_server(service, host="127.0.0.1", port=8080):
    handler = type("Handler", (_Handler,), {"service": service})
    return ThreadingHTTPServer((host, port), handler)

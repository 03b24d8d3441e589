"""Telemetry gateway: ingest signed readings, apply threshold rules, serve
the latest value per SKU over HTTP, and keep an append-only abnormality
audit.

Rule evaluation follows ingestion order; the latest table keeps the
reading with the highest timestamp per SKU regardless of arrival order.
A byte-identical redelivery (same node, timestamp and SKU) is dropped
before rules run, so it can neither re-audit nor re-notify. Both tables
persist as JSON-line logs and are rebuilt by replay on restart.
"""

from __future__ import annotations

import http.client
import json
import math
import threading
import time
import urllib.parse
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .crypto import verify_signature
from .errors import TargetUnavailable
from .fees import BASELINE_GATEWAY_AVG_MS
from .sensing import TELEMETRY_FIELDS, canonical_reading_bytes

COMPARATORS = {
    ">": lambda a, b: a > b,
    "<": lambda a, b: a < b,
    ">=": lambda a, b: a >= b,
    "<=": lambda a, b: a <= b,
}

NUMERIC_FIELDS = ("timestamp", "lat", "lng", "temp", "hum")


@dataclass(frozen=True)
class Rule:
    name: str
    field: str  # message key: temp, hum, lat or lng
    comparator: str
    threshold: float
    actions: frozenset[str] = frozenset({"audit", "notify"})

    def violated_by(self, reading: dict) -> bool:
        return COMPARATORS[self.comparator](reading[self.field], self.threshold)


def default_rules() -> list[Rule]:
    # The example drug must be stored below 25 degrees; exactly 25 is fine.
    return [Rule(name="temperature-over-25", field="temp", comparator=">", threshold=25.0)]


def load_rules(path: str | Path) -> list[Rule]:
    import yaml

    raw = yaml.safe_load(Path(path).read_text())
    rules = []
    for entry in raw.get("rules", []):
        rules.append(
            Rule(
                name=str(entry["name"]),
                field=str(entry["field"]),
                comparator=str(entry["comparator"]),
                threshold=float(entry["threshold"]),
                actions=frozenset(entry.get("actions", ["audit", "notify"])),
            )
        )
    return rules


@dataclass
class ConsumeResult:
    status: str  # accepted | duplicate | rejected
    reason: str = ""


class OutboxSink:
    """Default notification sink: structured records, optionally to a file."""

    def __init__(self, path: Path | None = None):
        self.path = path
        self.records: list[dict] = []

    def send(self, notification: dict) -> None:
        self.records.append(notification)
        if self.path is not None:
            with open(self.path, "a") as fh:
                fh.write(json.dumps(notification, sort_keys=True) + "\n")


class GatewayCore:
    """Tables, rules and counters; transport-independent."""

    def __init__(
        self,
        rules: list[Rule] | None = None,
        recipients: list[str] | None = None,
        sink: OutboxSink | None = None,
        datadir: Path | None = None,
        clock=time.time,
    ):
        self.rules = default_rules() if rules is None else rules
        self.recipients = recipients or ["ops@example.invalid"]
        self.datadir = Path(datadir) if datadir else None
        if sink is None:
            sink = OutboxSink(self.datadir / "outbox.jsonl" if self.datadir else None)
        self.sink = sink
        self.clock = clock
        self._lock = threading.Lock()
        self._nodes: dict[str, bytes] = {}
        self._latest: dict[str, dict] = {}
        self._audit: list[dict] = []
        self._seen: set[tuple[str, float, str]] = set()
        self.counters = {"accepted": 0, "duplicate": 0, "bad_signature": 0, "malformed": 0}
        if self.datadir:
            self.datadir.mkdir(parents=True, exist_ok=True)
            self._replay_logs()

    # ---- node registry ----

    def register_node(self, node_id: str, public_key: bytes) -> None:
        self._nodes[node_id] = public_key

    # ---- persistence ----

    def _append_log(self, name: str, record: dict) -> None:
        if self.datadir:
            with open(self.datadir / name, "a") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")

    def _replay_logs(self) -> None:
        accepted = self.datadir / "accepted.jsonl"
        if accepted.exists():
            for line in accepted.read_text().splitlines():
                reading = json.loads(line)
                self._seen.add(self._dedup_key(reading))
                self._update_latest(reading)
        audit = self.datadir / "audit.jsonl"
        if audit.exists():
            self._audit = [json.loads(line) for line in audit.read_text().splitlines()]

    # ---- ingestion ----

    @staticmethod
    def _dedup_key(reading: dict) -> tuple[str, float, str]:
        return reading["node_id"], reading["timestamp"], reading["sku"]

    def _parse(self, raw: bytes) -> dict:
        message = json.loads(raw.decode("utf-8"))
        if not isinstance(message, dict):
            raise ValueError("message must be a JSON object")
        expected = set(TELEMETRY_FIELDS) | {"node_id", "signature"}
        if set(message) != expected:
            raise ValueError(f"message keys {sorted(message)} do not match the schema")
        for key in NUMERIC_FIELDS:
            if not isinstance(message[key], (int, float)) or isinstance(message[key], bool):
                raise ValueError(f"field {key} must be numeric")
        for key in ("sku", "lot", "drugName", "node_id", "signature"):
            if not isinstance(message[key], str):
                raise ValueError(f"field {key} must be a string")
        return message

    def consume(self, raw: bytes) -> ConsumeResult:
        with self._lock:
            try:
                message = self._parse(raw)
            except (ValueError, UnicodeDecodeError) as exc:
                self.counters["malformed"] += 1
                return ConsumeResult("rejected", f"MalformedMessage: {exc}")

            public_key = self._nodes.get(message["node_id"])
            reading = {k: message[k] for k in TELEMETRY_FIELDS}
            if public_key is None or not verify_signature(
                public_key, bytes.fromhex(message["signature"]), canonical_reading_bytes(reading)
            ):
                self.counters["bad_signature"] += 1
                return ConsumeResult("rejected", "BadSignature")

            reading["node_id"] = message["node_id"]
            if self._dedup_key(reading) in self._seen:
                self.counters["duplicate"] += 1
                return ConsumeResult("duplicate")
            self._seen.add(self._dedup_key(reading))
            self.counters["accepted"] += 1
            self._append_log("accepted.jsonl", reading)

            for rule in self.rules:
                if not rule.violated_by(reading):
                    continue
                if "audit" in rule.actions:
                    row = {"reading": reading, "rule": rule.name, "recordedAt": self.clock()}
                    self._audit.append(row)
                    self._append_log("audit.jsonl", row)
                if "notify" in rule.actions:
                    self.sink.send(
                        {
                            "recipients": self.recipients,
                            "subject": f"rule {rule.name} violated for {reading['sku']}",
                            "body": {"reading": reading, "rule": rule.name},
                            "sentAt": self.clock(),
                        }
                    )
            self._update_latest(reading)
            return ConsumeResult("accepted")

    def _update_latest(self, reading: dict) -> None:
        current = self._latest.get(reading["sku"])
        if current is None or reading["timestamp"] >= current["timestamp"]:
            self._latest[reading["sku"]] = reading

    # ---- queries ----

    def latest(self, sku: str) -> dict | None:
        with self._lock:
            reading = self._latest.get(sku)
            if reading is None:
                return None
            return {k: reading[k] for k in TELEMETRY_FIELDS}

    def audit_rows(self, sku: str, t_from: float | None = None, t_to: float | None = None) -> list[dict]:
        with self._lock:
            rows = [r for r in self._audit if r["reading"]["sku"] == sku]
        if t_from is not None:
            rows = [r for r in rows if r["reading"]["timestamp"] >= t_from]
        if t_to is not None:
            rows = [r for r in rows if r["reading"]["timestamp"] <= t_to]
        return sorted(rows, key=lambda r: r["reading"]["timestamp"])


def attach_broker(core: GatewayCore, client, topic: str) -> None:
    client.subscribe(topic, lambda data: core.consume(data))


# ---- HTTP front end ----


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    core: GatewayCore

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _json(self, status: int, body) -> None:
        data = json.dumps(body).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self) -> None:
        parsed = urllib.parse.urlparse(self.path)
        parts = [p for p in parsed.path.split("/") if p]
        if parts == ["healthz"]:
            self._json(200, {"ok": True})
            return
        if not parts or parts[0] != "shipments":
            self._json(400, {"error": "BadPath", "message": self.path})
            return
        if len(parts) == 2:
            sku = urllib.parse.unquote(parts[1])
            reading = self.core.latest(sku)
            if reading is None:
                self._json(404, {"error": "SkuNotFound", "sku": sku})
            else:
                self._json(200, reading)
            return
        if len(parts) == 3 and parts[2] == "audit":
            sku = urllib.parse.unquote(parts[1])
            query = urllib.parse.parse_qs(parsed.query)
            try:
                t_from = float(query["from"][0]) if "from" in query else None
                t_to = float(query["to"][0]) if "to" in query else None
            except ValueError:
                self._json(400, {"error": "BadQuery", "message": parsed.query})
                return
            self._json(200, self.core.audit_rows(sku, t_from, t_to))
            return
        self._json(400, {"error": "BadPath", "message": self.path})


class _Server(ThreadingHTTPServer):
    daemon_threads = True
    # must absorb a whole load-test thread pool connecting at once
    request_queue_size = 256

    def handle_error(self, request, client_address):
        # clients dropping keep-alive connections mid-teardown are routine
        import sys

        exc = sys.exc_info()[1]
        if not isinstance(exc, (ConnectionError, TimeoutError)):
            super().handle_error(request, client_address)


class GatewayServer:
    """Threaded HTTP front end over a GatewayCore."""

    def __init__(self, core: GatewayCore, host: str = "127.0.0.1", port: int = 0):
        handler = type("BoundHandler", (_Handler,), {"core": core})
        self._httpd = _Server((host, port), handler)
        self.host, self.port = self._httpd.server_address[:2]
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def start(self) -> "GatewayServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread:
            self._thread.join(timeout=5)


# ---- load testing ----


def _percentile(sorted_ms: list[float], pct: float) -> float:
    if not sorted_ms:
        return 0.0
    index = max(0, min(len(sorted_ms) - 1, math.ceil(pct / 100 * len(sorted_ms)) - 1))
    return sorted_ms[index]


def run_load_test(
    base_url: str,
    sku: str,
    requests: int = 1000,
    duration_s: float = 2.0,
    threads: int = 100,
) -> dict:
    """Drive ``requests`` GETs spread evenly over ``duration_s`` and report
    the latency statistics of the run."""
    parsed = urllib.parse.urlparse(base_url)
    path = f"/shipments/{urllib.parse.quote(sku)}"

    probe = http.client.HTTPConnection(parsed.hostname, parsed.port, timeout=5)
    try:
        probe.request("GET", path)
        status = probe.getresponse().status
        if status != 200:
            raise TargetUnavailable(f"{base_url}{path} returned {status}")
    except OSError as exc:
        raise TargetUnavailable(f"{base_url} unreachable: {exc}") from exc
    finally:
        probe.close()

    per_thread = [requests // threads + (1 if i < requests % threads else 0) for i in range(threads)]
    latencies_ms: list[float] = []
    failures = [0]
    lock = threading.Lock()
    start_barrier = threading.Barrier(threads + 1)

    def worker(count: int) -> None:
        conn = http.client.HTTPConnection(parsed.hostname, parsed.port, timeout=10)
        local: list[float] = []
        failed = 0
        start_barrier.wait()
        started = time.monotonic()
        pace = duration_s / count if count else 0.0
        for j in range(count):
            wait = started + j * pace - time.monotonic()
            if wait > 0:
                time.sleep(wait)
            t0 = time.monotonic()
            status = None
            # one reconnect-and-retry: a keep-alive connection may go stale
            for attempt in (0, 1):
                try:
                    conn.request("GET", path)
                    resp = conn.getresponse()
                    resp.read()
                    status = resp.status
                    break
                except (OSError, http.client.HTTPException):
                    conn.close()
                    conn = http.client.HTTPConnection(parsed.hostname, parsed.port, timeout=10)
            if status != 200:
                failed += 1
            local.append((time.monotonic() - t0) * 1000)
        conn.close()
        with lock:
            latencies_ms.extend(local)
            failures[0] += failed

    pool = [threading.Thread(target=worker, args=(c,), daemon=True) for c in per_thread if c]
    for t in pool:
        t.start()
    start_barrier.wait()
    t_start = time.monotonic()
    for t in pool:
        t.join()
    elapsed = time.monotonic() - t_start

    ordered = sorted(latencies_ms)
    sent = len(latencies_ms)
    failed = failures[0]
    return {
        "requestsSent": sent,
        "loadDurationS": duration_s,
        "failedRequests": failed,
        "errorPct": (failed / sent * 100) if sent else 0.0,
        "avgMs": sum(ordered) / sent if sent else 0.0,
        "minMs": ordered[0] if ordered else 0.0,
        "maxMs": ordered[-1] if ordered else 0.0,
        "p95Ms": _percentile(ordered, 95),
        "throughputRps": (sent - failed) / elapsed if elapsed else 0.0,
        "elapsedS": elapsed,
        "baselineAvgMs": BASELINE_GATEWAY_AVG_MS,
    }

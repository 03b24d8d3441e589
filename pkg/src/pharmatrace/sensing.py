"""Simulated shipment tracker: replays a scenario file as signed telemetry.

Each tick produces one JSON message with exactly the fields timestamp,
lat, lng, sku, lot, drugName, temp and hum, wrapped in an envelope with
node_id and an Ed25519 signature over the canonical field serialization.
Scenario files give breakpoints; values between breakpoints interpolate
linearly. A simulated clock makes the sequence reproducible; live runs
pace on the wall clock instead.
"""

from __future__ import annotations

import json
import random
import threading
from collections import deque
from dataclasses import dataclass
from pathlib import Path

from .broker import DEFAULT_TOPIC, BrokerClient
from .crypto import KeyPair
from .errors import BrokerUnavailable, MalformedScenario

TELEMETRY_FIELDS = ("timestamp", "lat", "lng", "sku", "lot", "drugName", "temp", "hum")
INTERPOLATED = ("lat", "lng", "temp", "hum")


@dataclass(frozen=True)
class Breakpoint:
    t: float
    lat: float
    lng: float
    temp: float
    hum: float


@dataclass(frozen=True)
class Scenario:
    sku: str
    lot: str
    drug_name: str
    breakpoints: tuple[Breakpoint, ...]

    def sample(self, t: float) -> dict:
        """Values at time t: clamped at the ends, linear in between."""
        bps = self.breakpoints
        if t <= bps[0].t:
            ref = bps[0]
            return {k: getattr(ref, k) for k in INTERPOLATED}
        if t >= bps[-1].t:
            ref = bps[-1]
            return {k: getattr(ref, k) for k in INTERPOLATED}
        for left, right in zip(bps, bps[1:]):
            if left.t <= t <= right.t:
                if right.t == left.t:
                    ref = right
                    return {k: getattr(ref, k) for k in INTERPOLATED}
                frac = (t - left.t) / (right.t - left.t)
                return {
                    k: getattr(left, k) + frac * (getattr(right, k) - getattr(left, k))
                    for k in INTERPOLATED
                }
        raise AssertionError("unreachable")


def load_scenario(path: str | Path) -> Scenario:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedScenario(f"{path}: {exc}") from exc
    return parse_scenario(raw, origin=str(path))


def parse_scenario(raw: dict, origin: str = "<inline>") -> Scenario:
    try:
        points = raw["breakpoints"]
        if not isinstance(points, list) or not points:
            raise MalformedScenario(f"{origin}: breakpoints must be a non-empty list")
        bps = tuple(
            Breakpoint(
                t=float(p["t"]),
                lat=float(p["lat"]),
                lng=float(p["lng"]),
                temp=float(p["temp"]),
                hum=float(p["hum"]),
            )
            for p in points
        )
        scenario = Scenario(
            sku=str(raw["sku"]),
            lot=str(raw["lot"]),
            drug_name=str(raw["drugName"]),
            breakpoints=bps,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedScenario(f"{origin}: {exc}") from exc
    for a, b in zip(bps, bps[1:]):
        if b.t < a.t:
            raise MalformedScenario(f"{origin}: breakpoint times must be non-decreasing")
    for p in bps:
        if not (-90 <= p.lat <= 90 and -180 <= p.lng <= 180 and 0 <= p.hum <= 100):
            raise MalformedScenario(f"{origin}: breakpoint out of range at t={p.t}")
    return scenario


@dataclass(frozen=True)
class NodeIdentity:
    node_id: str
    keypair: KeyPair


def canonical_reading_bytes(reading: dict) -> bytes:
    """The signed byte form: the eight fields in fixed order, compact JSON."""
    ordered = {k: reading[k] for k in TELEMETRY_FIELDS}
    return json.dumps(ordered, separators=(",", ":")).encode()


def sign_reading(identity: NodeIdentity, reading: dict) -> bytes:
    envelope = {k: reading[k] for k in TELEMETRY_FIELDS}
    envelope["node_id"] = identity.node_id
    envelope["signature"] = identity.keypair.sign(canonical_reading_bytes(reading)).hex()
    return json.dumps(envelope, separators=(",", ":")).encode()


class SensingNode:
    """Publishes one signed reading per interval to a broker topic."""

    def __init__(
        self,
        identity: NodeIdentity,
        scenario: Scenario,
        interval_s: float = 60.0,
        topic: str = DEFAULT_TOPIC,
        jitter_sigma: float = 0.0,
        seed: int = 0,
        start_time: float = 0.0,
        buffer_limit: int = 256,
    ):
        self.identity = identity
        self.scenario = scenario
        self.interval_s = interval_s
        self.topic = topic
        self.jitter_sigma = jitter_sigma
        self.start_time = start_time
        self._rng = random.Random(seed)
        self._pending: deque[bytes] = deque(maxlen=buffer_limit)
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    def reading_at(self, t: float) -> dict:
        values = self.scenario.sample(t)
        if self.jitter_sigma:
            values["temp"] += self._rng.gauss(0.0, self.jitter_sigma)
            values["hum"] += self._rng.gauss(0.0, self.jitter_sigma)
        return {
            "timestamp": self.start_time + t,
            "lat": values["lat"],
            "lng": values["lng"],
            "sku": self.scenario.sku,
            "lot": self.scenario.lot,
            "drugName": self.scenario.drug_name,
            "temp": values["temp"],
            "hum": values["hum"],
        }

    def message_at(self, t: float) -> bytes:
        return sign_reading(self.identity, self.reading_at(t))

    def run(self, publish, ticks: int) -> list[bool]:
        """Emit ``ticks`` messages through ``publish(topic, data) -> bool``.

        Messages the broker did not take are buffered (drop-oldest beyond
        the limit) and retried ahead of the next tick.
        """
        statuses: list[bool] = []
        for i in range(ticks):
            self._pending.append(self.message_at(i * self.interval_s))
            statuses.append(self._flush(publish))
        return statuses

    def _flush(self, publish) -> bool:
        while self._pending:
            message = self._pending[0]
            try:
                if not publish(self.topic, message):
                    return False
            except BrokerUnavailable:
                return False
            self._pending.popleft()
        return True

    # ---- live mode ----

    def start(self, client: BrokerClient) -> None:
        def loop() -> None:
            tick = 0
            while not self._stop.is_set():
                self._pending.append(self.message_at(tick * self.interval_s))
                self._flush(client.publish)
                tick += 1
                self._stop.wait(self.interval_s)

        self._thread = threading.Thread(target=loop, name="sensing-node", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread:
            self._thread.join(timeout=5)

"""Inbound-oracle bridge between contract execution and the data gateway.

A request escrows a link fee from the contract's balance and is recorded
pending. Off-chain oracle nodes poll for pending requests, fetch the
shipment's latest reading from the gateway over HTTP, scale it to a
fixed-point integer and deliver it back as an ordinary transaction. With a
quorum above one, the median of the distinct node responses is what the
callback stores.

Scaling: temperature and humidity use the unsigned-integer job and scale
by 10**2; latitude and longitude use the signed-integer job and scale by
10**6.
"""

from __future__ import annotations

import http.client
import json
import logging
import threading
import urllib.parse
from dataclasses import dataclass, field

from .contract import ContractState, OracleRequestRecord, ORACLE_FIELDS
from .crypto import Address, CONTRACT_ADDRESS, sha256
from .codec import Writer
from .errors import (
    AlreadyFulfilled,
    DuplicateResponse,
    GatewayUnreachable,
    GuardFailed,
    InsufficientLink,
    RequestExpired,
    SkuNotFound,
    UnknownField,
    UnknownRequest,
)
from .fees import tokens

log = logging.getLogger(__name__)

UNSIGNED_FIELDS = frozenset({"temperature", "humidity"})
FIELD_SCALE = {"temperature": 100, "humidity": 100, "latitude": 10**6, "longitude": 10**6}

REQUEST_OPS = {
    "requestTemperatureData": "temperature",
    "requestHumidityData": "humidity",
    "requestLatitude": "latitude",
    "requestLongitude": "longitude",
}

DEFAULT_CALLBACK = "recordTelemetry"


def scale_value(oracle_field: str, value: float) -> int:
    if oracle_field not in FIELD_SCALE:
        raise UnknownField(oracle_field)
    return round(value * FIELD_SCALE[oracle_field])


def descale_value(oracle_field: str, scaled: int) -> float:
    return scaled / FIELD_SCALE[oracle_field]


def median(values: list[int]) -> int:
    """Integer median; even-length lists round the midpoint down."""
    if not values:
        raise ValueError("median of empty list")
    s = sorted(values)
    mid = len(s) // 2
    if len(s) % 2:
        return s[mid]
    return (s[mid - 1] + s[mid]) // 2


def default_action_requests() -> dict[str, list[tuple[str, int]]]:
    """Per-action oracle requests whose fees reproduce the reference totals."""
    quarter = {
        "produceItemByManufacturer": tokens("0.125"),
        "sellItemByManufacturer": tokens("0.125"),
    }
    plan: dict[str, list[tuple[str, int]]] = {}
    from .fees import LINK_TOTAL_BY_ACTION

    for action, total in LINK_TOTAL_BY_ACTION.items():
        per_request = quarter.get(action, total // len(ORACLE_FIELDS))
        plan[action] = [(f, per_request) for f in ORACLE_FIELDS]
        assert sum(fee for _, fee in plan[action]) == total
    return plan


@dataclass
class OracleConfig:
    nodes: list[Address] = field(default_factory=list)
    quorum: int = 1
    timeout_ms: int = 60_000
    job_unsigned: str = "telemetry-uint-v1"
    job_signed: str = "telemetry-int-v1"
    field_fees: dict[str, int] = field(
        default_factory=lambda: {f: tokens("0.1") for f in ORACLE_FIELDS}
    )
    action_requests: dict[str, list[tuple[str, int]]] = field(
        default_factory=default_action_requests
    )

    def job_for(self, oracle_field: str) -> str:
        return self.job_unsigned if oracle_field in UNSIGNED_FIELDS else self.job_signed


def request_id_for(tx_id: bytes, index: int) -> bytes:
    return sha256(Writer().raw(tx_id).u32(index).getvalue())


def create_request(
    state: ContractState,
    cfg: OracleConfig,
    sku: str,
    oracle_field: str,
    fee: int,
    tx_id: bytes,
    index: int,
    height: int,
    timestamp_ms: int,
) -> bytes:
    """Escrow the fee from the contract balance and record a pending request.

    The caller must have checked the contract's balance already; a debit
    failure here means a handler skipped its validation step.
    """
    state.debit_link(CONTRACT_ADDRESS, fee)
    rid = request_id_for(tx_id, index)
    state.oracle_requests[rid] = OracleRequestRecord(
        request_id=rid,
        job_id=cfg.job_for(oracle_field),
        requester=CONTRACT_ADDRESS,
        sku=sku,
        oracle_field=oracle_field,
        callback=DEFAULT_CALLBACK,
        fee=fee,
        status="pending",
        created_height=height,
        created_at_ms=timestamp_ms,
    )
    return rid


def handle_request_op(
    state: ContractState, cfg: OracleConfig, op: str, sku: str, tx_id: bytes, height: int, ts_ms: int
) -> bytes:
    oracle_field = REQUEST_OPS.get(op)
    if oracle_field is None:
        raise UnknownField(op)
    fee = cfg.field_fees[oracle_field]
    if state.link_balance(CONTRACT_ADDRESS) < fee:
        raise InsufficientLink(
            f"contract holds {state.link_balance(CONTRACT_ADDRESS)} base units, fee is {fee}"
        )
    return create_request(state, cfg, sku, oracle_field, fee, tx_id, 0, height, ts_ms)


def issue_action_requests(
    state: ContractState, cfg: OracleConfig, action: str, sku: str, tx_id: bytes, height: int, ts_ms: int
) -> list[bytes]:
    """Oracle requests a lifecycle action issues, validated before any debit."""
    plan = cfg.action_requests.get(action, [])
    total = sum(fee for _, fee in plan)
    if state.link_balance(CONTRACT_ADDRESS) < total:
        raise InsufficientLink(
            f"action {action} needs {total} base units, contract holds "
            f"{state.link_balance(CONTRACT_ADDRESS)}"
        )
    return [
        create_request(state, cfg, sku, oracle_field, fee, tx_id, i, height, ts_ms)
        for i, (oracle_field, fee) in enumerate(plan)
    ]


def handle_fulfillment(
    state: ContractState,
    cfg: OracleConfig,
    caller: Address,
    request_id: bytes,
    value: int,
    error_flag: bool,
    height: int,
) -> None:
    """Record one node's response; finalize once the quorum is reached.

    Exactly one finalization happens per request. The escrowed fee is split
    equally across responding nodes with the remainder going to the first.
    """
    if caller not in cfg.nodes:
        raise GuardFailed("onlyOracleNode", f"{caller.hex()} is not a configured oracle node")
    record = state.oracle_requests.get(request_id)
    if record is None:
        raise UnknownRequest(request_id.hex())
    if record.status in ("fulfilled", "error"):
        raise AlreadyFulfilled(request_id.hex())
    if record.status == "expired":
        raise RequestExpired(request_id.hex())
    if any(node == caller for node, _, _ in record.responses):
        raise DuplicateResponse(f"{caller.hex()} already responded to {request_id.hex()}")

    record.responses.append((caller, value, error_flag))
    if len(record.responses) < cfg.quorum:
        return

    good = [v for _, v, err in record.responses if not err]
    if good:
        record.final_value = median(good)
        record.status = "fulfilled"
        state.telemetry[(record.sku, record.oracle_field)] = (record.final_value, height)
    else:
        record.status = "error"
        record.failure = "SkuNotFound"
    record.delivered_height = height

    responders = [node for node, _, _ in record.responses]
    share = record.fee // len(responders)
    remainder = record.fee - share * len(responders)
    for i, node in enumerate(responders):
        state.credit_link(node, share + (remainder if i == 0 else 0))


def expire_due(state: ContractState, cfg: OracleConfig, now_ms: int) -> list[bytes]:
    """Refund and close pending requests whose timeout elapsed.

    Runs at the start of block production with the new block's timestamp,
    so replay reproduces the exact same sweeps.
    """
    expired = []
    for rid in sorted(state.oracle_requests):
        record = state.oracle_requests[rid]
        if record.status != "pending":
            continue
        if record.created_at_ms + cfg.timeout_ms <= now_ms:
            record.status = "expired"
            record.failure = "QuorumNotReached"
            state.credit_link(record.requester, record.fee)
            expired.append(rid)
    return expired


# ---- off-chain oracle node ----


def fetch_gateway_reading(gateway_url: str, sku: str, timeout: float = 2.0) -> dict:
    """HTTP GET the latest reading for a sku from the data gateway."""
    parsed = urllib.parse.urlparse(gateway_url)
    conn = http.client.HTTPConnection(parsed.hostname, parsed.port, timeout=timeout)
    try:
        conn.request("GET", f"/shipments/{urllib.parse.quote(sku)}")
        resp = conn.getresponse()
        body = resp.read()
        if resp.status == 404:
            raise SkuNotFound(sku)
        if resp.status != 200:
            raise GatewayUnreachable(f"gateway returned {resp.status}")
        return json.loads(body)
    except (OSError, json.JSONDecodeError) as exc:
        raise GatewayUnreachable(str(exc)) from exc
    finally:
        conn.close()


def execute_job(gateway_url: str, request_view: dict) -> tuple[int, bool]:
    """Run one job: fetch, extract the field, scale. Returns (value, error)."""
    try:
        reading = fetch_gateway_reading(gateway_url, request_view["sku"])
    except SkuNotFound:
        return 0, True
    oracle_field = request_view["field"]
    key = {"temperature": "temp", "humidity": "hum", "latitude": "lat", "longitude": "lng"}[
        oracle_field
    ]
    return scale_value(oracle_field, float(reading[key])), False


class OracleNodeRunner:
    """Polls a node for pending requests and delivers fulfillments.

    One runner per configured oracle identity. A gateway outage leaves the
    request pending; it is retried on the next poll.
    """

    def __init__(self, node, keypair, gateway_url: str, poll_interval: float = 1.0):
        self.node = node
        self.keypair = keypair
        self.gateway_url = gateway_url
        self.poll_interval = poll_interval
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    def poll_once(self) -> int:
        """One poll cycle; returns the number of fulfillments submitted."""
        submitted = 0
        for view in self.node.pending_oracle_requests():
            if any(r["node"] == self.keypair.address.hex() for r in view["responses"]):
                continue
            try:
                value, err = execute_job(self.gateway_url, view)
            except GatewayUnreachable as exc:
                log.warning("gateway unreachable, retrying next poll: %s", exc)
                continue
            args = {
                "requestId": bytes.fromhex(view["requestId"]),
                "value": value,
                "error": 1 if err else 0,
            }
            self.node.submit_as(self.keypair, "submitOracleFulfillment", args)
            submitted += 1
        return submitted

    def _run(self) -> None:
        while not self._stop.is_set():
            try:
                self.poll_once()
            except Exception:
                log.exception("oracle poll failed")
            self._stop.wait(self.poll_interval)

    def start(self) -> None:
        self._thread = threading.Thread(target=self._run, name="oracle-node", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread:
            self._thread.join(timeout=5)

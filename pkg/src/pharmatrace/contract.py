"""Supply-chain contract storage: lifecycle states, items and oracle ledger.

A shipment moves through thirteen enumerated states, strictly one step per
accepted transaction. Ownership follows the purchase steps: the origin
manufacturer owns states 0-1, the purchasing distributor 2-7, the retailer
8-11 and the consumer at 12. ``ContractState`` is the full deterministic
state a node derives from its block log; its canonical serialization is
the state snapshot format (docs/formats.md).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import IntEnum

from .codec import Reader, Writer
from .crypto import Address


class ShipmentState(IntEnum):
    ProducedByManufacturer = 0
    UpdateInventoryByManufacturer = 1
    PurchasedByDistributor = 2
    ShippedByManufacturer = 3
    ReceivedByDistributor = 4
    ProcessedByDistributor = 5
    PackagedByDistributor = 6
    ForSaleByDistributor = 7
    PurchasedByRetailer = 8
    ShippedByDistributor = 9
    ReceivedByRetailer = 10
    ForSaleByRetailer = 11
    PurchasedByConsumer = 12


# Event names coincide with the state a successful step moves into.
EVENT_ORDER: list[str] = [s.name for s in ShipmentState]

# Guard names of the per-state modifiers, by the state value they require.
# The state-5 guard keeps its historical short name.
STATE_GUARDS: dict[int, str] = {
    0: "producedByManufacturer",
    1: "updateInventoryByManufacturer",
    2: "purchasedByDistributor",
    3: "shippedByManufacturer",
    4: "receivedByDistributor",
    5: "processByDistributor",
    6: "packagedByDistributor",
    7: "forSaleByDistributor",
    8: "purchasedByRetailer",
    9: "shippedByDistributor",
    10: "receivedByRetailer",
    11: "forSaleByRetailer",
    12: "purchasedByConsumer",
}

ROLES = ("manufacturer", "distributor", "retailer", "consumer")

ORACLE_FIELDS = ("temperature", "humidity", "latitude", "longitude")


@dataclass(frozen=True)
class EventRecord:
    name: str
    upc: int
    block_height: int
    tx_id: bytes

    def encode(self, w: Writer) -> None:
        w.str_(self.name).u64(self.upc).u64(self.block_height).raw(self.tx_id)

    @classmethod
    def decode(cls, r: Reader) -> "EventRecord":
        return cls(name=r.str_(), upc=r.u64(), block_height=r.u64(), tx_id=r.raw(32))

    def to_view(self) -> dict:
        return {
            "name": self.name,
            "upc": self.upc,
            "blockHeight": self.block_height,
            "txId": self.tx_id.hex(),
        }


@dataclass(frozen=True)
class HistoryEntry:
    event: str
    block_height: int
    tx_id: bytes
    prior_owner: Address
    new_owner: Address

    def encode(self, w: Writer) -> None:
        w.str_(self.event).u64(self.block_height).raw(self.tx_id)
        w.raw(self.prior_owner.value).raw(self.new_owner.value)

    @classmethod
    def decode(cls, r: Reader) -> "HistoryEntry":
        return cls(
            event=r.str_(),
            block_height=r.u64(),
            tx_id=r.raw(32),
            prior_owner=Address(r.raw(20)),
            new_owner=Address(r.raw(20)),
        )

    def to_view(self) -> dict:
        return {
            "event": self.event,
            "blockHeight": self.block_height,
            "txId": self.tx_id.hex(),
            "priorOwner": self.prior_owner.hex(),
            "newOwner": self.new_owner.hex(),
        }


@dataclass
class ShipmentItem:
    upc: int
    sku: str
    drug_name: str
    state: ShipmentState
    owner_id: Address
    origin_manufacturer_id: Address
    distributor_id: Address | None = None
    retailer_id: Address | None = None
    consumer_id: Address | None = None
    history: list[HistoryEntry] = field(default_factory=list)

    def encode(self) -> bytes:
        w = Writer()
        w.u64(self.upc).str_(self.sku).str_(self.drug_name).u8(int(self.state))
        w.raw(self.owner_id.value).raw(self.origin_manufacturer_id.value)
        for opt in (self.distributor_id, self.retailer_id, self.consumer_id):
            if opt is None:
                w.u8(0)
            else:
                w.u8(1).raw(opt.value)
        w.u32(len(self.history))
        for h in self.history:
            h.encode(w)
        return w.getvalue()

    @classmethod
    def decode(cls, data: bytes) -> "ShipmentItem":
        r = Reader(data)
        upc, sku, drug = r.u64(), r.str_(), r.str_()
        state = ShipmentState(r.u8())
        owner = Address(r.raw(20))
        origin = Address(r.raw(20))
        opts = [Address(r.raw(20)) if r.u8() else None for _ in range(3)]
        history = [HistoryEntry.decode(r) for _ in range(r.u32())]
        r.expect_eof()
        return cls(upc, sku, drug, state, owner, origin, *opts, history)

    def expected_owner(self) -> Address | None:
        """Custody rule: who must own the item in its current state."""
        s = int(self.state)
        if s <= 1:
            return self.origin_manufacturer_id
        if s <= 7:
            return self.distributor_id
        if s <= 11:
            return self.retailer_id
        return self.consumer_id

    def to_view(self) -> dict:
        return {
            "upc": self.upc,
            "sku": self.sku,
            "drugName": self.drug_name,
            "state": {"name": self.state.name, "value": int(self.state)},
            "ownerID": self.owner_id.hex(),
            "originManufacturerID": self.origin_manufacturer_id.hex(),
            "distributorID": self.distributor_id.hex() if self.distributor_id else None,
            "retailerID": self.retailer_id.hex() if self.retailer_id else None,
            "consumerID": self.consumer_id.hex() if self.consumer_id else None,
            "history": [h.to_view() for h in self.history],
        }


@dataclass
class OracleRequestRecord:
    """One inbound-oracle request tracked in contract storage."""

    request_id: bytes
    job_id: str
    requester: Address
    sku: str
    oracle_field: str
    callback: str
    fee: int
    status: str  # pending | fulfilled | error | expired
    created_height: int
    created_at_ms: int
    responses: list[tuple[Address, int, bool]] = field(default_factory=list)
    final_value: int | None = None
    delivered_height: int | None = None
    failure: str = ""

    def encode(self) -> bytes:
        w = Writer()
        w.raw(self.request_id).str_(self.job_id).raw(self.requester.value)
        w.str_(self.sku).str_(self.oracle_field).str_(self.callback)
        w.u128(self.fee).str_(self.status)
        w.u64(self.created_height).u64(self.created_at_ms)
        w.u32(len(self.responses))
        for node, value, err in self.responses:
            w.raw(node.value).i64(value).u8(1 if err else 0)
        if self.final_value is None:
            w.u8(0)
        else:
            w.u8(1).i64(self.final_value)
        w.u64(self.delivered_height if self.delivered_height is not None else 0)
        w.str_(self.failure)
        return w.getvalue()

    @classmethod
    def decode(cls, data: bytes) -> "OracleRequestRecord":
        r = Reader(data)
        rec = cls(
            request_id=r.raw(32),
            job_id=r.str_(),
            requester=Address(r.raw(20)),
            sku=r.str_(),
            oracle_field=r.str_(),
            callback=r.str_(),
            fee=r.u128(),
            status=r.str_(),
            created_height=r.u64(),
            created_at_ms=r.u64(),
        )
        rec.responses = [(Address(r.raw(20)), r.i64(), bool(r.u8())) for _ in range(r.u32())]
        rec.final_value = r.i64() if r.u8() else None
        delivered = r.u64()
        rec.delivered_height = delivered if delivered else None
        rec.failure = r.str_()
        r.expect_eof()
        return rec

    def to_view(self) -> dict:
        return {
            "requestId": self.request_id.hex(),
            "jobId": self.job_id,
            "requester": self.requester.hex(),
            "sku": self.sku,
            "field": self.oracle_field,
            "callback": self.callback,
            "fee": self.fee,
            "status": self.status,
            "createdHeight": self.created_height,
            "createdAtMs": self.created_at_ms,
            "responses": [
                {"node": n.hex(), "value": v, "error": e} for n, v, e in self.responses
            ],
            "value": self.final_value,
            "deliveredHeight": self.delivered_height,
            "failure": self.failure or None,
        }


SNAPSHOT_MAGIC = b"PTSNAP01"


@dataclass
class ContractState:
    """Everything replay derives from the block log, canonically hashable."""

    owner: Address
    roles: dict[str, set[Address]]
    items: dict[int, ShipmentItem] = field(default_factory=dict)
    nonces: dict[Address, int] = field(default_factory=dict)
    link: dict[Address, int] = field(default_factory=dict)
    oracle_requests: dict[bytes, OracleRequestRecord] = field(default_factory=dict)
    telemetry: dict[tuple[str, str], tuple[int, int]] = field(default_factory=dict)
    height: int = 0

    # ---- role registry ----

    def has_role(self, role: str, account: Address) -> bool:
        return account in self.roles[role]

    def grant_role(self, role: str, account: Address) -> None:
        self.roles[role].add(account)

    def revoke_role(self, role: str, account: Address) -> None:
        self.roles[role].discard(account)

    def roles_of(self, account: Address) -> dict:
        return {
            "owner": account == self.owner,
            **{role: self.has_role(role, account) for role in ROLES},
        }

    # ---- link ledger ----

    def link_balance(self, holder: Address) -> int:
        return self.link.get(holder, 0)

    def credit_link(self, holder: Address, amount: int) -> None:
        self.link[holder] = self.link.get(holder, 0) + amount

    def debit_link(self, holder: Address, amount: int) -> None:
        balance = self.link.get(holder, 0)
        if balance < amount:
            raise ValueError("link balance underflow")
        remaining = balance - amount
        if remaining:
            self.link[holder] = remaining
        else:
            self.link.pop(holder, None)

    def escrow_total(self) -> int:
        return sum(r.fee for r in self.oracle_requests.values() if r.status == "pending")

    # ---- canonical serialization ----

    def canonical_entries(self) -> list[tuple[str, bytes]]:
        entries: list[tuple[str, bytes]] = [("meta:height", Writer().u64(self.height).getvalue())]
        entries.append(("role:owner", self.owner.value))
        for role in ROLES:
            w = Writer()
            members = sorted(self.roles[role])
            w.u32(len(members))
            for a in members:
                w.raw(a.value)
            entries.append((f"role:{role}", w.getvalue()))
        for upc in sorted(self.items):
            entries.append((f"item:{upc:020d}", self.items[upc].encode()))
        for addr in sorted(self.nonces):
            entries.append((f"nonce:{addr.hex()}", Writer().u64(self.nonces[addr]).getvalue()))
        for addr in sorted(self.link):
            entries.append((f"link:{addr.hex()}", Writer().u128(self.link[addr]).getvalue()))
        for rid in sorted(self.oracle_requests):
            entries.append((f"oracle:{rid.hex()}", self.oracle_requests[rid].encode()))
        for (sku, fld) in sorted(self.telemetry):
            value, at_height = self.telemetry[(sku, fld)]
            entries.append(
                (f"telemetry:{sku}:{fld}", Writer().i64(value).u64(at_height).getvalue())
            )
        return sorted(entries)

    def snapshot_bytes(self) -> bytes:
        entries = self.canonical_entries()
        w = Writer()
        w.u64(self.height)
        w.u32(len(entries))
        for key, value in entries:
            w.str_(key).bytes_(value)
        return w.getvalue()

    def state_hash(self) -> bytes:
        return hashlib.sha256(self.snapshot_bytes()).digest()


def empty_roles() -> dict[str, set[Address]]:
    return {role: set() for role in ROLES}


def custody_anomalies(item: ShipmentItem) -> list[str]:
    """Check the item's recorded hand-offs against the custody rules."""
    anomalies: list[str] = []
    expected = item.expected_owner()
    if expected is None or item.owner_id != expected:
        anomalies.append(
            f"owner {item.owner_id.hex()} does not match custody rule for state {int(item.state)}"
        )
    for i, entry in enumerate(item.history):
        if entry.event != EVENT_ORDER[i]:
            anomalies.append(f"event {i} is {entry.event}, expected {EVENT_ORDER[i]}")
            continue
        value = ShipmentState[entry.event].value
        if value == 0:
            if entry.new_owner != item.origin_manufacturer_id:
                anomalies.append("creation did not assign ownership to the origin manufacturer")
        elif value in (2, 8, 12):
            holder = {2: item.distributor_id, 8: item.retailer_id, 12: item.consumer_id}[value]
            if holder is None or entry.new_owner != holder:
                anomalies.append(f"purchase at state {value} did not transfer to the recorded party")
        elif entry.new_owner != entry.prior_owner:
            anomalies.append(f"event {entry.event} changed ownership but is not a purchase step")
    return anomalies


def fetch_item_details(state: ContractState, upc: int) -> dict:
    from .errors import UnknownUPC

    item = state.items.get(upc)
    if item is None:
        raise UnknownUPC(f"no item with upc {upc}")
    return item.to_view()

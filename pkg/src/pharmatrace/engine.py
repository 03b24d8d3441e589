"""Deterministic transaction execution against the contract state.

Every operation validates its guards in the order role, state, caller
binding before touching state, so a failed transaction never changes the
state hash. Lifecycle steps additionally escrow their configured oracle
requests; the link check happens up front together with the guards.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import partial

from . import oracle
from .codec import Reader, Writer
from .contract import (
    ContractState,
    EventRecord,
    HistoryEntry,
    ROLES,
    STATE_GUARDS,
    ShipmentItem,
    ShipmentState,
    empty_roles,
)
from .crypto import Address, CONTRACT_ADDRESS
from .errors import (
    AlreadyHasRole,
    DuplicateUPC,
    GuardFailed,
    PharmatraceError,
    RoleDenied,
    UnknownOperation,
    UnknownUPC,
)

ROLE_GUARD = {role: "only" + role.capitalize() for role in ROLES}

# Wire signatures: operation name -> ordered (argument, type) pairs.
# Types: u64, i64, str, addr (20 raw bytes), b32 (32 raw bytes).
OP_SIGNATURES: dict[str, tuple[tuple[str, str], ...]] = {
    "produceItemByManufacturer": (("sku", "str"), ("drugName", "str"), ("upc", "u64")),
    "sellItemByManufacturer": (("upc", "u64"),),
    "purchaseItemByDistributor": (("upc", "u64"),),
    "shippedItemByManufacturer": (("upc", "u64"),),
    "receivedItemByDistributor": (("upc", "u64"),),
    "processedItemByDistributor": (("upc", "u64"),),
    "packageItemByDistributor": (("upc", "u64"),),
    "sellItemByDistributor": (("upc", "u64"),),
    "purchaseItemByRetailer": (("upc", "u64"),),
    "shippedItemByDistributor": (("upc", "u64"),),
    "receivedItemByRetailer": (("upc", "u64"),),
    "sellItemByRetailer": (("upc", "u64"),),
    "purchaseItemByConsumer": (("upc", "u64"),),
    "addManufacturer": (("account", "addr"),),
    "renounceManufacturer": (),
    "addDistributor": (("account", "addr"),),
    "renounceDistributor": (),
    "addRetailer": (("account", "addr"),),
    "renounceRetailer": (),
    "addConsumer": (("account", "addr"),),
    "renounceConsumer": (),
    "transferOwnership": (("account", "addr"),),
    "requestTemperatureData": (("sku", "str"),),
    "requestHumidityData": (("sku", "str"),),
    "requestLatitude": (("sku", "str"),),
    "requestLongitude": (("sku", "str"),),
    "submitOracleFulfillment": (("requestId", "b32"), ("value", "i64"), ("error", "u64")),
}


def encode_args(op: str, args: dict) -> bytes:
    sig = OP_SIGNATURES.get(op)
    if sig is None:
        raise UnknownOperation(op)
    w = Writer()
    for name, kind in sig:
        try:
            v = args[name]
        except KeyError:
            raise ValueError(f"{op} missing argument {name!r}") from None
        if kind == "u64":
            w.u64(int(v))
        elif kind == "i64":
            w.i64(int(v))
        elif kind == "str":
            w.str_(str(v))
        elif kind == "addr":
            w.raw(v.value if isinstance(v, Address) else Address.from_hex(v).value)
        elif kind == "b32":
            raw = bytes.fromhex(v) if isinstance(v, str) else bytes(v)
            if len(raw) != 32:
                raise ValueError(f"{op} argument {name!r} must be 32 bytes")
            w.raw(raw)
        else:
            raise AssertionError(kind)
    return w.getvalue()


def decode_args(op: str, blob: bytes) -> dict:
    sig = OP_SIGNATURES.get(op)
    if sig is None:
        raise UnknownOperation(op)
    r = Reader(blob)
    out: dict = {}
    for name, kind in sig:
        if kind == "u64":
            out[name] = r.u64()
        elif kind == "i64":
            out[name] = r.i64()
        elif kind == "str":
            out[name] = r.str_()
        elif kind == "addr":
            out[name] = Address(r.raw(20))
        elif kind == "b32":
            out[name] = r.raw(32)
    r.expect_eof()
    return out


@dataclass(frozen=True)
class TransitionSpec:
    op: str
    role: str
    from_state: int
    binding: str | None  # item attribute verifyCaller compares against
    custody: str | None  # purchase steps record the caller here and take ownership


# The twelve follow-up steps; creation is handled separately. Event names
# equal the target-state names, guard names come from STATE_GUARDS.
TRANSITIONS: dict[str, TransitionSpec] = {
    t.op: t
    for t in [
        TransitionSpec("sellItemByManufacturer", "manufacturer", 0, "owner_id", None),
        TransitionSpec("purchaseItemByDistributor", "distributor", 1, None, "distributor_id"),
        TransitionSpec("shippedItemByManufacturer", "manufacturer", 2, "origin_manufacturer_id", None),
        TransitionSpec("receivedItemByDistributor", "distributor", 3, "owner_id", None),
        TransitionSpec("processedItemByDistributor", "distributor", 4, "owner_id", None),
        TransitionSpec("packageItemByDistributor", "distributor", 5, "owner_id", None),
        TransitionSpec("sellItemByDistributor", "distributor", 6, "owner_id", None),
        TransitionSpec("purchaseItemByRetailer", "retailer", 7, None, "retailer_id"),
        TransitionSpec("shippedItemByDistributor", "distributor", 8, "distributor_id", None),
        TransitionSpec("receivedItemByRetailer", "retailer", 9, "owner_id", None),
        TransitionSpec("sellItemByRetailer", "retailer", 10, "owner_id", None),
        TransitionSpec("purchaseItemByConsumer", "consumer", 11, None, "consumer_id"),
    ]
}


@dataclass(frozen=True)
class ExecContext:
    height: int
    timestamp_ms: int
    tx_id: bytes


@dataclass
class TxResult:
    ok: bool
    events: list[EventRecord] = field(default_factory=list)
    error: dict | None = None

    def error_string(self) -> str:
        return "" if self.error is None else json.dumps(self.error, sort_keys=True)

    @staticmethod
    def error_from_string(s: str) -> dict | None:
        return json.loads(s) if s else None


@dataclass
class EngineConfig:
    owner: Address
    contract_link_funding: int
    oracle: oracle.OracleConfig = field(default_factory=oracle.OracleConfig)


class Engine:
    """Applies transactions to a ContractState; pure given config and input."""

    def __init__(self, cfg: EngineConfig):
        self.cfg = cfg

    def genesis_state(self) -> ContractState:
        # The owner bootstraps every role: each add function is guarded by
        # the role it grants, which would deadlock an empty registry.
        roles = empty_roles()
        for role in ROLES:
            roles[role].add(self.cfg.owner)
        state = ContractState(owner=self.cfg.owner, roles=roles)
        if self.cfg.contract_link_funding:
            state.credit_link(CONTRACT_ADDRESS, self.cfg.contract_link_funding)
        return state

    # ---- guard helpers ----

    def _require_role(self, state: ContractState, role: str, caller: Address) -> None:
        if not state.has_role(role, caller):
            raise RoleDenied(ROLE_GUARD[role], f"{caller.hex()} lacks role {role}")

    @staticmethod
    def _require_state(item: ShipmentItem, required: int) -> None:
        if int(item.state) != required:
            raise GuardFailed(
                STATE_GUARDS[required],
                f"item {item.upc} is in state {int(item.state)}, guard requires {required}",
            )

    @staticmethod
    def _verify_caller(caller: Address, expected: Address | None) -> None:
        if expected is None or caller != expected:
            raise GuardFailed("verifyCaller", f"sender {caller.hex()} does not match")

    # ---- execution ----

    def begin_block(self, state: ContractState, height: int, timestamp_ms: int) -> None:
        """Deterministic per-block maintenance before any transaction runs."""
        oracle.expire_due(state, self.cfg.oracle, timestamp_ms)
        state.height = height

    def execute(
        self, state: ContractState, sender: Address, op: str, args: dict, ctx: ExecContext
    ) -> TxResult:
        handler = self._handler(op)
        if handler is None:
            return TxResult(ok=False, error=UnknownOperation(op).payload())
        try:
            events = handler(state, sender, args, ctx) or []
            return TxResult(ok=True, events=events)
        except PharmatraceError as exc:
            return TxResult(ok=False, error=exc.payload())

    def _handler(self, op: str):
        if op in TRANSITIONS:
            return partial(self._apply_transition, op)
        return getattr(self, "_op_" + op, None) if op in OP_SIGNATURES else None

    # ---- lifecycle ----

    def _op_produceItemByManufacturer(self, state, sender, args, ctx):
        self._require_role(state, "manufacturer", sender)
        upc = args["upc"]
        if upc in state.items:
            raise DuplicateUPC(f"upc {upc} already exists")
        oracle.issue_action_requests(
            state, self.cfg.oracle, "produceItemByManufacturer", args["sku"], ctx.tx_id,
            ctx.height, ctx.timestamp_ms,
        )
        item = ShipmentItem(
            upc=upc,
            sku=args["sku"],
            drug_name=args["drugName"],
            state=ShipmentState.ProducedByManufacturer,
            owner_id=sender,
            origin_manufacturer_id=sender,
        )
        event = EventRecord("ProducedByManufacturer", upc, ctx.height, ctx.tx_id)
        item.history.append(HistoryEntry(event.name, ctx.height, ctx.tx_id, sender, sender))
        state.items[upc] = item
        return [event]

    def _apply_transition(self, op, state, sender, args, ctx):
        spec = TRANSITIONS[op]
        self._require_role(state, spec.role, sender)
        item = state.items.get(args["upc"])
        if item is None:
            raise UnknownUPC(f"no item with upc {args['upc']}")
        self._require_state(item, spec.from_state)
        if spec.binding is not None:
            self._verify_caller(sender, getattr(item, spec.binding))
        oracle.issue_action_requests(
            state, self.cfg.oracle, op, item.sku, ctx.tx_id, ctx.height, ctx.timestamp_ms
        )
        prior_owner = item.owner_id
        if spec.custody is not None:
            setattr(item, spec.custody, sender)
            item.owner_id = sender
        item.state = ShipmentState(spec.from_state + 1)
        event = EventRecord(item.state.name, item.upc, ctx.height, ctx.tx_id)
        item.history.append(
            HistoryEntry(event.name, ctx.height, ctx.tx_id, prior_owner, item.owner_id)
        )
        return [event]

    # ---- role management ----

    def _add_role(self, state, sender, args, role):
        self._require_role(state, role, sender)
        account = args["account"]
        if state.has_role(role, account):
            raise AlreadyHasRole(f"{account.hex()} already holds role {role}")
        state.grant_role(role, account)
        return []

    def _renounce_role(self, state, sender, role):
        if not state.has_role(role, sender):
            raise RoleDenied(ROLE_GUARD[role], f"{sender.hex()} does not hold role {role}")
        state.revoke_role(role, sender)
        return []

    def _op_addManufacturer(self, state, sender, args, ctx):
        return self._add_role(state, sender, args, "manufacturer")

    def _op_addDistributor(self, state, sender, args, ctx):
        return self._add_role(state, sender, args, "distributor")

    def _op_addRetailer(self, state, sender, args, ctx):
        return self._add_role(state, sender, args, "retailer")

    def _op_addConsumer(self, state, sender, args, ctx):
        return self._add_role(state, sender, args, "consumer")

    def _op_renounceManufacturer(self, state, sender, args, ctx):
        return self._renounce_role(state, sender, "manufacturer")

    def _op_renounceDistributor(self, state, sender, args, ctx):
        return self._renounce_role(state, sender, "distributor")

    def _op_renounceRetailer(self, state, sender, args, ctx):
        return self._renounce_role(state, sender, "retailer")

    def _op_renounceConsumer(self, state, sender, args, ctx):
        return self._renounce_role(state, sender, "consumer")

    def _op_transferOwnership(self, state, sender, args, ctx):
        if sender != state.owner:
            raise GuardFailed("onlyOwner", f"{sender.hex()} is not the contract owner")
        state.owner = args["account"]
        return []

    # ---- oracle ----

    def _op_requestTemperatureData(self, state, sender, args, ctx):
        return self._request(state, "requestTemperatureData", args, ctx)

    def _op_requestHumidityData(self, state, sender, args, ctx):
        return self._request(state, "requestHumidityData", args, ctx)

    def _op_requestLatitude(self, state, sender, args, ctx):
        return self._request(state, "requestLatitude", args, ctx)

    def _op_requestLongitude(self, state, sender, args, ctx):
        return self._request(state, "requestLongitude", args, ctx)

    def _request(self, state, op, args, ctx):
        oracle.handle_request_op(
            state, self.cfg.oracle, op, args["sku"], ctx.tx_id, ctx.height, ctx.timestamp_ms
        )
        return []

    def _op_submitOracleFulfillment(self, state, sender, args, ctx):
        oracle.handle_fulfillment(
            state,
            self.cfg.oracle,
            sender,
            args["requestId"],
            args["value"],
            bool(args["error"]),
            ctx.height,
        )
        return []

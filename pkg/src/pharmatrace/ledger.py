"""Hash-chained block ledger with round-robin proof-of-authority production.

Blocks are canonical binary records (docs/formats.md): the block hash is
the SHA-256 of everything before it in the record, each block links to its
parent's hash, and the producing validator must match the round-robin
schedule ``validators[height % len(validators)]``. The append-only block
log on disk is the source of truth; the state snapshot is a cache.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass, field
from pathlib import Path

from . import engine as engine_mod
from .codec import DecodeError, Reader, Writer
from .contract import ContractState, EventRecord
from .crypto import Address, KeyPair, ZERO32, sha256, verify_signature
from .errors import BadNonce, ChainCorrupt, InvalidSignature, NotScheduledValidator, UnknownOperation

BLOCK_LOG_MAGIC = b"PTBLKLOG"
SNAPSHOT_MAGIC = b"PTSNAP01"


@dataclass(frozen=True)
class Transaction:
    """A signed state-transition request."""

    nonce: int
    sender: Address
    operation: str
    args: dict
    public_key: bytes
    signature: bytes

    def payload_bytes(self) -> bytes:
        w = Writer()
        w.u64(self.nonce).raw(self.sender.value).str_(self.operation)
        w.bytes_(engine_mod.encode_args(self.operation, self.args))
        return w.getvalue()

    def tx_id(self) -> bytes:
        return sha256(self.payload_bytes())

    def verify(self) -> bool:
        if Address.from_public_key(self.public_key) != self.sender:
            return False
        return verify_signature(self.public_key, self.signature, self.payload_bytes())

    @classmethod
    def signed(cls, keypair: KeyPair, nonce: int, operation: str, args: dict) -> "Transaction":
        unsigned = cls(nonce, keypair.address, operation, args, keypair.public_bytes, b"")
        return cls(
            nonce,
            keypair.address,
            operation,
            args,
            keypair.public_bytes,
            keypair.sign(unsigned.payload_bytes()),
        )

    def encode(self, w: Writer) -> None:
        w.raw(self.payload_bytes()).raw(self.public_key).raw(self.signature)

    @classmethod
    def decode(cls, r: Reader) -> "Transaction":
        nonce = r.u64()
        sender = Address(r.raw(20))
        operation = r.str_()
        blob = r.bytes_()
        args = engine_mod.decode_args(operation, blob)
        public_key = r.raw(32)
        signature = r.raw(64)
        return cls(nonce, sender, operation, args, public_key, signature)


@dataclass(frozen=True)
class ExecutedTx:
    """A transaction as included in a block, with its execution outcome."""

    tx: Transaction
    failed: bool
    error: str  # canonical JSON of the error payload, empty on success

    def encode(self, w: Writer) -> None:
        self.tx.encode(w)
        w.u8(1 if self.failed else 0)
        w.str_(self.error)

    @classmethod
    def decode(cls, r: Reader) -> "ExecutedTx":
        return cls(tx=Transaction.decode(r), failed=bool(r.u8()), error=r.str_())


@dataclass(frozen=True)
class Block:
    height: int
    parent_hash: bytes
    timestamp_ms: int
    validator: Address
    txs: tuple[ExecutedTx, ...]
    events: tuple[EventRecord, ...]
    block_hash: bytes

    def content_bytes(self) -> bytes:
        w = Writer()
        w.u64(self.height).raw(self.parent_hash).u64(self.timestamp_ms)
        w.raw(self.validator.value)
        w.u32(len(self.txs))
        for etx in self.txs:
            etx.encode(w)
        w.u32(len(self.events))
        for ev in self.events:
            ev.encode(w)
        return w.getvalue()

    def compute_hash(self) -> bytes:
        return sha256(self.content_bytes())

    def encode(self) -> bytes:
        return self.content_bytes() + self.block_hash

    @classmethod
    def decode(cls, record: bytes) -> "Block":
        r = Reader(record)
        height = r.u64()
        parent = r.raw(32)
        ts = r.u64()
        validator = Address(r.raw(20))
        txs = tuple(ExecutedTx.decode(r) for _ in range(r.u32()))
        events = tuple(EventRecord.decode(r) for _ in range(r.u32()))
        block_hash = r.raw(32)
        r.expect_eof()
        return cls(height, parent, ts, validator, txs, events, block_hash)

    @classmethod
    def build(cls, height, parent_hash, timestamp_ms, validator, txs, events) -> "Block":
        block = cls(height, parent_hash, timestamp_ms, validator, tuple(txs), tuple(events), b"")
        return cls(
            height, parent_hash, timestamp_ms, validator, tuple(txs), tuple(events),
            block.compute_hash(),
        )


# ---- execution of a batch against state ----


def execute_transactions(
    engine: engine_mod.Engine,
    state: ContractState,
    txs: list[Transaction],
    height: int,
    timestamp_ms: int,
) -> tuple[list[ExecutedTx], list[EventRecord]]:
    """Run the per-block sweep then each transaction in order.

    A nonce out of sequence marks the transaction failed without a bump; any
    other failure bumps the nonce (the slot is consumed) and emits nothing.
    """
    engine.begin_block(state, height, timestamp_ms)
    executed: list[ExecutedTx] = []
    events: list[EventRecord] = []
    for tx in txs:
        ctx = engine_mod.ExecContext(height, timestamp_ms, tx.tx_id())
        expected = state.nonces.get(tx.sender, 0) + 1
        if tx.nonce != expected:
            result = engine_mod.TxResult(
                ok=False,
                error=BadNonce(f"expected nonce {expected}, got {tx.nonce}").payload(),
            )
        else:
            state.nonces[tx.sender] = tx.nonce
            result = engine.execute(state, tx.sender, tx.operation, tx.args, ctx)
        executed.append(ExecutedTx(tx, failed=not result.ok, error=result.error_string()))
        events.extend(result.events)
    return executed, events


# ---- mempool ----


class Mempool:
    """FIFO queue with serialized admission.

    Nonce admission is pipelining-aware: the expected nonce is the last
    accepted one plus the sender's transactions already queued, so callers
    may submit several transactions before the next block.
    """

    def __init__(self, base_nonce) -> None:
        self._base_nonce = base_nonce  # callable: Address -> last accepted nonce
        self._lock = threading.Lock()
        self._queue: list[Transaction] = []

    def _expected_locked(self, sender: Address) -> int:
        pending = sum(1 for t in self._queue if t.sender == sender)
        return self._base_nonce(sender) + pending + 1

    def _admit_locked(self, tx: Transaction) -> dict:
        if tx.operation not in engine_mod.OP_SIGNATURES:
            raise UnknownOperation(tx.operation)
        if not tx.verify():
            raise InvalidSignature(f"transaction {tx.tx_id().hex()} failed verification")
        expected = self._expected_locked(tx.sender)
        if tx.nonce != expected:
            raise BadNonce(f"expected nonce {expected}, got {tx.nonce}")
        self._queue.append(tx)
        return {"txId": tx.tx_id().hex(), "status": "pending"}

    def submit(self, tx: Transaction) -> dict:
        with self._lock:
            return self._admit_locked(tx)

    def submit_signed(self, keypair: KeyPair, operation: str, args: dict) -> dict:
        """Assign the next expected nonce, sign and enqueue atomically."""
        with self._lock:
            nonce = self._expected_locked(keypair.address)
            tx = Transaction.signed(keypair, nonce, operation, args)
            return self._admit_locked(tx)

    def expected_nonce(self, sender: Address) -> int:
        with self._lock:
            return self._expected_locked(sender)

    def drain(self) -> list[Transaction]:
        with self._lock:
            batch, self._queue = self._queue, []
        return batch

    def __len__(self) -> int:
        with self._lock:
            return len(self._queue)


# ---- chain ----


@dataclass
class LoadedRecord:
    raw: bytes
    block: Block | None
    decode_error: str = ""


class Chain:
    """In-memory block sequence mirroring the on-disk log."""

    def __init__(self, validators: list[Address], log_path: Path | None = None):
        if not validators:
            raise ValueError("validator set must not be empty")
        self.validators = validators
        self.records: list[LoadedRecord] = []
        self._log_path = log_path
        if log_path is not None and not log_path.exists():
            log_path.parent.mkdir(parents=True, exist_ok=True)
            log_path.write_bytes(BLOCK_LOG_MAGIC)

    @property
    def blocks(self) -> list[Block]:
        return [rec.block for rec in self.records if rec.block is not None]

    @property
    def height(self) -> int:
        return len(self.records) - 1

    def tip_hash(self) -> bytes:
        if not self.records:
            return ZERO32
        block = self.records[-1].block
        return block.block_hash if block else ZERO32

    def scheduled_validator(self, height: int) -> Address:
        return self.validators[height % len(self.validators)]

    def append(self, block: Block) -> None:
        record = block.encode()
        self.records.append(LoadedRecord(raw=record, block=block))
        if self._log_path is not None:
            with open(self._log_path, "ab") as fh:
                fh.write(Writer().u32(len(record)).getvalue())
                fh.write(record)

    @classmethod
    def load(cls, path: Path, validators: list[Address]) -> "Chain":
        data = path.read_bytes()
        if not data.startswith(BLOCK_LOG_MAGIC):
            raise ChainCorrupt(0, "bad block log magic")
        chain = cls(validators)
        pos = len(BLOCK_LOG_MAGIC)
        r = Reader(data[pos:])
        while not r.eof():
            try:
                record = r.bytes_()
            except DecodeError as exc:
                chain.records.append(LoadedRecord(raw=b"", block=None, decode_error=str(exc)))
                break
            try:
                block = Block.decode(record)
                chain.records.append(LoadedRecord(raw=record, block=block))
            except (DecodeError, ValueError) as exc:
                chain.records.append(LoadedRecord(raw=record, block=None, decode_error=str(exc)))
        chain._log_path = path
        return chain

    def verify(self) -> tuple[bool, int | None]:
        """True iff every record decodes, hashes, links and keeps schedule.

        Otherwise false plus the earliest violating height.
        """
        prev_hash = ZERO32
        for i, rec in enumerate(self.records):
            block = rec.block
            if block is None:
                return False, i
            if block.height != i:
                return False, i
            if block.compute_hash() != block.block_hash:
                return False, i
            if block.parent_hash != prev_hash:
                return False, i
            if block.validator != self.scheduled_validator(i):
                return False, i
            prev_hash = block.block_hash
        return True, None


def genesis_block(validators: list[Address], timestamp_ms: int) -> Block:
    return Block.build(0, ZERO32, timestamp_ms, validators[0], (), ())


# ---- replay ----


def replay(chain: Chain, engine: engine_mod.Engine, verify_signatures: bool = True) -> ContractState:
    """Re-execute the whole log from genesis; raises ChainCorrupt on any
    divergence between stored and recomputed outcomes."""
    ok, bad = chain.verify()
    if not ok:
        raise ChainCorrupt(bad if bad is not None else 0, "hash chain verification failed")
    state: ContractState | None = None
    for block in chain.blocks:
        if block.height == 0:
            state = engine.genesis_state()
            engine.begin_block(state, 0, block.timestamp_ms)
            continue
        assert state is not None
        if verify_signatures:
            for etx in block.txs:
                if not etx.tx.verify():
                    raise ChainCorrupt(block.height, "invalid transaction signature")
        executed, events = execute_transactions(
            engine, state, [etx.tx for etx in block.txs], block.height, block.timestamp_ms
        )
        stored = [(e.failed, e.error) for e in block.txs]
        recomputed = [(e.failed, e.error) for e in executed]
        if stored != recomputed or tuple(events) != block.events:
            raise ChainCorrupt(block.height, "replayed outcome differs from stored block")
    if state is None:
        raise ChainCorrupt(0, "empty chain")
    return state


def replay_clean_prefix(
    chain: Chain, engine: engine_mod.Engine
) -> tuple[ContractState, int | None]:
    """Replay only the blocks below the first verification failure.

    Returns the prefix state and the first bad height (None if the whole
    chain verifies). This is what queries fall back to on a tampered log.
    """
    ok, bad = chain.verify()
    state = engine.genesis_state()
    for block in chain.blocks:
        if bad is not None and block.height >= bad:
            break
        if block.height == 0:
            engine.begin_block(state, 0, block.timestamp_ms)
            continue
        execute_transactions(
            engine, state, [etx.tx for etx in block.txs], block.height, block.timestamp_ms
        )
    return state, bad


# ---- snapshot file ----


def save_snapshot(path: Path, state: ContractState) -> bytes:
    data = SNAPSHOT_MAGIC + state.snapshot_bytes()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    return data


def load_snapshot(path: Path) -> bytes:
    data = path.read_bytes()
    if not data.startswith(SNAPSHOT_MAGIC):
        raise ValueError("bad snapshot magic")
    return data[len(SNAPSHOT_MAGIC):]


# ---- provenance ----


def collect_item_events(chain: Chain, upc: int) -> list[EventRecord]:
    """Best-effort scan of every decodable block for the item's events."""
    out: list[EventRecord] = []
    for block in chain.blocks:
        out.extend(ev for ev in block.events if ev.upc == upc)
    return out


def provenance_report(chain: Chain, engine: engine_mod.Engine, upc: int) -> dict:
    """Authenticity verdict for one item: hash-chain integrity over every
    block up to the item's last event, canonical event order, custody rules.
    """
    from .contract import EVENT_ORDER, custody_anomalies
    from .errors import UnknownUPC

    events = collect_item_events(chain, upc)
    # The custody record comes from replaying the clean prefix only.
    state, bad = replay_clean_prefix(chain, engine)
    ok = bad is None
    item = state.items.get(upc)
    if item is None and not events:
        raise UnknownUPC(f"no item with upc {upc}")

    anomalies: list[str] = []
    last_event_height = max((ev.block_height for ev in events), default=0)
    if not ok and bad is not None and bad <= last_event_height:
        anomalies.append(f"hash chain verification failed at height {bad}")
    names = [ev.name for ev in events]
    if names != EVENT_ORDER[: len(names)]:
        anomalies.append(f"event sequence {names} is not a prefix of the canonical order")
    if item is not None:
        anomalies.extend(custody_anomalies(item))
    else:
        anomalies.append("item record not recoverable from the intact chain prefix")

    custody = []
    if item is not None:
        stages = [
            ("manufacturer", item.origin_manufacturer_id, 0),
            ("distributor", item.distributor_id, 2),
            ("retailer", item.retailer_id, 8),
            ("consumer", item.consumer_id, 12),
        ]
        for role, addr, state_value in stages:
            if addr is None:
                continue
            since = next(
                (h.block_height for h in item.history if h.event == EVENT_ORDER[state_value]),
                None,
            )
            custody.append({"role": role, "address": addr.hex(), "sinceBlock": since})

    return {
        "upc": upc,
        "authentic": not anomalies,
        "state": item.to_view()["state"] if item is not None else None,
        "custody": custody,
        "events": [ev.to_view() for ev in events],
        "anomalies": anomalies,
        "chain": {"ok": ok, "firstBadHeight": bad},
    }


def require_scheduled(chain: Chain, height: int, validator: Address) -> None:
    scheduled = chain.scheduled_validator(height)
    if validator != scheduled:
        raise NotScheduledValidator(
            f"height {height} is scheduled for {scheduled.hex()}, not {validator.hex()}"
        )

"""Node runtime: mempool, scheduled block production, queries, persistence.

Block production and transaction execution are single-threaded behind one
lock; submissions and read queries may arrive concurrently. With a
positive block interval a background producer ticks on the wall clock;
with interval 0 (test mode) a block is produced as soon as the mempool is
non-empty.
"""

from __future__ import annotations

import logging
import threading
import time
from pathlib import Path

from . import ledger
from .contract import fetch_item_details
from .crypto import Address, KeyPair
from .engine import Engine, EngineConfig, TxResult
from .errors import ChainCorrupt

log = logging.getLogger(__name__)

BLOCK_LOG_NAME = "blocks.log"
SNAPSHOT_NAME = "snapshot.bin"


def now_ms() -> int:
    return int(time.time() * 1000)


class Node:
    def __init__(
        self,
        engine_cfg: EngineConfig,
        validators: list[Address],
        block_interval_s: float = 4.0,
        datadir: Path | None = None,
        genesis_timestamp_ms: int | None = None,
    ):
        self.engine = Engine(engine_cfg)
        self.block_interval_s = block_interval_s
        self.datadir = Path(datadir) if datadir else None
        self._lock = threading.RLock()
        self._outcomes: dict[str, dict] = {}
        self._work = threading.Event()
        self._stop = threading.Event()
        self._producer: threading.Thread | None = None

        self.corrupt_from: int | None = None
        log_path = self.datadir / BLOCK_LOG_NAME if self.datadir else None
        if log_path is not None and log_path.exists():
            self.chain = ledger.Chain.load(log_path, validators)
            try:
                self.state = ledger.replay(self.chain, self.engine)
                self._check_snapshot_cache()
            except ChainCorrupt as exc:
                # Keep serving queries from the intact prefix; production is
                # refused until the log is repaired or replaced.
                log.error("block log fails verification at height %s", exc.height)
                self.state, self.corrupt_from = ledger.replay_clean_prefix(
                    self.chain, self.engine
                )
        else:
            self.chain = ledger.Chain(validators, log_path)
            genesis = ledger.genesis_block(
                validators, now_ms() if genesis_timestamp_ms is None else genesis_timestamp_ms
            )
            self.chain.append(genesis)
            self.state = self.engine.genesis_state()
            self.engine.begin_block(self.state, 0, genesis.timestamp_ms)
            self._write_snapshot()

        self.mempool = ledger.Mempool(self._last_accepted_nonce)

    # ---- persistence ----

    def _write_snapshot(self) -> None:
        if self.datadir and self.corrupt_from is None:
            ledger.save_snapshot(self.datadir / SNAPSHOT_NAME, self.state)

    def _check_snapshot_cache(self) -> None:
        path = self.datadir / SNAPSHOT_NAME if self.datadir else None
        if path is None or not path.exists():
            self._write_snapshot()
            return
        if ledger.load_snapshot(path) != self.state.snapshot_bytes():
            log.warning("snapshot cache is stale, rewriting from the block log")
            self._write_snapshot()

    # ---- submission ----

    def _last_accepted_nonce(self, sender: Address) -> int:
        with self._lock:
            return self.state.nonces.get(sender, 0)

    def submit(self, tx: ledger.Transaction) -> dict:
        receipt = self.mempool.submit(tx)
        self._work.set()
        return receipt

    def next_nonce(self, sender: Address) -> int:
        return self.mempool.expected_nonce(sender)

    def submit_as(self, keypair: KeyPair, operation: str, args: dict) -> dict:
        receipt = self.mempool.submit_signed(keypair, operation, args)
        self._work.set()
        return receipt

    # ---- block production ----

    def produce_block(self, at_ms: int | None = None, validator: Address | None = None) -> ledger.Block:
        with self._lock:
            if self.corrupt_from is not None:
                raise ChainCorrupt(self.corrupt_from, "refusing to extend a corrupt log")
            height = self.chain.height + 1
            scheduled = self.chain.scheduled_validator(height)
            if validator is not None:
                ledger.require_scheduled(self.chain, height, validator)
            timestamp = now_ms() if at_ms is None else at_ms
            txs = self.mempool.drain()
            executed, events = ledger.execute_transactions(
                self.engine, self.state, txs, height, timestamp
            )
            block = ledger.Block.build(
                height, self.chain.tip_hash(), timestamp, scheduled, executed, events
            )
            self.chain.append(block)
            for etx in block.txs:
                self._outcomes[etx.tx.tx_id().hex()] = {
                    "txId": etx.tx.tx_id().hex(),
                    "status": "failed" if etx.failed else "ok",
                    "error": TxResult.error_from_string(etx.error),
                    "blockHeight": height,
                    "events": [
                        ev.to_view() for ev in block.events if ev.tx_id == etx.tx.tx_id()
                    ],
                }
            self._write_snapshot()
            return block

    def simulate_intervals(self, intervals_s: list[float]) -> list[float]:
        """Produce one empty block per interval with simulated timestamps;
        returns the observed gaps in seconds."""
        with self._lock:
            tip_ts = self.chain.blocks[-1].timestamp_ms
            heights_before = self.chain.height
        ts = tip_ts
        for gap in intervals_s:
            ts += round(gap * 1000)
            self.produce_block(at_ms=ts)
        with self._lock:
            blocks = self.chain.blocks[heights_before:]
        return [(b.timestamp_ms - a.timestamp_ms) / 1000 for a, b in zip(blocks, blocks[1:])]

    def _producer_loop(self) -> None:
        while not self._stop.is_set():
            try:
                if self.block_interval_s > 0:
                    if self._stop.wait(self.block_interval_s):
                        break
                    self.produce_block()
                else:
                    if not self._work.wait(0.05):
                        continue
                    self._work.clear()
                    if len(self.mempool):
                        self.produce_block()
            except ChainCorrupt:
                log.error("stopping block production on a corrupt log")
                return

    def start(self) -> None:
        self._producer = threading.Thread(target=self._producer_loop, name="producer", daemon=True)
        self._producer.start()

    def stop(self) -> None:
        self._stop.set()
        self._work.set()
        if self._producer:
            self._producer.join(timeout=5)

    def wait_for_tx(self, tx_id_hex: str, timeout: float = 10.0) -> dict | None:
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            with self._lock:
                outcome = self._outcomes.get(tx_id_hex)
            if outcome is not None:
                return outcome
            time.sleep(0.005)
        return None

    # ---- queries ----

    def item_details(self, upc: int) -> dict:
        with self._lock:
            return fetch_item_details(self.state, upc)

    def provenance(self, upc: int) -> dict:
        with self._lock:
            return ledger.provenance_report(self.chain, self.engine, upc)

    def roles_of(self, address: Address) -> dict:
        with self._lock:
            return self.state.roles_of(address)

    def verify(self) -> dict:
        with self._lock:
            ok, bad = self.chain.verify()
        return {"ok": ok, "firstBadHeight": bad}

    def oracle_request_view(self, request_id_hex: str) -> dict | None:
        with self._lock:
            record = self.state.oracle_requests.get(bytes.fromhex(request_id_hex))
            return record.to_view() if record else None

    def pending_oracle_requests(self) -> list[dict]:
        with self._lock:
            return [
                r.to_view()
                for r in self.state.oracle_requests.values()
                if r.status == "pending"
            ]

    def events_for(self, upc: int | None = None) -> list[dict]:
        with self._lock:
            out = []
            for block in self.chain.blocks:
                for ev in block.events:
                    if upc is None or ev.upc == upc:
                        out.append(ev.to_view())
            return out

    def telemetry_view(self, sku: str) -> dict:
        from .oracle import descale_value

        with self._lock:
            out = {}
            for (s, fld), (value, height) in self.state.telemetry.items():
                if s == sku:
                    out[fld] = {
                        "scaled": value,
                        "value": descale_value(fld, value),
                        "blockHeight": height,
                    }
            return out

    def link_view(self) -> dict:
        with self._lock:
            return {
                "balances": {a.hex(): v for a, v in sorted(self.state.link.items())},
                "escrow": self.state.escrow_total(),
            }

    def state_hash_hex(self) -> str:
        with self._lock:
            return self.state.state_hash().hex()

"""One-process assembly of the full pipeline.

Broker, gateway (subscribed to the telemetry topic), ledger node with its
HTTP API, oracle node runners and optionally a sensing node, wired exactly
as they would be across processes: telemetry flows over broker frames,
oracle jobs fetch from the gateway over HTTP, fulfillments enter the
ledger as transactions.
"""

from __future__ import annotations

import time
from pathlib import Path

from .api import ApiServer, NodeService
from .broker import Broker, BrokerClient
from .config import build_engine_config, load_config
from .crypto import KeyPair
from .gateway import GatewayCore, GatewayServer, load_rules
from .keystore import Keystore
from .node import Node
from .oracle import OracleNodeRunner
from .sensing import NodeIdentity, Scenario, SensingNode

ROLE_ACCOUNTS = ("manufacturer", "distributor", "retailer", "consumer")


class LocalStack:
    def __init__(
        self,
        cfg: dict | None = None,
        datadir: Path | None = None,
        block_interval_s: float | None = None,
        oracle_poll_s: float | None = None,
        scenario: Scenario | None = None,
        sensing_interval_s: float | None = None,
        with_api: bool = False,
        ephemeral_ports: bool = True,
    ):
        self.cfg = cfg or load_config()
        self.datadir = Path(datadir) if datadir else None
        self._block_interval = (
            self.cfg["node"]["block_interval_s"] if block_interval_s is None else block_interval_s
        )
        self._oracle_poll = (
            self.cfg["oracle"]["poll_interval_s"] if oracle_poll_s is None else oracle_poll_s
        )
        self._scenario = scenario
        self._sensing_interval = (
            self.cfg["sensing"]["interval_s"] if sensing_interval_s is None else sensing_interval_s
        )
        self._with_api = with_api
        self._ephemeral = ephemeral_ports

        self.keystore = Keystore(self.datadir / "keystore.json" if self.datadir else None)
        self.broker: Broker | None = None
        self.gateway_core: GatewayCore | None = None
        self.gateway: GatewayServer | None = None
        self.node: Node | None = None
        self.api: ApiServer | None = None
        self.oracle_runners: list[OracleNodeRunner] = []
        self.sensing: SensingNode | None = None
        self._gateway_client: BrokerClient | None = None
        self._sensing_client: BrokerClient | None = None

    # ---- lifecycle ----

    def start(self) -> "LocalStack":
        cfg = self.cfg
        owner = self.keystore.ensure("owner")
        for name in ROLE_ACCOUNTS:
            self.keystore.ensure(name)
        oracle_keys = [
            self.keystore.ensure(f"oracle-{i}") for i in range(cfg["oracle"]["node_count"])
        ]
        validators = [
            self.keystore.ensure(f"validator-{i}").address
            for i in range(cfg["node"]["validator_count"])
        ]

        self.broker = Broker(
            cfg["broker"]["host"], 0 if self._ephemeral else cfg["broker"]["port"]
        ).start()

        rules = load_rules(cfg["gateway"]["rules_file"]) if cfg["gateway"]["rules_file"] else None
        self.gateway_core = GatewayCore(
            rules=rules,
            recipients=cfg["gateway"]["recipients"],
            datadir=self.datadir / "gateway" if self.datadir else None,
        )
        self.gateway = GatewayServer(
            self.gateway_core, cfg["gateway"]["host"], 0 if self._ephemeral else cfg["gateway"]["port"]
        ).start()
        self._gateway_client = BrokerClient(self.broker.host, self.broker.port)
        topic = cfg["sensing"]["topic"]
        self._gateway_client.subscribe(topic, lambda data: self.gateway_core.consume(data))

        engine_cfg = build_engine_config(cfg, owner.address, [k.address for k in oracle_keys])
        self.node = Node(
            engine_cfg,
            validators,
            block_interval_s=self._block_interval,
            datadir=self.datadir / "node" if self.datadir else None,
        )
        self.node.start()

        if self._with_api:
            service = NodeService(self.node, self.keystore)
            self.api = ApiServer(
                service, cfg["api"]["host"], 0 if self._ephemeral else cfg["api"]["port"]
            ).start()

        for kp in oracle_keys:
            runner = OracleNodeRunner(
                self.node, kp, self.gateway.url, poll_interval=self._oracle_poll
            )
            runner.start()
            self.oracle_runners.append(runner)

        if self._scenario is not None:
            identity = NodeIdentity("sensor-1", KeyPair.generate())
            self.gateway_core.register_node(identity.node_id, identity.keypair.public_bytes)
            self.sensing = SensingNode(
                identity,
                self._scenario,
                interval_s=self._sensing_interval,
                topic=topic,
                jitter_sigma=cfg["sensing"]["jitter_sigma"],
                start_time=time.time(),
            )
            self._sensing_client = BrokerClient(self.broker.host, self.broker.port)
            self.sensing.start(self._sensing_client)
        return self

    def stop(self) -> None:
        if self.sensing:
            self.sensing.stop()
        for runner in self.oracle_runners:
            runner.stop()
        if self.api:
            self.api.stop()
        if self.node:
            self.node.stop()
        for client in (self._sensing_client, self._gateway_client):
            if client:
                client.close()
        if self.gateway:
            self.gateway.stop()
        if self.broker:
            self.broker.stop()

    # ---- conveniences ----

    def run_tx(self, account: str, operation: str, args: dict, timeout: float = 10.0) -> dict:
        keypair = self.keystore.get(account)
        receipt = self.node.submit_as(keypair, operation, args)
        outcome = self.node.wait_for_tx(receipt["txId"], timeout=timeout)
        if outcome is None:
            raise TimeoutError(f"{operation} not mined within {timeout}s")
        return outcome

    def grant_demo_roles(self) -> None:
        ops = {
            "manufacturer": "addManufacturer",
            "distributor": "addDistributor",
            "retailer": "addRetailer",
            "consumer": "addConsumer",
        }
        for name, op in ops.items():
            outcome = self.run_tx("owner", op, {"account": self.keystore.get(name).address})
            if outcome["status"] != "ok":
                raise RuntimeError(f"role grant {op} failed: {outcome['error']}")

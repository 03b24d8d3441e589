import pytest

from pharmatrace.crypto import KeyPair, sha256
from pharmatrace.engine import Engine, EngineConfig, ExecContext
from pharmatrace.fees import tokens
from pharmatrace.node import Node
from pharmatrace.oracle import OracleConfig

ACTOR_NAMES = (
    "owner",
    "manufacturer",
    "distributor",
    "retailer",
    "consumer",
    "oracle",
    "oracle2",
    "oracle3",
    "stranger",
)


@pytest.fixture(scope="session")
def actors() -> dict[str, KeyPair]:
    return {name: KeyPair.from_seed(sha256(name.encode())) for name in ACTOR_NAMES}


@pytest.fixture
def engine_cfg(actors) -> EngineConfig:
    return EngineConfig(
        owner=actors["owner"].address,
        contract_link_funding=tokens("1000"),
        oracle=OracleConfig(nodes=[actors["oracle"].address]),
    )


@pytest.fixture
def validators(actors) -> list:
    return [KeyPair.from_seed(sha256(f"validator-{i}".encode())).address for i in range(3)]


@pytest.fixture
def node(engine_cfg, validators) -> Node:
    return Node(engine_cfg, validators, block_interval_s=0, genesis_timestamp_ms=1_000)


def run_tx(node: Node, keypair: KeyPair, operation: str, args: dict, gap_ms: int = 1_000) -> dict:
    """Submit, mine one block, return the outcome."""
    receipt = node.submit_as(keypair, operation, args)
    tip = node.chain.blocks[-1].timestamp_ms
    node.produce_block(at_ms=tip + gap_ms)
    outcome = node.wait_for_tx(receipt["txId"], timeout=2)
    assert outcome is not None
    return outcome


def grant_roles(node: Node, actors) -> None:
    owner = actors["owner"]
    for role in ("Manufacturer", "Distributor", "Retailer", "Consumer"):
        outcome = run_tx(node, owner, f"add{role}", {"account": actors[role.lower()].address})
        assert outcome["status"] == "ok", outcome


LIFECYCLE = [
    ("manufacturer", "sellItemByManufacturer"),
    ("distributor", "purchaseItemByDistributor"),
    ("manufacturer", "shippedItemByManufacturer"),
    ("distributor", "receivedItemByDistributor"),
    ("distributor", "processedItemByDistributor"),
    ("distributor", "packageItemByDistributor"),
    ("distributor", "sellItemByDistributor"),
    ("retailer", "purchaseItemByRetailer"),
    ("distributor", "shippedItemByDistributor"),
    ("retailer", "receivedItemByRetailer"),
    ("retailer", "sellItemByRetailer"),
    ("consumer", "purchaseItemByConsumer"),
]


def drive_lifecycle(node: Node, actors, upc: int = 42, sku: str = "SKU-1", through: int = 12):
    """Create the item and advance it to state ``through``."""
    outcome = run_tx(
        node,
        actors["manufacturer"],
        "produceItemByManufacturer",
        {"sku": sku, "drugName": "Acetaminophen", "upc": upc},
    )
    assert outcome["status"] == "ok", outcome
    for account, operation in LIFECYCLE[:through]:
        outcome = run_tx(node, actors[account], operation, {"upc": upc})
        assert outcome["status"] == "ok", outcome


def exec_ctx(height: int = 1, ts_ms: int = 10_000, seed: int = 0) -> ExecContext:
    return ExecContext(height, ts_ms, sha256(f"tx-{seed}".encode()))


def fresh_state(engine_cfg):
    engine = Engine(engine_cfg)
    return engine, engine.genesis_state()

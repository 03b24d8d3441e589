"""Oracle bridge: scaling, escrow, exactly-once fulfillment, aggregation,
expiry refunds and link conservation."""

import pytest

from conftest import exec_ctx, fresh_state

from pharmatrace.crypto import CONTRACT_ADDRESS, KeyPair, sha256
from pharmatrace.engine import Engine, EngineConfig
from pharmatrace.errors import UnknownField
from pharmatrace.fees import LINK_TOTAL_BY_ACTION, tokens
from pharmatrace.oracle import (
    OracleConfig,
    default_action_requests,
    descale_value,
    median,
    scale_value,
)


def total_link(state) -> int:
    return sum(state.link.values()) + state.escrow_total()


def pending_ids(state) -> list[bytes]:
    return [rid for rid, r in state.oracle_requests.items() if r.status == "pending"]


# ---- fixed-point scaling ----


def test_scaling_rules():
    assert scale_value("temperature", 23.5) == 2350
    assert scale_value("temperature", -5.25) == -525
    assert scale_value("humidity", 42.0) == 4200
    assert scale_value("latitude", 33.123456) == 33123456
    assert scale_value("longitude", -96.75) == -96750000
    assert descale_value("temperature", 2350) == 23.5


def test_unknown_field_rejected():
    with pytest.raises(UnknownField):
        scale_value("pressure", 1.0)


# ---- aggregation ----


def test_median_is_outlier_robust():
    assert median([2340, 2350, 9999]) == 2350
    assert median([5]) == 5
    assert median([2, 4]) == 3
    with pytest.raises(ValueError):
        median([])


# ---- request path ----


def test_request_escrows_fee(engine_cfg, actors):
    engine, state = fresh_state(engine_cfg)
    funding = state.link_balance(CONTRACT_ADDRESS)
    fee = engine.cfg.oracle.field_fees["temperature"]
    result = engine.execute(
        state, actors["stranger"].address, "requestTemperatureData", {"sku": "SKU-1"}, exec_ctx()
    )
    assert result.ok
    assert state.link_balance(CONTRACT_ADDRESS) == funding - fee
    assert state.escrow_total() == fee
    (request,) = state.oracle_requests.values()
    assert request.status == "pending"
    assert request.oracle_field == "temperature"
    assert request.job_id == engine.cfg.oracle.job_unsigned
    assert request.requester == CONTRACT_ADDRESS


def test_latitude_uses_signed_job(engine_cfg, actors):
    engine, state = fresh_state(engine_cfg)
    engine.execute(state, actors["stranger"].address, "requestLatitude", {"sku": "S"}, exec_ctx())
    (request,) = state.oracle_requests.values()
    assert request.job_id == engine.cfg.oracle.job_signed


def test_insufficient_link(actors):
    cfg = EngineConfig(owner=actors["owner"].address, contract_link_funding=0,
                       oracle=OracleConfig(nodes=[actors["oracle"].address]))
    engine, state = fresh_state(cfg)
    result = engine.execute(
        state, actors["stranger"].address, "requestTemperatureData", {"sku": "S"}, exec_ctx()
    )
    assert not result.ok
    assert result.error["error"] == "InsufficientLink"


# ---- fulfillment ----


def fulfill_args(rid: bytes, value: int, error: int = 0) -> dict:
    return {"requestId": rid, "value": value, "error": error}


def make_request(engine, state, actors, seed=0):
    result = engine.execute(
        state, actors["stranger"].address, "requestTemperatureData", {"sku": "SKU-1"},
        exec_ctx(seed=seed),
    )
    assert result.ok
    return pending_ids(state)[-1]


def test_fulfill_writes_value_and_pays_node(engine_cfg, actors):
    engine, state = fresh_state(engine_cfg)
    before = total_link(state)
    rid = make_request(engine, state, actors)
    fee = state.oracle_requests[rid].fee
    result = engine.execute(
        state, actors["oracle"].address, "submitOracleFulfillment",
        fulfill_args(rid, 2350), exec_ctx(height=3, seed=1),
    )
    assert result.ok
    assert state.telemetry[("SKU-1", "temperature")] == (2350, 3)
    assert state.link_balance(actors["oracle"].address) == fee
    assert total_link(state) == before  # conservation: credited equals debited


def test_fulfill_is_exactly_once(engine_cfg, actors):
    engine, state = fresh_state(engine_cfg)
    rid = make_request(engine, state, actors)
    assert engine.execute(
        state, actors["oracle"].address, "submitOracleFulfillment",
        fulfill_args(rid, 2350), exec_ctx(seed=1),
    ).ok
    second = engine.execute(
        state, actors["oracle"].address, "submitOracleFulfillment",
        fulfill_args(rid, 2350), exec_ctx(seed=2),
    )
    assert not second.ok
    assert second.error["error"] == "AlreadyFulfilled"


def test_only_configured_oracle_nodes_fulfill(engine_cfg, actors):
    engine, state = fresh_state(engine_cfg)
    rid = make_request(engine, state, actors)
    result = engine.execute(
        state, actors["stranger"].address, "submitOracleFulfillment",
        fulfill_args(rid, 2350), exec_ctx(seed=1),
    )
    assert not result.ok
    assert result.error["kind"] == "onlyOracleNode"


def test_unknown_request(engine_cfg, actors):
    engine, state = fresh_state(engine_cfg)
    result = engine.execute(
        state, actors["oracle"].address, "submitOracleFulfillment",
        fulfill_args(sha256(b"nope"), 1), exec_ctx(),
    )
    assert not result.ok
    assert result.error["error"] == "UnknownRequest"


def test_error_flag_closes_without_value(engine_cfg, actors):
    engine, state = fresh_state(engine_cfg)
    before = total_link(state)
    rid = make_request(engine, state, actors)
    result = engine.execute(
        state, actors["oracle"].address, "submitOracleFulfillment",
        fulfill_args(rid, 0, error=1), exec_ctx(seed=1),
    )
    assert result.ok
    record = state.oracle_requests[rid]
    assert record.status == "error" and record.failure == "SkuNotFound"
    assert ("SKU-1", "temperature") not in state.telemetry
    assert total_link(state) == before


# ---- decentralized aggregation ----


def three_node_cfg(actors) -> EngineConfig:
    nodes = [actors[k].address for k in ("oracle", "oracle2", "oracle3")]
    return EngineConfig(
        owner=actors["owner"].address,
        contract_link_funding=tokens("10"),
        oracle=OracleConfig(nodes=nodes, quorum=3),
    )


def test_quorum_aggregates_median_and_splits_fee(actors):
    engine, state = fresh_state(three_node_cfg(actors))
    before = total_link(state)
    rid = make_request(engine, state, actors)
    fee = state.oracle_requests[rid].fee
    for seed, (who, value) in enumerate(
        [("oracle", 2340), ("oracle2", 2350), ("oracle3", 9999)], start=1
    ):
        result = engine.execute(
            state, actors[who].address, "submitOracleFulfillment",
            fulfill_args(rid, value), exec_ctx(height=2 + seed, seed=seed),
        )
        assert result.ok
    record = state.oracle_requests[rid]
    assert record.status == "fulfilled"
    assert record.final_value == 2350
    assert state.telemetry[("SKU-1", "temperature")][0] == 2350
    share, remainder = divmod(fee, 3)
    assert state.link_balance(actors["oracle"].address) == share + remainder
    assert state.link_balance(actors["oracle2"].address) == share
    assert state.link_balance(actors["oracle3"].address) == share
    assert total_link(state) == before


def test_below_quorum_stays_pending(actors):
    engine, state = fresh_state(three_node_cfg(actors))
    rid = make_request(engine, state, actors)
    for seed, who in enumerate(["oracle", "oracle2"], start=1):
        engine.execute(
            state, actors[who].address, "submitOracleFulfillment",
            fulfill_args(rid, 2350), exec_ctx(seed=seed),
        )
    assert state.oracle_requests[rid].status == "pending"


def test_duplicate_response_rejected(actors):
    engine, state = fresh_state(three_node_cfg(actors))
    rid = make_request(engine, state, actors)
    engine.execute(
        state, actors["oracle"].address, "submitOracleFulfillment",
        fulfill_args(rid, 2350), exec_ctx(seed=1),
    )
    dup = engine.execute(
        state, actors["oracle"].address, "submitOracleFulfillment",
        fulfill_args(rid, 2351), exec_ctx(seed=2),
    )
    assert not dup.ok
    assert dup.error["error"] == "DuplicateResponse"


def test_timeout_refunds_escrow_as_quorum_not_reached(actors):
    engine, state = fresh_state(three_node_cfg(actors))
    before = total_link(state)
    contract_before = state.link_balance(CONTRACT_ADDRESS)
    rid = make_request(engine, state, actors)  # created at ts 10_000
    engine.execute(
        state, actors["oracle"].address, "submitOracleFulfillment",
        fulfill_args(rid, 2350), exec_ctx(seed=1),
    )
    engine.begin_block(state, 5, 10_000 + engine.cfg.oracle.timeout_ms)
    record = state.oracle_requests[rid]
    assert record.status == "expired"
    assert record.failure == "QuorumNotReached"
    assert state.link_balance(CONTRACT_ADDRESS) == contract_before
    assert state.escrow_total() == 0
    assert total_link(state) == before
    late = engine.execute(
        state, actors["oracle2"].address, "submitOracleFulfillment",
        fulfill_args(rid, 2350), exec_ctx(seed=2),
    )
    assert not late.ok
    assert late.error["error"] == "RequestExpired"


# ---- fee schedule ----


def test_default_action_plan_reproduces_reference_totals():
    plan = default_action_requests()
    assert set(plan) == set(LINK_TOTAL_BY_ACTION)
    for action, requests in plan.items():
        assert sum(fee for _, fee in requests) == LINK_TOTAL_BY_ACTION[action]
    assert LINK_TOTAL_BY_ACTION["produceItemByManufacturer"] == tokens("0.5")
    assert LINK_TOTAL_BY_ACTION["sellItemByManufacturer"] == tokens("0.5")
    eleven = [a for a in LINK_TOTAL_BY_ACTION if LINK_TOTAL_BY_ACTION[a] == tokens("0.4")]
    assert len(eleven) == 11


def test_runner_retries_while_gateway_down_then_fulfills(engine_cfg, actors, validators):
    from pharmatrace.gateway import GatewayCore, GatewayServer
    from pharmatrace.node import Node
    from pharmatrace.oracle import OracleNodeRunner
    from pharmatrace.sensing import NodeIdentity, sign_reading

    node = Node(engine_cfg, validators, block_interval_s=0, genesis_timestamp_ms=1_000)
    node.submit_as(actors["stranger"], "requestTemperatureData", {"sku": "SKU-1"})
    node.produce_block(at_ms=2_000)
    (pending,) = node.pending_oracle_requests()

    down = OracleNodeRunner(node, actors["oracle"], "http://127.0.0.1:1", poll_interval=0.01)
    assert down.poll_once() == 0  # unreachable gateway: request must survive
    assert node.oracle_request_view(pending["requestId"])["status"] == "pending"

    core = GatewayCore()
    identity = NodeIdentity("sensor-r", KeyPair.from_seed(b"\x51" * 32))
    core.register_node(identity.node_id, identity.keypair.public_bytes)
    core.consume(sign_reading(identity, {
        "timestamp": 5.0, "lat": 0.0, "lng": 0.0, "sku": "SKU-1", "lot": "L",
        "drugName": "D", "temp": 23.5, "hum": 40.0,
    }))
    server = GatewayServer(core).start()
    try:
        up = OracleNodeRunner(node, actors["oracle"], server.url, poll_interval=0.01)
        assert up.poll_once() == 1
        node.produce_block(at_ms=3_000)
        view = node.oracle_request_view(pending["requestId"])
        assert view["status"] == "fulfilled" and view["value"] == 2350
    finally:
        server.stop()


def test_link_conservation_over_mixed_sequence(engine_cfg, actors):
    engine, state = fresh_state(engine_cfg)
    start = total_link(state)
    seeds = iter(range(100, 200))
    for _ in range(5):
        make_request(engine, state, actors, seed=next(seeds))
    ids = pending_ids(state)
    engine.execute(
        state, actors["oracle"].address, "submitOracleFulfillment",
        fulfill_args(ids[0], 123), exec_ctx(seed=next(seeds)),
    )
    engine.execute(
        state, actors["oracle"].address, "submitOracleFulfillment",
        fulfill_args(ids[1], 0, error=1), exec_ctx(seed=next(seeds)),
    )
    engine.begin_block(state, 9, 10_000 + engine.cfg.oracle.timeout_ms + 1)
    assert total_link(state) == start

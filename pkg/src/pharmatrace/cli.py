"""Command-line client and process entry points.

Transaction and query subcommands talk to a running node over its HTTP
API (--node-url); `serve` runs the whole stack, `demo run` drives one
shipment end to end in-process, `loadtest` exercises the gateway and
`chain intervals` prints the block-interval accounting report.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
import urllib.error
import urllib.request
from pathlib import Path

from . import fees
from .config import load_config
from .crypto import KeyPair
from .engine import EngineConfig, OP_SIGNATURES
from .errors import PharmatraceError
from .gateway import GatewayCore, GatewayServer, run_load_test
from .node import Node
from .sensing import NodeIdentity, load_scenario, parse_scenario, sign_reading
from .stack import LocalStack

DEFAULT_NODE_URL = "http://127.0.0.1:8545"

DEMO_SCENARIO = {
    "sku": "SKU-1",
    "lot": "LOT-2024-A",
    "drugName": "Acetaminophen",
    "breakpoints": [
        {"t": 0, "lat": 32.99, "lng": -96.75, "temp": 23.5, "hum": 42.0},
        {"t": 600, "lat": 33.21, "lng": -97.13, "temp": 23.5, "hum": 42.0},
    ],
}

LIFECYCLE_STEPS = [
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


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _http(method: str, url: str, body: dict | None = None) -> tuple[int, dict | list]:
    data = json.dumps(body).encode() if body is not None else None
    req = urllib.request.Request(
        url, data=data, method=method, headers={"Content-Type": "application/json"}
    )
    try:
        with urllib.request.urlopen(req, timeout=30) as resp:
            return resp.status, json.loads(resp.read() or b"{}")
    except urllib.error.HTTPError as exc:
        return exc.code, json.loads(exc.read() or b"{}")
    except (urllib.error.URLError, OSError) as exc:
        return 0, {"error": "NodeUnreachable", "message": str(exc)}


def _http_exit(status: int, body) -> int:
    _emit(body)
    if 200 <= status < 300:
        return 0
    return 2 if status == 409 else 1


# ---- subcommand handlers ----


def cmd_serve(ns) -> int:
    cfg = load_config(ns.config)
    if ns.datadir:
        cfg["node"]["datadir"] = ns.datadir
    scenario = load_scenario(ns.scenario) if ns.scenario else None
    datadir = Path(cfg["node"]["datadir"]) if cfg["node"]["datadir"] else None
    stack = LocalStack(
        cfg, datadir=datadir, scenario=scenario, with_api=True, ephemeral_ports=False
    )
    stack.start()
    _emit(
        {
            "api": stack.api.url,
            "gateway": stack.gateway.url,
            "broker": f"{stack.broker.host}:{stack.broker.port}",
            "accounts": stack.keystore.listing(),
        }
    )
    try:
        while True:
            time.sleep(1)
    except KeyboardInterrupt:
        return 0
    finally:
        stack.stop()


def cmd_demo(ns) -> int:
    started = time.monotonic()
    stack = LocalStack(
        cfg=load_config(ns.config),
        block_interval_s=0.0,
        oracle_poll_s=0.15,
        scenario=parse_scenario(DEMO_SCENARIO),
        sensing_interval_s=0.1,
    )
    stack.start()
    try:
        stack.grant_demo_roles()
        upc = ns.upc
        events = []
        outcome = stack.run_tx(
            "manufacturer",
            "produceItemByManufacturer",
            {"sku": DEMO_SCENARIO["sku"], "drugName": DEMO_SCENARIO["drugName"], "upc": upc},
        )
        if outcome["status"] != "ok":
            _emit(outcome)
            return 2
        events.append(outcome["events"][0])
        print(f'{outcome["events"][0]["name"]}(upc={upc}) block={outcome["blockHeight"]}')
        for account, operation in LIFECYCLE_STEPS:
            outcome = stack.run_tx(account, operation, {"upc": upc})
            if outcome["status"] != "ok":
                _emit(outcome)
                return 2
            events.append(outcome["events"][0])
            print(f'{outcome["events"][0]["name"]}(upc={upc}) block={outcome["blockHeight"]}')

        deadline = time.monotonic() + 5
        while time.monotonic() < deadline:
            if "temperature" in stack.node.telemetry_view(DEMO_SCENARIO["sku"]):
                break
            time.sleep(0.05)
        report = stack.node.provenance(upc)
        summary = {
            "item": stack.node.item_details(upc)["state"],
            "authentic": report["authentic"],
            "custody": report["custody"],
            "telemetry": stack.node.telemetry_view(DEMO_SCENARIO["sku"]),
            "eventCount": len(events),
            "elapsedS": round(time.monotonic() - started, 3),
        }
        _emit(summary)
        return 0 if report["authentic"] and len(events) == 13 else 2
    finally:
        stack.stop()


def cmd_keys_new(ns) -> int:
    return _http_exit(*_http("POST", f"{ns.node_url}/accounts", {"name": ns.name}))


def cmd_keys_list(ns) -> int:
    return _http_exit(*_http("GET", f"{ns.node_url}/accounts"))


def cmd_roles_add(ns) -> int:
    op = "add" + ns.role.capitalize()
    body = {"account": ns.account, "args": {"account": ns.address}}
    return _http_exit(*_http("POST", f"{ns.node_url}/tx/{op}", body))


def cmd_roles_renounce(ns) -> int:
    op = "renounce" + ns.role.capitalize()
    body = {"account": ns.account, "args": {}}
    return _http_exit(*_http("POST", f"{ns.node_url}/tx/{op}", body))


def cmd_roles_show(ns) -> int:
    return _http_exit(*_http("GET", f"{ns.node_url}/roles/{ns.address}"))


def cmd_item_fetch(ns) -> int:
    return _http_exit(*_http("GET", f"{ns.node_url}/items/{ns.upc}"))


def cmd_item_verify(ns) -> int:
    status, body = _http("GET", f"{ns.node_url}/items/{ns.upc}/provenance")
    _emit(body)
    if status != 200:
        return 1
    return 0 if body.get("authentic") else 2


def cmd_chain_verify(ns) -> int:
    status, body = _http("GET", f"{ns.node_url}/chain/verify")
    _emit(body)
    if status != 200:
        return 1
    return 0 if body.get("ok") else 2


def cmd_chain_intervals(ns) -> int:
    report = fees.interval_report()
    owner = KeyPair.generate()
    node = Node(
        EngineConfig(owner=owner.address, contract_link_funding=0),
        validators=[owner.address],
        block_interval_s=0,
        genesis_timestamp_ms=0,
    )
    observed = node.simulate_intervals([float(x) for x in fees.REFERENCE_BLOCK_INTERVALS_S])
    report["reproduced"] = observed == [float(x) for x in fees.REFERENCE_BLOCK_INTERVALS_S]
    _emit(report)
    return 0 if report["reproduced"] else 2


def cmd_tx(ns) -> int:
    args = {}
    for name, _ in OP_SIGNATURES[ns.operation]:
        flag = "address" if name == "account" else name
        args[name] = getattr(ns, flag)
    body = {"account": ns.account, "args": args}
    return _http_exit(*_http("POST", f"{ns.node_url}/tx/{ns.operation}", body))


def cmd_loadtest(ns) -> int:
    cleanup = None
    url = ns.url
    if url is None:
        core = GatewayCore()
        identity = NodeIdentity("loadgen-sensor", KeyPair.generate())
        core.register_node(identity.node_id, identity.keypair.public_bytes)
        reading = {
            "timestamp": time.time(),
            "lat": 32.99,
            "lng": -96.75,
            "sku": ns.sku,
            "lot": "LOT-2024-A",
            "drugName": "Acetaminophen",
            "temp": 23.5,
            "hum": 42.0,
        }
        core.consume(sign_reading(identity, reading))
        server = GatewayServer(core).start()
        url = server.url
        cleanup = server.stop
    try:
        report = run_load_test(
            url, ns.sku, requests=ns.requests, duration_s=ns.duration, threads=ns.threads
        )
    finally:
        if cleanup:
            cleanup()
    _emit(report)
    if ns.out:
        Path(ns.out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return 0 if report["failedRequests"] == 0 else 2


# ---- parser ----


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pharmatrace")
    sub = parser.add_subparsers(dest="command", required=True)

    def node_url(p):
        p.add_argument("--node-url", default=DEFAULT_NODE_URL)

    p = sub.add_parser("serve", help="run broker, gateway, node, API and oracle in one process")
    p.add_argument("--config", default=None)
    p.add_argument("--datadir", default=None)
    p.add_argument("--scenario", default=None, help="scenario file for a built-in sensing node")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("demo", help="drive one shipment through the whole lifecycle")
    demo_sub = p.add_subparsers(dest="demo_command", required=True)
    run_p = demo_sub.add_parser("run")
    run_p.add_argument("--config", default=None)
    run_p.add_argument("--upc", type=int, default=42)
    run_p.set_defaults(func=cmd_demo)

    p = sub.add_parser("keys", help="keystore accounts on the node")
    keys_sub = p.add_subparsers(dest="keys_command", required=True)
    new_p = keys_sub.add_parser("new")
    new_p.add_argument("name")
    node_url(new_p)
    new_p.set_defaults(func=cmd_keys_new)
    list_p = keys_sub.add_parser("list")
    node_url(list_p)
    list_p.set_defaults(func=cmd_keys_list)

    p = sub.add_parser("roles", help="grant, renounce and inspect roles")
    roles_sub = p.add_subparsers(dest="roles_command", required=True)
    add_p = roles_sub.add_parser("add")
    add_p.add_argument("role", choices=["manufacturer", "distributor", "retailer", "consumer"])
    add_p.add_argument("address")
    add_p.add_argument("--account", required=True)
    node_url(add_p)
    add_p.set_defaults(func=cmd_roles_add)
    ren_p = roles_sub.add_parser("renounce")
    ren_p.add_argument("role", choices=["manufacturer", "distributor", "retailer", "consumer"])
    ren_p.add_argument("--account", required=True)
    node_url(ren_p)
    ren_p.set_defaults(func=cmd_roles_renounce)
    show_p = roles_sub.add_parser("show")
    show_p.add_argument("address")
    node_url(show_p)
    show_p.set_defaults(func=cmd_roles_show)

    p = sub.add_parser("item", help="fetch details or verify authenticity")
    item_sub = p.add_subparsers(dest="item_command", required=True)
    fetch_p = item_sub.add_parser("fetch")
    fetch_p.add_argument("upc", type=int)
    node_url(fetch_p)
    fetch_p.set_defaults(func=cmd_item_fetch)
    verify_p = item_sub.add_parser("verify")
    verify_p.add_argument("upc", type=int)
    node_url(verify_p)
    verify_p.set_defaults(func=cmd_item_verify)

    p = sub.add_parser("chain", help="chain integrity and interval accounting")
    chain_sub = p.add_subparsers(dest="chain_command", required=True)
    cv = chain_sub.add_parser("verify")
    node_url(cv)
    cv.set_defaults(func=cmd_chain_verify)
    ci = chain_sub.add_parser("intervals")
    ci.set_defaults(func=cmd_chain_intervals)

    p = sub.add_parser("tx", help="submit one contract operation")
    tx_sub = p.add_subparsers(dest="operation", required=True)
    for operation, sig in sorted(OP_SIGNATURES.items()):
        op_p = tx_sub.add_parser(operation)
        op_p.add_argument("--account", required=True, help="signing keystore account")
        node_url(op_p)
        for name, kind in sig:
            flag = "--address" if name == "account" else f"--{name}"
            if kind in ("u64", "i64"):
                op_p.add_argument(flag, type=int, required=True)
            else:
                op_p.add_argument(flag, required=True)
        op_p.set_defaults(func=cmd_tx)

    p = sub.add_parser("loadtest", help="latency/throughput test against the gateway")
    p.add_argument("--url", default=None, help="gateway base URL; default spins one up")
    p.add_argument("--sku", default="SKU-1")
    p.add_argument("--requests", type=int, default=1000)
    p.add_argument("--duration", type=float, default=2.0)
    p.add_argument("--threads", type=int, default=100)
    p.add_argument("--out", default=None, help="write the JSON report here as well")
    p.set_defaults(func=cmd_loadtest)

    return parser


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        return ns.func(ns)
    except PharmatraceError as exc:
        _emit(exc.payload())
        return 1


if __name__ == "__main__":
    sys.exit(main())

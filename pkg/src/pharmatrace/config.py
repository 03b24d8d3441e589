"""Configuration loading and wiring helpers.

A config file overrides the built-in defaults key by key; see
config/default.yaml for the annotated reference. Fee amounts are decimal
token strings in config and integer base units everywhere in code.
"""

from __future__ import annotations

import copy
from pathlib import Path

import yaml

from .contract import ORACLE_FIELDS
from .crypto import Address
from .engine import EngineConfig
from .fees import tokens
from .oracle import OracleConfig

DEFAULTS: dict = {
    "node": {
        "block_interval_s": 4.0,
        "validator_count": 3,
        "datadir": None,
    },
    "api": {"host": "127.0.0.1", "port": 8545},
    "broker": {"host": "127.0.0.1", "port": 9555},
    "gateway": {
        "host": "127.0.0.1",
        "port": 8080,
        "rules_file": None,
        "recipients": ["ops@example.invalid"],
    },
    "sensing": {
        "topic": "pharmachain/telemetry",
        "interval_s": 60.0,
        "jitter_sigma": 0.0,
    },
    "contract": {
        "link_funding_tokens": "100",
    },
    "oracle": {
        "node_count": 1,
        "quorum": 1,
        "timeout_ms": 60000,
        "poll_interval_s": 1.0,
        "job_unsigned": "telemetry-uint-v1",
        "job_signed": "telemetry-int-v1",
        # Fee for a standalone request of one telemetry channel.
        "field_fees_tokens": {
            "temperature": "0.1",
            "humidity": "0.1",
            "latitude": "0.1",
            "longitude": "0.1",
        },
        # Oracle budget per lifecycle action. Each action fans out into one
        # request per telemetry channel; the equal four-way split of the
        # total is a modeling choice, only the totals are contractual.
        "action_totals_tokens": {
            "produceItemByManufacturer": "0.5",
            "sellItemByManufacturer": "0.5",
            "purchaseItemByDistributor": "0.4",
            "shippedItemByManufacturer": "0.4",
            "receivedItemByDistributor": "0.4",
            "processedItemByDistributor": "0.4",
            "packageItemByDistributor": "0.4",
            "sellItemByDistributor": "0.4",
            "purchaseItemByRetailer": "0.4",
            "shippedItemByDistributor": "0.4",
            "receivedItemByRetailer": "0.4",
            "sellItemByRetailer": "0.4",
            "purchaseItemByConsumer": "0.4",
        },
    },
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path: str | Path | None = None) -> dict:
    if path is None:
        return copy.deepcopy(DEFAULTS)
    raw = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: top level must be a mapping")
    return _deep_merge(DEFAULTS, raw)


def build_oracle_config(cfg: dict, node_addresses: list[Address]) -> OracleConfig:
    ocfg = cfg["oracle"]
    field_fees = {f: tokens(ocfg["field_fees_tokens"][f]) for f in ORACLE_FIELDS}
    plans: dict[str, list[tuple[str, int]]] = {}
    for action, total_str in ocfg["action_totals_tokens"].items():
        total = tokens(total_str)
        share, remainder = divmod(total, len(ORACLE_FIELDS))
        plan = [(f, share) for f in ORACLE_FIELDS]
        plan[0] = (plan[0][0], share + remainder)
        plans[action] = plan
    return OracleConfig(
        nodes=node_addresses,
        quorum=int(ocfg["quorum"]),
        timeout_ms=int(ocfg["timeout_ms"]),
        job_unsigned=str(ocfg["job_unsigned"]),
        job_signed=str(ocfg["job_signed"]),
        field_fees=field_fees,
        action_requests=plans,
    )


def build_engine_config(cfg: dict, owner: Address, oracle_nodes: list[Address]) -> EngineConfig:
    return EngineConfig(
        owner=owner,
        contract_link_funding=tokens(cfg["contract"]["link_funding_tokens"]),
        oracle=build_oracle_config(cfg, oracle_nodes),
    )

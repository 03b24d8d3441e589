"""Permissioned supply-chain ledger node with cold-chain telemetry oracles."""

__version__ = "0.1.0"

"""Named local accounts backing the HTTP API and CLI.

The store is a JSON file mapping account names to hex-encoded Ed25519
private keys; public keys and addresses are re-derived on load, never
trusted from the file.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path

from .crypto import KeyPair
from .errors import UnknownAccount


class Keystore:
    def __init__(self, path: Path | None = None):
        self.path = Path(path) if path else None
        self._lock = threading.Lock()
        self._accounts: dict[str, KeyPair] = {}
        if self.path and self.path.exists():
            for name, entry in json.loads(self.path.read_text()).items():
                self._accounts[name] = KeyPair.from_private_hex(entry["privateKey"])

    def _save(self) -> None:
        if self.path is None:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        data = {
            name: {"privateKey": kp.private_hex(), "address": kp.address.hex()}
            for name, kp in self._accounts.items()
        }
        self.path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")

    def create(self, name: str, keypair: KeyPair | None = None) -> KeyPair:
        with self._lock:
            if name in self._accounts:
                raise ValueError(f"account {name!r} already exists")
            kp = keypair or KeyPair.generate()
            self._accounts[name] = kp
            self._save()
            return kp

    def get(self, name: str) -> KeyPair:
        with self._lock:
            try:
                return self._accounts[name]
            except KeyError:
                raise UnknownAccount(name) from None

    def ensure(self, name: str) -> KeyPair:
        with self._lock:
            if name not in self._accounts:
                self._accounts[name] = KeyPair.generate()
                self._save()
            return self._accounts[name]

    def names(self) -> list[str]:
        with self._lock:
            return sorted(self._accounts)

    def listing(self) -> list[dict]:
        with self._lock:
            return [
                {"name": name, "address": kp.address.hex()}
                for name, kp in sorted(self._accounts.items())
            ]

"""Key pairs, signatures and account addresses.

Accounts sign with Ed25519. An address is the last 20 bytes of the
SHA-256 of the raw 32-byte public key, rendered as 0x + 40 lowercase hex
characters. Derivation is deterministic: same public key, same address.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature as _CryptoInvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

ADDRESS_LEN = 20
ZERO32 = b"\x00" * 32


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


@dataclass(frozen=True, order=True)
class Address:
    """20-byte account identifier derived from a public key."""

    value: bytes

    def __post_init__(self) -> None:
        if len(self.value) != ADDRESS_LEN:
            raise ValueError(f"address must be {ADDRESS_LEN} bytes, got {len(self.value)}")

    @classmethod
    def from_public_key(cls, public_key_bytes: bytes) -> "Address":
        return cls(sha256(public_key_bytes)[-ADDRESS_LEN:])

    @classmethod
    def from_hex(cls, text: str) -> "Address":
        s = text.lower()
        if s.startswith("0x"):
            s = s[2:]
        if len(s) != ADDRESS_LEN * 2:
            raise ValueError(f"address hex must be {ADDRESS_LEN * 2} chars, got {len(s)}")
        return cls(bytes.fromhex(s))

    @classmethod
    def reserved(cls, label: str) -> "Address":
        """Deterministic address for a built-in identity (e.g. the contract)."""
        return cls(sha256(b"pharmatrace/reserved/" + label.encode())[-ADDRESS_LEN:])

    def hex(self) -> str:
        return "0x" + self.value.hex()

    def __str__(self) -> str:
        return self.hex()


# The supply-chain contract holds the oracle-fee balance under this identity.
CONTRACT_ADDRESS = Address.reserved("supply-chain-contract")


class KeyPair:
    """Ed25519 signing key plus its derived address."""

    def __init__(self, private_key: Ed25519PrivateKey) -> None:
        self._private = private_key
        self.public_bytes = private_key.public_key().public_bytes_raw()
        self.address = Address.from_public_key(self.public_bytes)

    @classmethod
    def generate(cls) -> "KeyPair":
        return cls(Ed25519PrivateKey.generate())

    @classmethod
    def from_seed(cls, seed: bytes) -> "KeyPair":
        """Derive a key pair from 32 seed bytes (test determinism)."""
        return cls(Ed25519PrivateKey.from_private_bytes(seed))

    @classmethod
    def from_private_hex(cls, text: str) -> "KeyPair":
        return cls(Ed25519PrivateKey.from_private_bytes(bytes.fromhex(text)))

    def private_hex(self) -> str:
        return self._private.private_bytes_raw().hex()

    def sign(self, message: bytes) -> bytes:
        return self._private.sign(message)


def verify_signature(public_key_bytes: bytes, signature: bytes, message: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(public_key_bytes).verify(signature, message)
        return True
    except (_CryptoInvalidSignature, ValueError):
        return False

"""Pluggable crypto: a 256-bit hash plus a 64-byte signature scheme.

Two suites ship. ``StubSuite`` signs with a keyed hash so simulation runs are
byte-for-byte reproducible; its "public" key equals the secret, so it only
stands in for a real scheme. ``EcdsaSuite`` uses ECDSA over secp256r1 with
raw ``r || s`` signatures.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass
from typing import Any, Protocol

from .hash_tree import sha256

SIGNATURE_SIZE = 64


class CryptoSuite(Protocol):
    name: str

    def hash(self, data: bytes) -> bytes: ...

    def generate_keypair(self, seed: bytes | None = None) -> "KeyPair": ...

    def sign(self, private_key: Any, message: bytes) -> bytes: ...

    def verify(self, public_key: Any, message: bytes, signature: bytes) -> bool: ...


@dataclass(frozen=True)
class KeyPair:
    private: Any
    public: Any


class StubSuite:
    """Deterministic keyed-hash signer for reproducible runs."""

    name = "stub-hmac-sha512"

    def hash(self, data: bytes) -> bytes:
        return sha256(data)

    def generate_keypair(self, seed: bytes | None = None) -> KeyPair:
        key = hashlib.sha256(b"stub-ca-key" + (seed or b"")).digest()
        return KeyPair(key, key)

    def sign(self, private_key: bytes, message: bytes) -> bytes:
        return hmac.new(private_key, message, hashlib.sha512).digest()

    def verify(self, public_key: bytes, message: bytes, signature: bytes) -> bool:
        if len(signature) != SIGNATURE_SIZE:
            return False
        return hmac.compare_digest(self.sign(public_key, message), signature)


class EcdsaSuite:
    """SHA-256 with ECDSA over secp256r1; signatures are fixed-width r || s."""

    name = "ecdsa-secp256r1"

    def __init__(self):
        from cryptography.hazmat.primitives import hashes
        from cryptography.hazmat.primitives.asymmetric import ec

        self._ec = ec
        self._algorithm = ec.ECDSA(hashes.SHA256())

    def hash(self, data: bytes) -> bytes:
        return sha256(data)

    def generate_keypair(self, seed: bytes | None = None) -> KeyPair:
        ec = self._ec
        if seed is None:
            private = ec.generate_private_key(ec.SECP256R1())
        else:
            order = 0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551
            scalar = int.from_bytes(hashlib.sha256(seed).digest(), "big") % (order - 1) + 1
            private = ec.derive_private_key(scalar, ec.SECP256R1())
        return KeyPair(private, private.public_key())

    def sign(self, private_key, message: bytes) -> bytes:
        from cryptography.hazmat.primitives.asymmetric.utils import decode_dss_signature

        r, s = decode_dss_signature(private_key.sign(message, self._algorithm))
        return r.to_bytes(32, "big") + s.to_bytes(32, "big")

    def verify(self, public_key, message: bytes, signature: bytes) -> bool:
        from cryptography.exceptions import InvalidSignature
        from cryptography.hazmat.primitives.asymmetric.utils import encode_dss_signature

        if len(signature) != SIGNATURE_SIZE:
            return False
        der = encode_dss_signature(int.from_bytes(signature[:32], "big"), int.from_bytes(signature[32:], "big"))
        try:
            public_key.verify(der, message, self._algorithm)
        except InvalidSignature:
            return False
        return True


@dataclass(frozen=True)
class CaIdentity:
    """What a node needs to check CA signatures."""

    suite: CryptoSuite
    public_key: Any

    def verify(self, message: bytes, signature: bytes) -> bool:
        return self.suite.verify(self.public_key, message, signature)

"""Key generation, account-id derivation, and transaction signing.

Accounts on the people channel are pseudonymous: an account id is the SHA-256
of an Ed25519 verification key, and transactions are authorized by detached
Ed25519 signatures over the canonical transaction bytes. Ed25519 signatures
are deterministic (RFC 8032), which keeps whole simulation runs
bit-reproducible.

Signing and verification go through libsodium when it is present (it is
several times faster, which matters at six-figure transaction volumes) and
fall back to the `cryptography` package otherwise. The two backends produce
identical bytes.
"""

from __future__ import annotations

import ctypes
import ctypes.util
import hashlib
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

from .core import GOVERNMENT, PERSON, AccountId

__all__ = [
    "Keypair", "generate_identity", "government_identity",
    "sign_payload", "verify_payload", "sign_tx", "verify_tx",
    "derive_seed", "load_seed_file", "backend_name",
]


@dataclass(frozen=True)
class Keypair:
    """A 32-byte signing seed and its 32-byte verification key.

    Only the public half ever appears in ledgers or exports.
    """

    secret: bytes
    public: bytes


def _load_sodium():
    path = ctypes.util.find_library("sodium")
    if path is None:
        return None
    try:
        lib = ctypes.CDLL(path)
        if lib.sodium_init() < 0:
            return None
    except OSError:
        return None
    lib.crypto_sign_seed_keypair.argtypes = [ctypes.c_char_p, ctypes.c_char_p, ctypes.c_char_p]
    lib.crypto_sign_detached.argtypes = [
        ctypes.c_char_p, ctypes.c_void_p, ctypes.c_char_p, ctypes.c_ulonglong, ctypes.c_char_p,
    ]
    lib.crypto_sign_verify_detached.argtypes = [
        ctypes.c_char_p, ctypes.c_char_p, ctypes.c_ulonglong, ctypes.c_char_p,
    ]
    return lib


_SODIUM = _load_sodium()

if _SODIUM is not None:
    _seed_keypair = _SODIUM.crypto_sign_seed_keypair
    _sign_detached = _SODIUM.crypto_sign_detached
    _verify_detached = _SODIUM.crypto_sign_verify_detached

    def _public_from_seed(seed: bytes) -> bytes:
        pk = ctypes.create_string_buffer(32)
        sk = ctypes.create_string_buffer(64)
        _seed_keypair(pk, sk, seed)
        return pk.raw

    @lru_cache(maxsize=65536)
    def _expanded_key(seed: bytes) -> bytes:
        pk = ctypes.create_string_buffer(32)
        sk = ctypes.create_string_buffer(64)
        _seed_keypair(pk, sk, seed)
        return sk.raw

    def sign_payload(payload: bytes, secret: bytes) -> bytes:
        """Deterministic detached signature over `payload`."""
        sig = ctypes.create_string_buffer(64)
        _sign_detached(sig, None, payload, len(payload), _expanded_key(secret))
        return sig.raw

    def verify_payload(payload: bytes, signature: bytes, public: bytes) -> bool:
        """True iff `signature` is valid for `payload` under `public`."""
        if len(signature) != 64 or len(public) != 32:
            return False
        return _verify_detached(signature, payload, len(payload), public) == 0

    def backend_name() -> str:
        return "libsodium"

else:
    from cryptography.exceptions import InvalidSignature
    from cryptography.hazmat.primitives import serialization
    from cryptography.hazmat.primitives.asymmetric.ed25519 import (
        Ed25519PrivateKey, Ed25519PublicKey,
    )

    @lru_cache(maxsize=65536)
    def _private_key(seed: bytes) -> Ed25519PrivateKey:
        return Ed25519PrivateKey.from_private_bytes(seed)

    @lru_cache(maxsize=65536)
    def _public_key(public: bytes) -> Ed25519PublicKey:
        return Ed25519PublicKey.from_public_bytes(public)

    def _public_from_seed(seed: bytes) -> bytes:
        return _private_key(seed).public_key().public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw,
        )

    def sign_payload(payload: bytes, secret: bytes) -> bytes:
        """Deterministic detached signature over `payload`."""
        return _private_key(secret).sign(payload)

    def verify_payload(payload: bytes, signature: bytes, public: bytes) -> bool:
        """True iff `signature` is valid for `payload` under `public`."""
        if len(signature) != 64 or len(public) != 32:
            return False
        try:
            _public_key(public).verify(signature, payload)
            return True
        except (InvalidSignature, ValueError):
            return False

    def backend_name() -> str:
        return "cryptography"


def generate_identity(seed: bytes, kind: str = PERSON) -> tuple[Keypair, AccountId]:
    """Derive a keypair and account id from a 32-byte seed.

    The derivation is deterministic: the same seed always yields the same
    keypair and the same 32-byte account id (SHA-256 of the public key).
    """
    if len(seed) != 32:
        raise ValueError(f"seed must be 32 bytes, got {len(seed)}")
    public = _public_from_seed(seed)
    return Keypair(secret=seed, public=public), AccountId(hashlib.sha256(public).digest(), kind)


def government_identity(country: str) -> tuple[Keypair, AccountId]:
    """The single, publicly derivable government identity of a country."""
    return generate_identity(derive_seed("government", country), kind=GOVERNMENT)


def derive_seed(*parts) -> bytes:
    """Deterministic 32-byte seed from a label path (ints and strings)."""
    h = hashlib.sha256()
    for part in parts:
        h.update(str(part).encode())
        h.update(b"\x1f")
    return h.digest()


def sign_tx(tx, secret: bytes) -> bytes:
    """Sign a transaction's canonical bytes (signature field excluded)."""
    return sign_payload(tx.canonical_bytes(), secret)


def verify_tx(tx, signature: bytes, public: bytes) -> bool:
    """Verify a transaction signature; malformed inputs return False."""
    return verify_payload(tx.canonical_bytes(), signature, public)


def load_seed_file(path) -> list[bytes]:
    """Load actor seeds from a key file: one hex-encoded 32-byte seed per line."""
    seeds = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            seed = bytes.fromhex(line)
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: not hex: {line!r}") from exc
        if len(seed) != 32:
            raise ValueError(f"{path}:{lineno}: seed must be 32 bytes, got {len(seed)}")
        seeds.append(seed)
    return seeds

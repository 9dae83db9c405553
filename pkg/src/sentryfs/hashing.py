"""Keyed digests: production HMAC-SHA256 and a collision-free symbolic mode.

The symbolic engine exists for exhaustive small-instance checking: it
assigns each distinct (key, payload) a fresh counter tag, so hash
equality literally implies payload equality within the session. It is
only meaningful within one process; anything that must survive a
process boundary (CLI images) uses production mode.

Every digest computation, in either mode, ticks the engine's counter —
that counter is the "Hash" column of the operation-accounting reports.
"""

from __future__ import annotations

import hashlib
import hmac
import os
import secrets

from .errors import SentryError

KEY_SIZE = 32

MODE_PRODUCTION = "production"
MODE_SYMBOLIC = "symbolic"
HASH_MODE_ENV = "SENTRY_HASH_MODE"


def new_key(seed: int | bytes | None = None) -> bytes:
    """Fresh 32-byte HMAC key; deterministic when a seed is given."""
    if seed is None:
        return secrets.token_bytes(KEY_SIZE)
    if isinstance(seed, int):
        seed = seed.to_bytes(16, "little", signed=True)
    return hashlib.sha256(b"sentryfs-key:" + seed).digest()


class HashEngine:
    """One engine per file-system session; owns the hash counter."""

    def __init__(self, digest_size: int = 32):
        if digest_size < 1:
            raise SentryError("digest_size must be >= 1")
        self.digest_size = digest_size
        self._count = 0

    def hash_counter(self) -> int:
        return self._count

    def digest_block(self, key: bytes, payload: bytes) -> bytes:
        self._count += 1
        return self._digest(key, payload)

    def digest_node(
        self, key: bytes, child_digests: list[bytes], block_size: int
    ) -> bytes:
        """Digest of an internal node: by definition, the digest of the
        serialized hash block (in-order concatenation, zero-padded)."""
        fanout = block_size // self.digest_size
        if len(child_digests) != fanout:
            raise SentryError(
                f"node needs exactly {fanout} children, got {len(child_digests)}"
            )
        return self.digest_block(key, serialize_node(child_digests, block_size))

    def _digest(self, key: bytes, payload: bytes) -> bytes:
        raise NotImplementedError


def serialize_node(child_digests: list[bytes], block_size: int) -> bytes:
    raw = b"".join(child_digests)
    if len(raw) > block_size:
        raise SentryError("child digests exceed block size")
    return raw.ljust(block_size, b"\0")


class Hmac256Engine(HashEngine):
    def __init__(self, digest_size: int = 32):
        if digest_size > 32:
            raise SentryError("HMAC-SHA256 digests are at most 32 bytes")
        super().__init__(digest_size)

    def _digest(self, key: bytes, payload: bytes) -> bytes:
        return hmac.new(key, payload, hashlib.sha256).digest()[: self.digest_size]


class SymbolicEngine(HashEngine):
    """Injective-by-construction digests backed by a session registry.

    Raises if two distinct payloads would ever share a digest, turning
    the idealized no-collision assumption into a runtime assertion.
    """

    def __init__(self, digest_size: int = 32):
        super().__init__(digest_size)
        self._forward: dict[bytes, bytes] = {}
        self._reverse: dict[bytes, bytes] = {}
        self._next_tag = 1

    def _digest(self, key: bytes, payload: bytes) -> bytes:
        material = len(key).to_bytes(4, "little") + key + payload
        known = self._forward.get(material)
        if known is not None:
            return known
        tag = self._next_tag.to_bytes(self.digest_size, "big")
        self._next_tag += 1
        clash = self._reverse.get(tag)
        if clash is not None and clash != material:
            raise SentryError("symbolic hash collision — registry corrupted")
        self._forward[material] = tag
        self._reverse[tag] = material
        return tag


def make_engine(mode: str | None = None, digest_size: int = 32) -> HashEngine:
    if mode is None:
        mode = os.environ.get(HASH_MODE_ENV, MODE_PRODUCTION)
    if mode == MODE_PRODUCTION:
        return Hmac256Engine(digest_size)
    if mode == MODE_SYMBOLIC:
        return SymbolicEngine(digest_size)
    raise SentryError(f"unknown hash mode {mode!r}")

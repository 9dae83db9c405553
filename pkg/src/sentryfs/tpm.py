"""Modeled trusted platform module.

A tiny persistent store holding the HMAC key and three digests: the
superblock digest and the two most recent Merkle roots. The two-root
window is what makes crash recovery verifiable: whichever state log
recovery lands on, one of the two roots must match.

Persistence is a separate file outside the disk image — the attacker
has no write path to it — updated by write-to-temp-then-atomic-rename
so the (current, recover) pair can never be observed half-shifted.
"""

from __future__ import annotations

import os
from pathlib import Path

from .errors import TpmError
from .hashing import KEY_SIZE

TPM_MAGIC = b"SNTRYTPM"
TPM_VERSION = 1


class Tpm:
    def __init__(
        self,
        key: bytes,
        hash_sb: bytes,
        hash_current: bytes,
        hash_recover: bytes,
        path: str | Path | None = None,
    ):
        self._key = bytes(key)
        self._hash_sb = bytes(hash_sb)
        self._hash_current = bytes(hash_current)
        self._hash_recover = bytes(hash_recover)
        self.path = Path(path) if path is not None else None
        self.digest_size = len(hash_sb)
        if len(hash_current) != self.digest_size or len(hash_recover) != self.digest_size:
            raise TpmError("digest fields must all have the same size")
        if len(self._key) != KEY_SIZE:
            raise TpmError(f"key must be {KEY_SIZE} bytes")

    # -- provisioning and persistence -------------------------------------------

    @classmethod
    def provision(
        cls,
        key: bytes,
        hash_sb: bytes,
        initial_root: bytes,
        path: str | Path | None = None,
    ) -> "Tpm":
        """mkfs-time initialization: both roots start at the initial root."""
        tpm = cls(key, hash_sb, initial_root, initial_root, path)
        tpm._persist()
        return tpm

    @classmethod
    def load(cls, path: str | Path) -> "Tpm":
        path = Path(path)
        try:
            raw = path.read_bytes()
        except OSError as e:
            raise TpmError(f"cannot read trusted store {path}: {e}") from e
        header = 8 + 4 + KEY_SIZE
        if len(raw) < header or raw[:8] != TPM_MAGIC:
            raise TpmError(f"{path} is not a trusted store")
        version = int.from_bytes(raw[8:12], "little")
        if version != TPM_VERSION:
            raise TpmError(f"unsupported trusted-store version {version}")
        body = raw[header:]
        if len(body) % 3 != 0 or len(body) == 0:
            raise TpmError("trusted store digest area is malformed")
        ds = len(body) // 3
        key = raw[12:header]
        return cls(key, body[:ds], body[ds : 2 * ds], body[2 * ds :], path)

    def _persist(self) -> None:
        if self.path is None:
            return
        blob = (
            TPM_MAGIC
            + TPM_VERSION.to_bytes(4, "little")
            + self._key
            + self._hash_sb
            + self._hash_current
            + self._hash_recover
        )
        tmp = self.path.with_name(self.path.name + ".tmp")
        try:
            with open(tmp, "wb") as f:
                f.write(blob)
                f.flush()
                os.fsync(f.fileno())
            os.replace(tmp, self.path)
        except OSError as e:
            raise TpmError(f"trusted-store write failed: {e}") from e

    def clone(self, path: str | Path | None = None) -> "Tpm":
        return Tpm(self._key, self._hash_sb, self._hash_current, self._hash_recover, path)

    # -- the two-root protocol ---------------------------------------------------

    def update_hash_current(self, new_root: bytes) -> None:
        """Shift current into recover, install the new root; one atomic update."""
        if len(new_root) != self.digest_size:
            raise TpmError("root digest has the wrong size")
        self._hash_recover = self._hash_current
        self._hash_current = bytes(new_root)
        self._persist()

    def recover_old_hash(self) -> bytes:
        """Fall back to the previous root; current is overwritten by recover."""
        self._hash_current = self._hash_recover
        self._persist()
        return self._hash_current

    def get_current(self) -> bytes:
        return self._hash_current

    def get_recover(self) -> bytes:
        return self._hash_recover

    def get_sb(self) -> bytes:
        return self._hash_sb

    @property
    def key(self) -> bytes:
        return self._key

"""Transactional write-ahead log with hash-gated reads.

One transaction at a time. Buffered writes are partitioned into
data-region and hash-region updates; commit serializes them into the
log region, seals them with a commit marker (count + keyed digest over
the serialized entries), applies them in place, then retires the
marker. Sync barriers separate the phases, so a crash at any single
device write recovers to exactly the pre- or post-transaction state.

Reads outside an active buffer go through the gated path: the caller
supplies the digest it trusts, and a device block is returned only if
it matches. Recovery reads are deliberately ungated (the marker digest
is the log's own integrity check; the mount-time root comparison bounds
anything else).

Log-region byte format (bit-exact so images are portable):
  entry stream   entries packed back to back from the first log block,
                 each entry = target address (8 bytes LE) + payload
                 (block_size bytes); the tail block is zero-padded
  marker block   last log block: magic (8) + entry count (8 LE) +
                 digest over the entry stream (digest_size), zero-padded
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .errors import IntegrityFailure, LogError
from .geometry import DiskLayout, GeometryConfig
from .hashing import HashEngine

LOG_MAGIC = b"SNTRYLOG"


class RecoveryOutcome(enum.Enum):
    ROLLED_BACK = "rolled-back"
    REAPPLIED = "reapplied"


@dataclass
class Txn:
    data_writes: dict[int, bytes] = field(default_factory=dict)
    hash_writes: dict[int, bytes] = field(default_factory=dict)
    active: bool = True
    put_count: int = 0  # buffered-write puts, for operation accounting

    def entries(self) -> list[tuple[int, bytes]]:
        return list(self.data_writes.items()) + list(self.hash_writes.items())


@dataclass
class CommitStats:
    """Per-commit accounting used by the bench reports."""

    n_data: int
    n_hash: int
    entry_blocks: int
    device_writes: int
    baseline_writes: int  # what the same commit costs with no hash entries


class TxLog:
    def __init__(
        self,
        device,
        layout: DiskLayout,
        config: GeometryConfig,
        engine: HashEngine,
        key: bytes,
        cache_enabled: bool = True,
    ):
        self.device = device
        self.layout = layout
        self.config = config
        self.engine = engine
        self.key = key
        self.cache_enabled = cache_enabled
        self._cache: dict[int, bytes] = {}
        self._active: Txn | None = None
        self.commit_stats: list[CommitStats] = []
        self.ghost = None  # harness hook: mirror_write / on_verified_read

    # -- geometry helpers --------------------------------------------------------

    @property
    def _entry_size(self) -> int:
        return 8 + self.config.block_size

    @property
    def _marker_addr(self) -> int:
        return self.layout.log_start + self.layout.log_len - 1

    @property
    def max_entries(self) -> int:
        area = (self.layout.log_len - 1) * self.config.block_size
        return area // self._entry_size

    def _entry_block_count(self, n: int) -> int:
        if n == 0:
            return 0
        return -(-n * self._entry_size // self.config.block_size)

    # -- transaction lifecycle -----------------------------------------------------

    def begin(self) -> Txn:
        if self._active is not None:
            raise LogError("a transaction is already active")
        self._active = Txn()
        return self._active

    def _require_active(self, txn: Txn) -> None:
        if txn is not self._active or not txn.active:
            raise LogError("transaction is not active")

    def write_data(self, txn: Txn, addr: int, b: bytes) -> None:
        self._require_active(txn)
        if not self.layout.in_data(addr):
            raise LogError(f"block {addr} is not in the data region")
        self._check_block(b)
        txn.data_writes[addr] = bytes(b)
        txn.put_count += 1

    def write_hash(self, txn: Txn, addr: int, b: bytes) -> None:
        self._require_active(txn)
        if not self.layout.in_hash(addr):
            raise LogError(f"block {addr} is not in the hash region")
        self._check_block(b)
        txn.hash_writes[addr] = bytes(b)
        txn.put_count += 1

    def _check_block(self, b: bytes) -> None:
        if len(b) != self.config.block_size:
            raise LogError(f"payload must be {self.config.block_size} bytes")

    def abort(self, txn: Txn) -> None:
        self._require_active(txn)
        txn.active = False
        txn.data_writes.clear()
        txn.hash_writes.clear()
        self._active = None

    # -- the gated read path ---------------------------------------------------------

    def read(self, addr: int, expected: bytes, txn: Txn | None = None) -> bytes:
        """Return the block at addr iff its digest matches `expected`.

        Buffer and cache hits skip the device and the digest check:
        those bytes originated inside the trusted boundary.
        """
        if txn is not None and txn.active:
            if addr in txn.data_writes:
                return txn.data_writes[addr]
            if addr in txn.hash_writes:
                return txn.hash_writes[addr]
        if self.cache_enabled and addr in self._cache:
            return self._cache[addr]
        raw = self.device.read(addr)
        actual = self.engine.digest_block(self.key, raw)
        if self.ghost is not None:
            self.ghost.on_verified_read(addr, raw)
        if actual != expected:
            raise IntegrityFailure(addr, expected, actual)
        if self.cache_enabled:
            self._cache[addr] = raw
        return raw

    def clear_cache(self) -> None:
        self._cache.clear()

    # -- commit protocol ---------------------------------------------------------------

    def _dev_write(self, addr: int, b: bytes) -> None:
        self.device.write(addr, b)
        if self.ghost is not None:
            self.ghost.mirror_write(addr, b)

    def commit(self, txn: Txn) -> None:
        self._require_active(txn)
        entries = txn.entries()
        txn.active = False
        self._active = None
        if not entries:
            return
        n = len(entries)
        if n > self.max_entries:
            raise LogError(
                f"transaction of {n} entries exceeds log capacity {self.max_entries}"
            )
        writes_before = self.device.counters().writes

        stream = b"".join(
            addr.to_bytes(8, "little") + payload for addr, payload in entries
        )
        bs = self.config.block_size
        nblocks = self._entry_block_count(n)
        padded = stream.ljust(nblocks * bs, b"\0")
        for i in range(nblocks):
            self._dev_write(self.layout.log_start + i, padded[i * bs : (i + 1) * bs])
        self.device.sync()

        marker = (
            LOG_MAGIC
            + n.to_bytes(8, "little")
            + self.engine.digest_block(self.key, stream)
        ).ljust(bs, b"\0")
        self._dev_write(self._marker_addr, marker)
        self.device.sync()

        for addr, payload in entries:
            self._dev_write(addr, payload)
        self.device.sync()

        self._dev_write(self._marker_addr, bytes(bs))
        self.device.sync()

        if self.cache_enabled:
            for addr, payload in entries:
                self._cache[addr] = payload
        n_data = len(txn.data_writes)
        self.commit_stats.append(
            CommitStats(
                n_data=n_data,
                n_hash=len(txn.hash_writes),
                entry_blocks=nblocks,
                device_writes=self.device.counters().writes - writes_before,
                baseline_writes=(
                    0 if n_data == 0 else self._entry_block_count(n_data) + 1 + n_data + 1
                ),
            )
        )

    def unlogged_commit(self, txn: Txn) -> None:
        """Format-time path: apply directly, skipping the journal.

        Only valid before the trusted roots exist; mkfs has no
        crash-consistency obligation (a crash mid-format reformats).
        """
        self._require_active(txn)
        entries = txn.entries()
        txn.active = False
        self._active = None
        for addr, payload in entries:
            self._dev_write(addr, payload)
        self.device.sync()
        if self.cache_enabled:
            for addr, payload in entries:
                self._cache[addr] = payload

    # -- recovery ---------------------------------------------------------------------

    def recover(self) -> RecoveryOutcome:
        """Idempotent mount-time recovery: re-apply a sealed log or discard
        a partial one. Reads here are ungated by design."""
        self._cache.clear()
        bs = self.config.block_size
        marker = self.device.read(self._marker_addr)
        entries = self._parse_sealed_log(marker)
        if entries is None:
            if marker != bytes(bs):
                self._dev_write(self._marker_addr, bytes(bs))
                self.device.sync()
            return RecoveryOutcome.ROLLED_BACK
        for addr, payload in entries:
            self._dev_write(addr, payload)
        self.device.sync()
        self._dev_write(self._marker_addr, bytes(bs))
        self.device.sync()
        return RecoveryOutcome.REAPPLIED

    def _parse_sealed_log(self, marker: bytes) -> list[tuple[int, bytes]] | None:
        """Entries of a valid sealed log, or None for anything doubtful."""
        ds = self.engine.digest_size
        if marker[:8] != LOG_MAGIC:
            return None
        n = int.from_bytes(marker[8:16], "little")
        stored_digest = marker[16 : 16 + ds]
        if not 1 <= n <= self.max_entries:
            return None
        if marker[16 + ds :] != bytes(len(marker) - 16 - ds):
            return None
        bs = self.config.block_size
        nblocks = self._entry_block_count(n)
        raw = b"".join(
            self.device.read(self.layout.log_start + i) for i in range(nblocks)
        )
        stream = raw[: n * self._entry_size]
        if self.engine.digest_block(self.key, stream) != stored_digest:
            return None
        entries = []
        for i in range(n):
            off = i * self._entry_size
            addr = int.from_bytes(stream[off : off + 8], "little")
            payload = stream[off + 8 : off + self._entry_size]
            if not (self.layout.in_data(addr) or self.layout.in_hash(addr)):
                return None
            entries.append((addr, payload))
        return entries

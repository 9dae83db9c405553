"""Raw disk abstraction: a flat array of fixed-size blocks.

Durability model: a write lands in a pending buffer and becomes durable
only at sync. A simulated crash may keep or drop any subset of pending
writes (per address; a later pending write to the same address replaces
the earlier one, which matches the block-atomic model — no torn blocks).

`peek`/`poke` are the out-of-band medium access used by the adversary
and the offline auditor; they bypass the operation counters entirely.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .errors import DeviceError


@dataclass
class OpCounters:
    reads: int = 0
    writes: int = 0
    syncs: int = 0

    def copy(self) -> "OpCounters":
        return OpCounters(self.reads, self.writes, self.syncs)


class BlockDevice:
    """Common logic for the in-memory and file-backed devices."""

    def __init__(self, total_blocks: int, block_size: int):
        if total_blocks < 1 or block_size < 1:
            raise DeviceError("device must have at least one nonempty block")
        self.total_blocks = total_blocks
        self.block_size = block_size
        self._pending: dict[int, bytes] = {}
        self._counters = OpCounters()

    # -- storage primitives supplied by subclasses ---------------------------

    def _durable_read(self, addr: int) -> bytes:
        raise NotImplementedError

    def _durable_write(self, addr: int, b: bytes) -> None:
        raise NotImplementedError

    # -- public device interface ---------------------------------------------

    def _check_addr(self, addr: int) -> None:
        if not 0 <= addr < self.total_blocks:
            raise DeviceError(
                f"block address {addr} out of range [0, {self.total_blocks})"
            )

    def _check_block(self, b: bytes) -> None:
        if len(b) != self.block_size:
            raise DeviceError(
                f"block must be exactly {self.block_size} bytes, got {len(b)}"
            )

    def read(self, addr: int) -> bytes:
        self._check_addr(addr)
        self._counters.reads += 1
        if addr in self._pending:
            return self._pending[addr]
        return self._durable_read(addr)

    def write(self, addr: int, b: bytes) -> None:
        self._check_addr(addr)
        self._check_block(b)
        self._counters.writes += 1
        self._pending[addr] = bytes(b)

    def sync(self) -> None:
        self._counters.syncs += 1
        for addr, b in self._pending.items():
            self._durable_write(addr, b)
        self._pending.clear()
        self._flush()

    def _flush(self) -> None:
        pass

    def counters(self) -> OpCounters:
        return self._counters.copy()

    # -- out-of-band access (no counters) -------------------------------------

    def peek(self, addr: int) -> bytes:
        """What the next honest read would return, without counting."""
        self._check_addr(addr)
        if addr in self._pending:
            return self._pending[addr]
        return self._durable_read(addr)

    def poke(self, addr: int, b: bytes) -> None:
        """Overwrite the durable medium out-of-band (attacker's pen)."""
        self._check_addr(addr)
        self._check_block(b)
        self._durable_write(addr, b)
        self._flush()

    def pending_addrs(self) -> list[int]:
        return list(self._pending)

    def apply_crash(self, keep: Iterable[int]) -> None:
        """Materialize a crash: the kept pending writes reached the medium,
        the rest vanish. The device continues as its post-crash self."""
        keep_set = set(keep)
        for addr in keep_set:
            if addr in self._pending:
                self._durable_write(addr, self._pending[addr])
        self._pending.clear()
        self._flush()

    def image_bytes(self) -> bytes:
        """Effective full-disk image (pending writes included)."""
        return b"".join(self.peek(a) for a in range(self.total_blocks))

    def load_image_bytes(self, image: bytes) -> None:
        if len(image) != self.total_blocks * self.block_size:
            raise DeviceError("image size does not match device geometry")
        self._pending.clear()
        bs = self.block_size
        for addr in range(self.total_blocks):
            self._durable_write(addr, image[addr * bs : (addr + 1) * bs])
        self._flush()


class MemoryDisk(BlockDevice):
    def __init__(self, total_blocks: int, block_size: int):
        super().__init__(total_blocks, block_size)
        self._blocks = [bytes(block_size)] * total_blocks

    def _durable_read(self, addr: int) -> bytes:
        return self._blocks[addr]

    def _durable_write(self, addr: int, b: bytes) -> None:
        self._blocks[addr] = bytes(b)


class FileDisk(BlockDevice):
    """Backed by a raw image file of exactly total_blocks * block_size bytes.

    The file is created zero-filled if missing; an existing file must be
    at least as large as the geometry requires.
    """

    def __init__(self, path: str | Path, total_blocks: int, block_size: int):
        super().__init__(total_blocks, block_size)
        self.path = Path(path)
        needed = total_blocks * block_size
        if self.path.exists():
            if self.path.stat().st_size < needed:
                raise DeviceError(
                    f"image {self.path} is {self.path.stat().st_size} bytes, "
                    f"needs {needed}"
                )
            self._f = open(self.path, "r+b")
        else:
            self._f = open(self.path, "w+b")
            self._f.truncate(needed)

    def _durable_read(self, addr: int) -> bytes:
        self._f.seek(addr * self.block_size)
        return self._f.read(self.block_size)

    def _durable_write(self, addr: int, b: bytes) -> None:
        self._f.seek(addr * self.block_size)
        self._f.write(b)

    def _flush(self) -> None:
        self._f.flush()
        os.fsync(self._f.fileno())

    def close(self) -> None:
        self._f.close()


def zero_block(block_size: int) -> bytes:
    return bytes(block_size)

"""Disk layout and Merkle index arithmetic.

The hash tree is a complete, fixed-depth, high-fanout tree stored
breadth-first in its own disk region, so every node location is a pure
function of (level, index) and no child pointers are ever stored. All
functions here are pure; everything else in the stack leans on them.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import GeometryError

DEFAULT_BLOCK_SIZE = 4096
DEFAULT_DIGEST_SIZE = 32
DEFAULT_FANOUT = DEFAULT_BLOCK_SIZE // DEFAULT_DIGEST_SIZE  # 128
DEFAULT_DEPTH = 4


@dataclass(frozen=True)
class GeometryConfig:
    """Mount-time constants describing one formatted disk."""

    block_size: int = DEFAULT_BLOCK_SIZE
    digest_size: int = DEFAULT_DIGEST_SIZE
    fanout: int = DEFAULT_FANOUT
    depth: int = DEFAULT_DEPTH
    data_blocks: int = 64
    log_blocks: int = 32

    def __post_init__(self):
        if self.fanout < 2:
            raise GeometryError(f"fanout must be >= 2, got {self.fanout}")
        if self.depth < 1:
            raise GeometryError(f"depth must be >= 1, got {self.depth}")
        if self.data_blocks < 1:
            raise GeometryError("data_blocks must be >= 1")
        if self.log_blocks < 2:
            raise GeometryError("log_blocks must be >= 2")
        if self.digest_size < 1 or self.block_size % self.digest_size != 0:
            raise GeometryError(
                f"block_size {self.block_size} not divisible by "
                f"digest_size {self.digest_size}"
            )
        if self.block_size // self.digest_size != self.fanout:
            raise GeometryError(
                f"fanout must equal block_size/digest_size = "
                f"{self.block_size // self.digest_size}, got {self.fanout}"
            )
        if self.data_blocks > self.capacity:
            raise GeometryError(
                f"data_blocks {self.data_blocks} exceeds tree capacity "
                f"{self.capacity} (fanout^depth)"
            )

    @property
    def capacity(self) -> int:
        """Leaf slots in the full tree: fanout**depth."""
        return self.fanout**self.depth


@dataclass(frozen=True)
class DiskLayout:
    """Block-address partition: superblock | log | hash | data."""

    superblock_at: int
    log_start: int
    log_len: int
    hash_start: int
    hash_len: int
    data_start: int
    data_len: int
    total_blocks: int

    def region_of(self, addr: int) -> str:
        if addr == self.superblock_at:
            return "superblock"
        if self.log_start <= addr < self.log_start + self.log_len:
            return "log"
        if self.hash_start <= addr < self.hash_start + self.hash_len:
            return "hash"
        if self.data_start <= addr < self.data_start + self.data_len:
            return "data"
        raise GeometryError(f"address {addr} outside all regions")

    def in_data(self, addr: int) -> bool:
        return self.data_start <= addr < self.data_start + self.data_len

    def in_hash(self, addr: int) -> bool:
        return self.hash_start <= addr < self.hash_start + self.hash_len


@dataclass(frozen=True)
class PathStep:
    node_block: int  # absolute block address in the hash region
    child_slot: int  # index in [0, fanout)


@dataclass(frozen=True)
class MerklePath:
    """Root-to-leaf walk; steps[0] is the root block, len(steps) == depth."""

    steps: tuple[PathStep, ...]


def hash_region_blocks(fanout: int, depth: int) -> int:
    """Number of hash blocks for a full tree: sum of fanout**i, i < depth."""
    return sum(fanout**i for i in range(depth))


def layout_for(config: GeometryConfig) -> DiskLayout:
    """Partition a disk for the given geometry.

    The hash region is sized for full capacity fanout**depth even when
    data_blocks is smaller; unused leaf slots hold the all-zero-block
    digest so the index arithmetic stays closed-form.
    """
    log_start = 1
    hash_start = log_start + config.log_blocks
    hash_len = hash_region_blocks(config.fanout, config.depth)
    data_start = hash_start + hash_len
    total = 1 + config.log_blocks + hash_len + config.data_blocks
    return DiskLayout(
        superblock_at=0,
        log_start=log_start,
        log_len=config.log_blocks,
        hash_start=hash_start,
        hash_len=hash_len,
        data_start=data_start,
        data_len=config.data_blocks,
        total_blocks=total,
    )


def min_depth(capacity_blocks: int, fanout: int) -> int:
    """Smallest d >= 1 with fanout**d >= capacity_blocks."""
    if capacity_blocks < 1:
        raise GeometryError("capacity must be >= 1")
    if fanout < 2:
        raise GeometryError("fanout must be >= 2")
    d = 1
    while fanout**d < capacity_blocks:
        d += 1
    return d


def node_location(
    level: int, node_index: int, layout: DiskLayout, config: GeometryConfig
) -> int:
    """Block address of tree node (level, node_index), breadth-first.

    Level 0 is the root; level d holds fanout**d nodes starting right
    after all shallower levels.
    """
    if not 0 <= level < config.depth:
        raise GeometryError(f"level {level} out of range [0, {config.depth})")
    if not 0 <= node_index < config.fanout**level:
        raise GeometryError(
            f"node_index {node_index} out of range at level {level}"
        )
    return layout.hash_start + hash_region_blocks(config.fanout, level) + node_index


def leaf_path(
    data_index: int, config: GeometryConfig, layout: DiskLayout
) -> MerklePath:
    """Root-to-leaf path for a data index.

    The child slots are exactly the radix-fanout digits of data_index,
    most significant first; step k visits the level-k node whose subtree
    contains the leaf.
    """
    if not 0 <= data_index < config.capacity:
        raise GeometryError(
            f"data_index {data_index} out of range [0, {config.capacity})"
        )
    steps = []
    for k in range(config.depth):
        node_index = data_index // config.fanout ** (config.depth - k)
        child_slot = (data_index // config.fanout ** (config.depth - 1 - k)) % config.fanout
        steps.append(
            PathStep(
                node_block=node_location(k, node_index, layout, config),
                child_slot=child_slot,
            )
        )
    return MerklePath(steps=tuple(steps))

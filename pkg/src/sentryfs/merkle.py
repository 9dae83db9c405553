"""The fat Merkle tree over the hash region.

Hash blocks hold `fanout` child digests each. Retrieval walks top-down,
verifying every node against the digest its parent committed to (the
root is verified against the caller's trusted commitment). Updates
re-walk the same verified path, then rewrite it bottom-up, so no
unverified device block ever feeds a digest computation.

All reads and writes go through the transaction log; within one
transaction, repeated updates to shared path blocks coalesce in the
write buffer and hit the disk once at commit.
"""

from __future__ import annotations

from dataclasses import dataclass

from .geometry import DiskLayout, GeometryConfig, leaf_path, node_location
from .errors import GeometryError
from .hashing import serialize_node
from .txlog import Txn, TxLog


@dataclass(frozen=True)
class RootCommitment:
    root_digest: bytes


@dataclass
class AuditReport:
    ok: bool
    lines: list[str]

    @property
    def first_violation(self) -> str | None:
        return None if self.ok else self.lines[0]


class MerkleTree:
    def __init__(self, txlog: TxLog):
        self.txlog = txlog
        self.config: GeometryConfig = txlog.config
        self.layout: DiskLayout = txlog.layout
        self.engine = txlog.engine
        self.key = txlog.key
        self._empty_leaf: bytes | None = None

    # -- digest helpers -----------------------------------------------------------

    def empty_leaf_digest(self) -> bytes:
        """Digest of the all-zero block; fills every unallocated leaf slot."""
        if self._empty_leaf is None:
            self._empty_leaf = self.engine.digest_block(
                self.key, bytes(self.config.block_size)
            )
        return self._empty_leaf

    def _slot(self, block: bytes, slot: int) -> bytes:
        ds = self.config.digest_size
        return block[slot * ds : (slot + 1) * ds]

    def _set_slot(self, block: bytes, slot: int, digest: bytes) -> bytes:
        ds = self.config.digest_size
        return block[: slot * ds] + digest + block[(slot + 1) * ds :]

    # -- construction -----------------------------------------------------------------

    def build_initial(
        self, txn: Txn, initial_data: dict[int, bytes] | None = None
    ) -> RootCommitment:
        """Format-time full build over a zeroed data region.

        `initial_data` maps data indices to the few nonzero blocks mkfs
        lays down; every other leaf gets the empty-leaf digest.
        """
        initial_data = initial_data or {}
        cfg = self.config
        empty = self.empty_leaf_digest()
        level = []
        for i in range(cfg.capacity):
            if i in initial_data:
                level.append(self.engine.digest_block(self.key, initial_data[i]))
            else:
                level.append(empty)
        for lvl in range(cfg.depth - 1, -1, -1):
            parents = []
            for j in range(cfg.fanout**lvl):
                children = level[j * cfg.fanout : (j + 1) * cfg.fanout]
                block = serialize_node(children, cfg.block_size)
                self.txlog.write_hash(
                    txn, node_location(lvl, j, self.layout, cfg), block
                )
                parents.append(self.engine.digest_block(self.key, block))
            level = parents
        return RootCommitment(level[0])

    # -- verified retrieval and update ---------------------------------------------------

    def get_hash_from_root(
        self, txn: Txn | None, data_index: int, root: RootCommitment
    ) -> bytes:
        """Leaf digest for a data index, every path node verified on the way."""
        path = leaf_path(data_index, self.config, self.layout)
        expected = root.root_digest
        for step in path.steps:
            block = self.txlog.read(step.node_block, expected, txn)
            expected = self._slot(block, step.child_slot)
        return expected

    def update_hash(
        self, txn: Txn, data_index: int, new_leaf: bytes, root: RootCommitment
    ) -> RootCommitment:
        """Replace one leaf and rewrite its path bottom-up.

        Exactly `depth` hash-block writes and `depth` node digests.
        """
        path = leaf_path(data_index, self.config, self.layout)
        blocks = []
        expected = root.root_digest
        for step in path.steps:
            block = self.txlog.read(step.node_block, expected, txn)
            blocks.append(block)
            expected = self._slot(block, step.child_slot)
        cur = new_leaf
        for k in range(self.config.depth - 1, -1, -1):
            updated = self._set_slot(blocks[k], path.steps[k].child_slot, cur)
            self.txlog.write_hash(txn, path.steps[k].node_block, updated)
            cur = self.engine.digest_block(self.key, updated)
        return RootCommitment(cur)

    # -- offline audit -----------------------------------------------------------------------

    def verify_full(self, root: RootCommitment) -> AuditReport:
        """Check every parent-child relation and every leaf against its
        data block. Stops at the first violation; reads are raw (the
        audit recomputes digests instead of trusting any)."""
        if self.txlog._active is not None:
            raise GeometryError("verify_full requires no active transaction")
        cfg = self.config
        dev = self.txlog.device
        read = dev.read

        root_block = read(node_location(0, 0, self.layout, cfg))
        actual_root = self.engine.digest_block(self.key, root_block)
        if actual_root != root.root_digest:
            return AuditReport(
                ok=False,
                lines=[
                    f"ROOT-MISMATCH expected={root.root_digest.hex()} "
                    f"actual={actual_root.hex()}"
                ],
            )

        level_blocks = [root_block]
        for lvl in range(cfg.depth - 1):
            child_blocks = []
            for j, parent in enumerate(level_blocks):
                for s in range(cfg.fanout):
                    child_index = j * cfg.fanout + s
                    child = read(
                        node_location(lvl + 1, child_index, self.layout, cfg)
                    )
                    if self.engine.digest_block(self.key, child) != self._slot(parent, s):
                        return AuditReport(
                            ok=False,
                            lines=[f"NODE-MISMATCH level={lvl + 1} idx={child_index}"],
                        )
                    child_blocks.append(child)
            level_blocks = child_blocks

        empty = self.empty_leaf_digest()
        for j, leaf_block in enumerate(level_blocks):
            for s in range(cfg.fanout):
                idx = j * cfg.fanout + s
                want = self._slot(leaf_block, s)
                if idx < self.layout.data_len:
                    data = read(self.layout.data_start + idx)
                    if self.engine.digest_block(self.key, data) != want:
                        return AuditReport(ok=False, lines=[f"LEAF-MISMATCH idx={idx}"])
                elif want != empty:
                    return AuditReport(ok=False, lines=[f"LEAF-MISMATCH idx={idx}"])
        return AuditReport(ok=True, lines=[f"OK root={root.root_digest.hex()}"])

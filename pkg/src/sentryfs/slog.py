"""Integrity-checked block interface: safe_read / safe_write.

Every higher layer goes through this instead of the raw log. A session
pins the trusted root in memory; reads fetch the leaf digest through
the verified path and gate the data block on it, writes update the data
block and the Merkle path together and advance the pinned root.

The first integrity failure poisons the session: the halt is sticky and
every later call re-raises it. The owning file system decides what to
do with the wreckage (discard the transaction, mark itself halted).
"""

from __future__ import annotations

from .errors import GeometryError, IntegrityFailure
from .merkle import MerkleTree, RootCommitment
from .txlog import Txn, TxLog


class SafeSession:
    def __init__(self, txlog: TxLog, tree: MerkleTree, root: RootCommitment):
        self.txlog = txlog
        self.tree = tree
        self.pinned_root = root
        self.halted = False
        self._failure: IntegrityFailure | None = None

    def _check_live(self) -> None:
        if self.halted:
            assert self._failure is not None
            raise self._failure

    def _check_index(self, data_index: int) -> None:
        if not 0 <= data_index < self.txlog.layout.data_len:
            raise GeometryError(
                f"data index {data_index} out of range "
                f"[0, {self.txlog.layout.data_len})"
            )

    def _halt(self, failure: IntegrityFailure) -> None:
        self.halted = True
        self._failure = failure

    def safe_read(self, data_index: int, txn: Txn | None = None) -> bytes:
        self._check_live()
        self._check_index(data_index)
        try:
            leaf = self.tree.get_hash_from_root(txn, data_index, self.pinned_root)
            return self.txlog.read(
                self.txlog.layout.data_start + data_index, leaf, txn
            )
        except IntegrityFailure as f:
            self._halt(f)
            raise

    def safe_write(self, txn: Txn, data_index: int, v: bytes) -> RootCommitment:
        self._check_live()
        self._check_index(data_index)
        leaf = self.txlog.engine.digest_block(self.txlog.key, v)
        try:
            self.txlog.write_data(txn, self.txlog.layout.data_start + data_index, v)
            new_root = self.tree.update_hash(txn, data_index, leaf, self.pinned_root)
        except IntegrityFailure as f:
            self._halt(f)
            raise
        self.pinned_root = new_root
        return new_root

    def repin(self, root: RootCommitment) -> None:
        """Reset the in-memory root to the last committed one (abort path)."""
        self.pinned_root = root

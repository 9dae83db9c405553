"""Unix-v6-style file and directory layer with the TPM-coupled commit protocol.

Every piece of file-system state — inode table, free bitmap, directory
blocks, file data — lives inside the Merkle-protected data region, so
metadata tampering is detected exactly like data tampering. The
superblock is the one block outside the tree; its digest is held in the
trusted store and checked at mount.

Each mutating operation is one transaction: buffered safe_writes, then
the trusted root is advanced, then the log commits. Read-only
operations touch neither the log nor the trusted store.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from pathlib import Path

from .blockdev import FileDisk
from .errors import (
    DeviceError,
    Exists,
    FsError,
    IntegrityFailure,
    NoSpace,
    NotADirectory,
    NotEmpty,
    NotFound,
    RootMismatch,
    SuperblockMismatch,
)
from .geometry import DiskLayout, GeometryConfig, layout_for, node_location
from .hashing import HashEngine
from .merkle import MerkleTree, RootCommitment
from .slog import SafeSession
from .tpm import Tpm
from .txlog import RecoveryOutcome, TxLog

SB_MAGIC = b"SNTRYFS1"
SB_VERSION = 1
SB_STRUCT = struct.Struct("<8sIIIIIQQIIIIII")

INODE_SIZE = 64
INODE_STRUCT = struct.Struct("<B7xQ12I")
NUM_DIRECT = 12

DIRENT_SIZE = 32
NAME_MAX = 28

KIND_FREE = 0
KIND_FILE = 1
KIND_DIR = 2

ROOT_INUM = 1


@dataclass
class Superblock:
    config: GeometryConfig
    root_inum: int
    inode_table_start: int  # data-region-relative
    inode_table_len: int
    bitmap_start: int
    bitmap_len: int
    inode_count: int

    def pack(self) -> bytes:
        c = self.config
        raw = SB_STRUCT.pack(
            SB_MAGIC,
            SB_VERSION,
            c.block_size,
            c.digest_size,
            c.fanout,
            c.depth,
            c.data_blocks,
            c.log_blocks,
            self.root_inum,
            self.inode_table_start,
            self.inode_table_len,
            self.bitmap_start,
            self.bitmap_len,
            self.inode_count,
        )
        return raw.ljust(c.block_size, b"\0")

    @classmethod
    def unpack(cls, raw: bytes) -> "Superblock":
        fields = SB_STRUCT.unpack(raw[: SB_STRUCT.size])
        (magic, version, bs, ds, fanout, depth, data_blocks, log_blocks,
         root_inum, it_start, it_len, bm_start, bm_len, inode_count) = fields
        if magic != SB_MAGIC:
            raise FsError("block 0 is not a sentryfs superblock")
        if version != SB_VERSION:
            raise FsError(f"unsupported format version {version}")
        config = GeometryConfig(
            block_size=bs,
            digest_size=ds,
            fanout=fanout,
            depth=depth,
            data_blocks=data_blocks,
            log_blocks=log_blocks,
        )
        return cls(config, root_inum, it_start, it_len, bm_start, bm_len, inode_count)


@dataclass
class Inode:
    kind: int = KIND_FREE
    size: int = 0
    refs: list[int] = None

    def __post_init__(self):
        if self.refs is None:
            self.refs = [0] * NUM_DIRECT

    def pack(self) -> bytes:
        return INODE_STRUCT.pack(self.kind, self.size, *self.refs)

    @classmethod
    def unpack(cls, raw: bytes) -> "Inode":
        fields = INODE_STRUCT.unpack(raw[:INODE_SIZE])
        return cls(kind=fields[0], size=fields[1], refs=list(fields[2:]))


@dataclass
class StatResult:
    inum: int
    kind: str  # "file" | "dir"
    size: int


class FsStatus(enum.Enum):
    RUNNING = "running"
    HALTED = "halted"
    UNMOUNTED = "unmounted"


@dataclass
class MountInfo:
    recovery: RecoveryOutcome
    used_recover_hash: bool
    root: bytes


def _pack_dirent(name: str, inum: int) -> bytes:
    raw = name.encode()
    return raw.ljust(NAME_MAX, b"\0") + inum.to_bytes(4, "little")


def _scan_dirents(block: bytes) -> list[tuple[int, str, int]]:
    """(slot, name, inum) for every live entry in one directory block."""
    out = []
    for slot in range(len(block) // DIRENT_SIZE):
        raw = block[slot * DIRENT_SIZE : (slot + 1) * DIRENT_SIZE]
        if raw[0] == 0:
            continue
        name = raw[:NAME_MAX].rstrip(b"\0").decode()
        inum = int.from_bytes(raw[NAME_MAX:], "little")
        out.append((slot, name, inum))
    return out


def _check_name(name: str) -> bytes:
    raw = name.encode()
    if not raw or len(raw) > NAME_MAX:
        raise FsError(f"name {name!r} must be 1..{NAME_MAX} bytes")
    if b"/" in raw or b"\0" in raw:
        raise FsError(f"name {name!r} contains a reserved character")
    if name in (".", ".."):
        raise FsError(f"name {name!r} is reserved")
    return raw


def _split_path(path: str) -> list[str]:
    if not path.startswith("/"):
        raise FsError(f"path {path!r} must be absolute")
    return [p for p in path.split("/") if p]


class FileSystem:
    """A mounted instance. Construct via `mkfs` + `mount`."""

    def __init__(
        self,
        device,
        sb: Superblock,
        tpm: Tpm,
        txlog: TxLog,
        tree: MerkleTree,
        session: SafeSession,
        mount_info: MountInfo,
    ):
        self.device = device
        self.sb = sb
        self.config = sb.config
        self.layout = txlog.layout
        self.tpm = tpm
        self.txlog = txlog
        self.tree = tree
        self.session = session
        self.mount_info = mount_info
        self.status = FsStatus.RUNNING

    # -- format and mount -------------------------------------------------------

    @staticmethod
    def _plan_metadata(config: GeometryConfig) -> tuple[int, int, int, int]:
        """(inode_count, table_blocks, bitmap_blocks, root_dir_idx)."""
        if config.block_size < SB_STRUCT.size:
            raise FsError("block size too small for the superblock")
        per_block = config.block_size // INODE_SIZE
        inode_count = max(8, min(config.data_blocks // 4, 4096))
        table_blocks = -(-inode_count // per_block)
        bitmap_blocks = -(-config.data_blocks // (config.block_size * 8))
        reserved = table_blocks + bitmap_blocks + 1
        if reserved + 1 > config.data_blocks:
            raise FsError(
                f"data region of {config.data_blocks} blocks cannot hold "
                f"{reserved} metadata blocks plus file space"
            )
        return inode_count, table_blocks, bitmap_blocks, table_blocks + bitmap_blocks

    @classmethod
    def mkfs(
        cls,
        device,
        config: GeometryConfig,
        engine: HashEngine,
        key: bytes,
        tpm_path: str | Path | None = None,
    ) -> tuple[Superblock, Tpm]:
        """Format the device and provision the trusted store.

        Reinitializes unconditionally: stale log markers, data, and hash
        blocks from any previous life are wiped or rebuilt.
        """
        layout = layout_for(config)
        if device.total_blocks < layout.total_blocks:
            raise DeviceError(
                f"device has {device.total_blocks} blocks, geometry needs "
                f"{layout.total_blocks}"
            )
        inode_count, table_blocks, bitmap_blocks, root_dir_idx = cls._plan_metadata(config)
        sb = Superblock(
            config=config,
            root_inum=ROOT_INUM,
            inode_table_start=0,
            inode_table_len=table_blocks,
            bitmap_start=table_blocks,
            bitmap_len=bitmap_blocks,
            inode_count=inode_count,
        )
        bs = config.block_size

        # Inode table: root directory only.
        table = bytearray(table_blocks * bs)
        root_inode = Inode(kind=KIND_DIR, size=2 * DIRENT_SIZE)
        root_inode.refs[0] = root_dir_idx
        table[ROOT_INUM * INODE_SIZE : ROOT_INUM * INODE_SIZE + INODE_SIZE] = (
            root_inode.pack()
        )

        # Free bitmap: metadata blocks are pre-allocated.
        bitmap = bytearray(bitmap_blocks * bs)
        for idx in range(root_dir_idx + 1):
            bitmap[idx // 8] |= 1 << (idx % 8)

        rootdir = bytearray(bs)
        rootdir[0:DIRENT_SIZE] = _pack_dirent(".", ROOT_INUM)
        rootdir[DIRENT_SIZE : 2 * DIRENT_SIZE] = _pack_dirent("..", ROOT_INUM)

        metadata: dict[int, bytes] = {}
        for i in range(table_blocks):
            metadata[i] = bytes(table[i * bs : (i + 1) * bs])
        for i in range(bitmap_blocks):
            metadata[table_blocks + i] = bytes(bitmap[i * bs : (i + 1) * bs])
        metadata[root_dir_idx] = bytes(rootdir)

        sb_block = sb.pack()
        device.write(layout.superblock_at, sb_block)
        for i in range(layout.log_len):
            device.write(layout.log_start + i, bytes(bs))

        txlog = TxLog(device, layout, config, engine, key)
        tree = MerkleTree(txlog)
        txn = txlog.begin()
        for i in range(layout.data_len):
            txlog.write_data(txn, layout.data_start + i, metadata.get(i, bytes(bs)))
        root = tree.build_initial(txn, metadata)
        txlog.unlogged_commit(txn)

        hash_sb = engine.digest_block(key, sb_block)
        tpm = Tpm.provision(key, hash_sb, root.root_digest, tpm_path)
        return sb, tpm

    @classmethod
    def mount(
        cls,
        device,
        tpm: Tpm,
        engine: HashEngine,
        cache_enabled: bool = True,
    ) -> "FileSystem":
        """Verify the superblock, run log recovery, then root recovery."""
        suppress = hasattr(device, "begin_recovery")
        if suppress:
            device.begin_recovery()
        try:
            raw_sb = device.read(0)
            if engine.digest_block(tpm.key, raw_sb) != tpm.get_sb():
                raise SuperblockMismatch("superblock digest does not match hashSB")
            sb = Superblock.unpack(raw_sb)
            layout = layout_for(sb.config)
            if device.total_blocks < layout.total_blocks:
                raise DeviceError("device smaller than its superblock claims")

            txlog = TxLog(
                device, layout, sb.config, engine, tpm.key, cache_enabled=cache_enabled
            )
            outcome = txlog.recover()

            root_block = device.read(node_location(0, 0, layout, sb.config))
            commitment = engine.digest_block(tpm.key, root_block)
            used_recover = False
            if commitment != tpm.get_current():
                tpm.recover_old_hash()
                used_recover = True
                if commitment != tpm.get_current():
                    raise RootMismatch(
                        "on-disk root matches neither trusted root "
                        "(tampering or rollback beyond the conceded window)"
                    )
            tree = MerkleTree(txlog)
            session = SafeSession(txlog, tree, RootCommitment(commitment))
            return cls(
                device,
                sb,
                tpm,
                txlog,
                tree,
                session,
                MountInfo(outcome, used_recover, commitment),
            )
        finally:
            if suppress:
                device.end_recovery()

    def unmount(self) -> None:
        if self.status is FsStatus.UNMOUNTED:
            raise FsError("already unmounted")
        self.device.sync()
        self.status = FsStatus.UNMOUNTED

    # -- operation plumbing ---------------------------------------------------------

    def _require_running(self) -> None:
        if self.status is FsStatus.UNMOUNTED:
            raise FsError("file system is not mounted")
        if self.status is FsStatus.HALTED:
            self.session._check_live()
            raise FsError("file system is halted")  # unreachable; halt re-raises

    def _run_mutation(self, fn):
        """One top-level mutating operation: begin, buffer, advance the
        trusted root, commit. Any failure discards the buffer and restores
        the pinned root; integrity failures additionally halt."""
        self._require_running()
        txn = self.txlog.begin()
        root_before = self.session.pinned_root
        try:
            result = fn(txn)
        except IntegrityFailure:
            if txn.active:
                self.txlog.abort(txn)
            self.session.repin(root_before)
            self.status = FsStatus.HALTED
            raise
        except Exception:
            if txn.active:
                self.txlog.abort(txn)
            self.session.repin(root_before)
            raise
        if txn.data_writes or txn.hash_writes:
            n = len(txn.data_writes) + len(txn.hash_writes)
            if n > self.txlog.max_entries:
                self.txlog.abort(txn)
                self.session.repin(root_before)
                raise NoSpace(
                    f"operation needs {n} log entries, log holds {self.txlog.max_entries}"
                )
            self.tpm.update_hash_current(self.session.pinned_root.root_digest)
            self.txlog.commit(txn)
        else:
            self.txlog.abort(txn)
        return result

    def _read_guard(self):
        self._require_running()

    # -- inode and bitmap machinery ----------------------------------------------------

    def _inodes_per_block(self) -> int:
        return self.config.block_size // INODE_SIZE

    def _read_inode(self, inum: int, txn=None) -> Inode:
        if not 0 < inum < self.sb.inode_count:
            raise NotFound(f"inode {inum} out of range")
        per = self._inodes_per_block()
        block = self.session.safe_read(self.sb.inode_table_start + inum // per, txn)
        off = (inum % per) * INODE_SIZE
        return Inode.unpack(block[off : off + INODE_SIZE])

    def _write_inode(self, txn, inum: int, inode: Inode) -> None:
        per = self._inodes_per_block()
        idx = self.sb.inode_table_start + inum // per
        block = self.session.safe_read(idx, txn)
        off = (inum % per) * INODE_SIZE
        patched = block[:off] + inode.pack() + block[off + INODE_SIZE :]
        self.session.safe_write(txn, idx, patched)

    def _alloc_inode(self, txn) -> int:
        per = self._inodes_per_block()
        for inum in range(1, self.sb.inode_count):
            block = self.session.safe_read(self.sb.inode_table_start + inum // per, txn)
            off = (inum % per) * INODE_SIZE
            if Inode.unpack(block[off : off + INODE_SIZE]).kind == KIND_FREE:
                return inum
        raise NoSpace("inode table is full")

    def _alloc_block(self, txn) -> int:
        bs = self.config.block_size
        for b in range(self.sb.bitmap_len):
            idx = self.sb.bitmap_start + b
            block = self.session.safe_read(idx, txn)
            for byte_i, byte in enumerate(block):
                if byte == 0xFF:
                    continue
                for bit in range(8):
                    data_idx = (b * bs + byte_i) * 8 + bit
                    if data_idx >= self.config.data_blocks:
                        break
                    if not byte & (1 << bit):
                        patched = (
                            block[:byte_i]
                            + bytes([byte | (1 << bit)])
                            + block[byte_i + 1 :]
                        )
                        self.session.safe_write(txn, idx, patched)
                        return data_idx
        raise NoSpace("no free data blocks")

    def _free_block(self, txn, data_idx: int) -> None:
        bs = self.config.block_size
        b, rem = divmod(data_idx, bs * 8)
        byte_i, bit = divmod(rem, 8)
        idx = self.sb.bitmap_start + b
        block = self.session.safe_read(idx, txn)
        patched = (
            block[:byte_i] + bytes([block[byte_i] & ~(1 << bit) & 0xFF]) + block[byte_i + 1 :]
        )
        self.session.safe_write(txn, idx, patched)

    # -- directories ---------------------------------------------------------------------

    def _dir_entries(self, inode: Inode, txn=None) -> list[tuple[int, int, str, int]]:
        """(ref_slot, entry_slot, name, inum) across all allocated blocks."""
        out = []
        for ref_slot, ref in enumerate(inode.refs):
            if ref == 0:
                continue
            block = self.session.safe_read(ref, txn)
            for slot, name, inum in _scan_dirents(block):
                out.append((ref_slot, slot, name, inum))
        return out

    def _dir_find(self, inode: Inode, name: str, txn=None):
        for ref_slot, slot, ent_name, inum in self._dir_entries(inode, txn):
            if ent_name == name:
                return ref_slot, slot, inum
        return None

    def _dir_add(self, txn, dir_inum: int, dir_inode: Inode, name: str, inum: int) -> None:
        entry = _pack_dirent(name, inum)
        per_block = self.config.block_size // DIRENT_SIZE
        for ref_slot, ref in enumerate(dir_inode.refs):
            if ref == 0:
                continue
            block = self.session.safe_read(ref, txn)
            for slot in range(per_block):
                if block[slot * DIRENT_SIZE] == 0:
                    patched = (
                        block[: slot * DIRENT_SIZE]
                        + entry
                        + block[(slot + 1) * DIRENT_SIZE :]
                    )
                    self.session.safe_write(txn, ref, patched)
                    dir_inode.size += DIRENT_SIZE
                    self._write_inode(txn, dir_inum, dir_inode)
                    return
        for ref_slot, ref in enumerate(dir_inode.refs):
            if ref == 0:
                new_idx = self._alloc_block(txn)
                block = entry.ljust(self.config.block_size, b"\0")
                self.session.safe_write(txn, new_idx, block)
                dir_inode.refs[ref_slot] = new_idx
                dir_inode.size += DIRENT_SIZE
                self._write_inode(txn, dir_inum, dir_inode)
                return
        raise NoSpace(f"directory of inode {dir_inum} is full")

    def _dir_remove(self, txn, dir_inum: int, dir_inode: Inode, name: str) -> int:
        found = self._dir_find(dir_inode, name, txn)
        if found is None:
            raise NotFound(f"no entry {name!r}")
        ref_slot, slot, inum = found
        ref = dir_inode.refs[ref_slot]
        block = self.session.safe_read(ref, txn)
        patched = (
            block[: slot * DIRENT_SIZE]
            + bytes(DIRENT_SIZE)
            + block[(slot + 1) * DIRENT_SIZE :]
        )
        self.session.safe_write(txn, ref, patched)
        dir_inode.size -= DIRENT_SIZE
        self._write_inode(txn, dir_inum, dir_inode)
        return inum

    # -- path resolution -----------------------------------------------------------------------

    def _resolve(self, path: str, txn=None) -> int:
        inum = self.sb.root_inum
        for comp in _split_path(path):
            inode = self._read_inode(inum, txn)
            if inode.kind != KIND_DIR:
                raise NotADirectory(f"{comp!r} looked up under a non-directory")
            found = self._dir_find(inode, comp, txn)
            if found is None:
                raise NotFound(f"path {path!r}: component {comp!r} not found")
            inum = found[2]
        return inum

    def _resolve_parent(self, path: str, txn=None) -> tuple[int, str]:
        parts = _split_path(path)
        if not parts:
            raise FsError("operation needs a non-root path")
        parent = "/" + "/".join(parts[:-1])
        return self._resolve(parent, txn), parts[-1]

    # -- top-level operations ---------------------------------------------------------------------

    def create(self, path: str) -> int:
        def op(txn):
            parent_inum, name = self._resolve_parent(path, txn)
            _check_name(name)
            parent = self._read_inode(parent_inum, txn)
            if parent.kind != KIND_DIR:
                raise NotADirectory(f"parent of {path!r} is not a directory")
            if self._dir_find(parent, name, txn) is not None:
                raise Exists(f"{path!r} already exists")
            inum = self._alloc_inode(txn)
            self._write_inode(txn, inum, Inode(kind=KIND_FILE))
            parent = self._read_inode(parent_inum, txn)
            self._dir_add(txn, parent_inum, parent, name, inum)
            return inum

        return self._run_mutation(op)

    def mkdir(self, path: str) -> int:
        def op(txn):
            parent_inum, name = self._resolve_parent(path, txn)
            _check_name(name)
            parent = self._read_inode(parent_inum, txn)
            if parent.kind != KIND_DIR:
                raise NotADirectory(f"parent of {path!r} is not a directory")
            if self._dir_find(parent, name, txn) is not None:
                raise Exists(f"{path!r} already exists")
            inum = self._alloc_inode(txn)
            blk = self._alloc_block(txn)
            dots = _pack_dirent(".", inum) + _pack_dirent("..", parent_inum)
            self.session.safe_write(
                txn, blk, dots.ljust(self.config.block_size, b"\0")
            )
            node = Inode(kind=KIND_DIR, size=2 * DIRENT_SIZE)
            node.refs[0] = blk
            self._write_inode(txn, inum, node)
            parent = self._read_inode(parent_inum, txn)
            self._dir_add(txn, parent_inum, parent, name, inum)
            return inum

        return self._run_mutation(op)

    def unlink(self, path: str) -> None:
        def op(txn):
            parent_inum, name = self._resolve_parent(path, txn)
            parent = self._read_inode(parent_inum, txn)
            found = self._dir_find(parent, name, txn)
            if found is None:
                raise NotFound(f"{path!r} not found")
            inum = found[2]
            node = self._read_inode(inum, txn)
            if node.kind == KIND_DIR:
                live = [
                    n for _, _, n, _ in self._dir_entries(node, txn)
                    if n not in (".", "..")
                ]
                if live:
                    raise NotEmpty(f"{path!r} is not empty")
            for ref in node.refs:
                if ref != 0:
                    self._free_block(txn, ref)
            self._write_inode(txn, inum, Inode())
            parent = self._read_inode(parent_inum, txn)
            self._dir_remove(txn, parent_inum, parent, name)

        return self._run_mutation(op)

    def lookup(self, path: str) -> int:
        self._read_guard()
        return self._resolve(path)

    def readdir(self, path: str) -> list[str]:
        self._read_guard()
        inum = self._resolve(path)
        inode = self._read_inode(inum)
        if inode.kind != KIND_DIR:
            raise NotADirectory(f"{path!r} is not a directory")
        return [name for _, _, name, _ in self._dir_entries(inode)]

    def stat(self, path: str) -> StatResult:
        self._read_guard()
        inum = self._resolve(path)
        inode = self._read_inode(inum)
        kind = "dir" if inode.kind == KIND_DIR else "file"
        return StatResult(inum=inum, kind=kind, size=inode.size)

    def write_file(self, path: str, offset: int, data: bytes) -> int:
        if offset < 0:
            raise FsError("negative offset")
        bs = self.config.block_size
        if offset + len(data) > NUM_DIRECT * bs:
            raise NoSpace(
                f"write end {offset + len(data)} exceeds max file size "
                f"{NUM_DIRECT * bs}"
            )

        def op(txn):
            inum = self._resolve(path, txn)
            inode = self._read_inode(inum, txn)
            if inode.kind != KIND_FILE:
                raise FsError(f"{path!r} is not a regular file")
            if not data:
                return 0
            first = offset // bs
            last = (offset + len(data) - 1) // bs
            for fb in range(first, last + 1):
                if inode.refs[fb] == 0:
                    inode.refs[fb] = self._alloc_block(txn)
                    base = bytes(bs)
                else:
                    base = self.session.safe_read(inode.refs[fb], txn)
                lo = max(offset, fb * bs)
                hi = min(offset + len(data), (fb + 1) * bs)
                patched = (
                    base[: lo - fb * bs]
                    + data[lo - offset : hi - offset]
                    + base[hi - fb * bs :]
                )
                self.session.safe_write(txn, inode.refs[fb], patched)
            inode.size = max(inode.size, offset + len(data))
            self._write_inode(txn, inum, inode)
            return len(data)

        return self._run_mutation(op)

    def read_file(self, path: str, offset: int, length: int) -> bytes:
        self._read_guard()
        if offset < 0 or length < 0:
            raise FsError("negative offset or length")
        inum = self._resolve(path)
        inode = self._read_inode(inum)
        if inode.kind != KIND_FILE:
            raise FsError(f"{path!r} is not a regular file")
        if offset >= inode.size:
            return b""
        end = min(offset + length, inode.size)
        bs = self.config.block_size
        chunks = []
        for fb in range(offset // bs, (end - 1) // bs + 1):
            if inode.refs[fb] == 0:
                block = bytes(bs)
            else:
                block = self.session.safe_read(inode.refs[fb])
            chunks.append(block)
        joined = b"".join(chunks)
        base = (offset // bs) * bs
        return joined[offset - base : end - base]

    # -- verification hooks ------------------------------------------------------------

    def verify_full(self):
        return self.tree.verify_full(RootCommitment(self.tpm.get_current()))


def open_image(path: str | Path) -> FileDisk:
    """Open an existing raw image, sizing the device from its superblock."""
    path = Path(path)
    try:
        with open(path, "rb") as f:
            header = f.read(SB_STRUCT.size)
    except OSError as e:
        raise DeviceError(f"cannot open image {path}: {e}") from e
    if len(header) < SB_STRUCT.size:
        raise DeviceError(f"image {path} is too small to hold a superblock")
    sb = Superblock.unpack(header.ljust(SB_STRUCT.size, b"\0"))
    layout = layout_for(sb.config)
    return FileDisk(path, layout.total_blocks, sb.config.block_size)

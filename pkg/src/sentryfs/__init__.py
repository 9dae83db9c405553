"""sentryfs: a Merkle-protected, crash-consistent block store and
miniature file system, with an adversarial-disk simulator and a
verification harness.

Every disk block — data, metadata, free space, and the hash blocks
themselves — is committed to by a fat Merkle tree whose root lives in a
small trusted store alongside the HMAC key. The store keeps the two
most recent roots so crash recovery can validate whichever state the
write-ahead log recovery lands on.
"""

from .adversary import EvilDisk
from .blockdev import FileDisk, MemoryDisk, OpCounters
from .errors import (
    DeviceError,
    Exists,
    FsError,
    GeometryError,
    IntegrityError,
    IntegrityFailure,
    LogError,
    NoSpace,
    NotADirectory,
    NotEmpty,
    NotFound,
    RootMismatch,
    SentryError,
    SimulatedCrash,
    SuperblockMismatch,
    TpmError,
)
from .fsys import FileSystem, FsStatus, open_image
from .geometry import DiskLayout, GeometryConfig, layout_for, leaf_path, min_depth
from .hashing import Hmac256Engine, SymbolicEngine, make_engine, new_key
from .merkle import MerkleTree, RootCommitment
from .model import ModelFs
from .slog import SafeSession
from .tpm import Tpm
from .txlog import RecoveryOutcome, TxLog, Txn

__version__ = "0.1.0"

__all__ = [
    "DeviceError", "DiskLayout", "EvilDisk", "Exists", "FileDisk",
    "FileSystem", "FsError", "FsStatus", "GeometryConfig", "GeometryError",
    "Hmac256Engine", "IntegrityError", "IntegrityFailure", "LogError",
    "MemoryDisk", "MerkleTree", "ModelFs", "NoSpace", "NotADirectory",
    "NotEmpty", "NotFound", "OpCounters", "RecoveryOutcome", "RootCommitment",
    "RootMismatch", "SafeSession", "SentryError", "SimulatedCrash",
    "SuperblockMismatch", "SymbolicEngine", "Tpm", "TpmError", "TxLog", "Txn",
    "layout_for", "leaf_path", "make_engine", "min_depth", "new_key",
    "open_image",
]

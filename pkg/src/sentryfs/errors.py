"""Exception taxonomy shared across the stack.

Outcome classes are deliberately distinct: ordinary file-system errors,
integrity detections, and simulated crashes must never be confused with
each other (the CLI maps them to different exit codes).
"""

from __future__ import annotations


class SentryError(Exception):
    """Base class for everything raised by this package."""


class GeometryError(SentryError):
    """Invalid disk geometry or out-of-range tree coordinates."""


class DeviceError(SentryError):
    """Block address out of range or malformed block payload."""


class FsError(SentryError):
    """Expected file-system error (exit code 2 family)."""


class NotFound(FsError):
    pass


class Exists(FsError):
    pass


class NotADirectory(FsError):
    pass


class NotEmpty(FsError):
    pass


class NoSpace(FsError):
    pass


class LogError(SentryError):
    """Transaction protocol misuse: nested begin, wrong region, oversized txn."""


class TpmError(SentryError):
    """Trusted-store failure (missing, malformed, or wrong-sized file)."""


class IntegrityError(SentryError):
    """Base of the detection family (exit code 3)."""


class IntegrityFailure(IntegrityError):
    """A verified read returned a block whose digest does not match.

    Carries the failing address and both digests so detection sites are
    attributable in reports and tests.
    """

    def __init__(self, addr: int, expected: bytes, actual: bytes):
        self.addr = addr
        self.expected = expected
        self.actual = actual
        super().__init__(
            f"digest mismatch at block {addr}: "
            f"expected {expected.hex()[:16]}.., got {actual.hex()[:16]}.."
        )


class SuperblockMismatch(IntegrityError):
    """Superblock digest does not match the trusted store."""


class RootMismatch(IntegrityError):
    """On-disk Merkle root matches neither trusted root (tampering or a
    rollback beyond the conceded one-commit window)."""


class SimulatedCrash(SentryError):
    """Raised by the adversarial device when a scheduled crash fires.

    Not an error in the recovery sense: the harness catches it,
    materializes a post-crash image, and runs recovery.
    """

"""Byzantine-disk wrapper: tampering, rollback, flaky reads, crash injection.

Wraps any block device and presents the same interface, so the stack
above cannot tell an honest disk from a hostile one — which is the
point. Attacks are out-of-band: they bypass the operation counters and
the pending-write buffer semantics of the wrapped device.

By default the adversary is well-behaved while recovery runs (flaky
corruption and scheduled crashes are suppressed between
`begin_recovery`/`end_recovery`); strict mode removes that courtesy for
exploratory testing. Previously tampered bytes stay tampered either
way — suppression only stops *new* adversarial actions.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path

from .blockdev import BlockDevice, OpCounters
from .errors import DeviceError, SentryError, SimulatedCrash


@dataclass
class AttackSchedule:
    flaky_probability: float = 0.0
    rng_seed: int = 0
    crash_after_writes: int | None = None
    pending_tampers: list[tuple[int, bytes]] = field(default_factory=list)


class EvilDisk:
    """A block device that may lie on reads and die on writes."""

    def __init__(self, device: BlockDevice, strict: bool = False):
        self._dev = device
        self.strict = strict
        self._flaky_p = 0.0
        self._rng = random.Random(0)
        self._crash_countdown: int | None = None
        self._recovery_depth = 0
        self._snapshots: dict[int, bytes] = {}
        self._next_snapshot = 1

    # -- device interface ------------------------------------------------------

    @property
    def total_blocks(self) -> int:
        return self._dev.total_blocks

    @property
    def block_size(self) -> int:
        return self._dev.block_size

    def read(self, addr: int) -> bytes:
        b = self._dev.read(addr)
        if self._flaky_p > 0.0 and not self._suppressed():
            if self._rng.random() < self._flaky_p:
                return self._corrupt(b)
        return b

    def write(self, addr: int, b: bytes) -> None:
        if self._crash_armed() and self._crash_countdown == 0:
            self._crash_countdown = None
            raise SimulatedCrash(f"scheduled crash before write to block {addr}")
        self._dev.write(addr, b)
        if self._crash_armed():
            self._crash_countdown -= 1
            if self._crash_countdown == 0:
                self._crash_countdown = None
                raise SimulatedCrash(f"scheduled crash after write to block {addr}")

    def sync(self) -> None:
        self._dev.sync()

    def counters(self) -> OpCounters:
        return self._dev.counters()

    def peek(self, addr: int) -> bytes:
        return self._dev.peek(addr)

    def poke(self, addr: int, b: bytes) -> None:
        self._dev.poke(addr, b)

    def pending_addrs(self) -> list[int]:
        return self._dev.pending_addrs()

    def apply_crash(self, keep) -> None:
        self._dev.apply_crash(keep)

    def image_bytes(self) -> bytes:
        return self._dev.image_bytes()

    def load_image_bytes(self, image: bytes) -> None:
        self._dev.load_image_bytes(image)

    # -- attacks ---------------------------------------------------------------

    def tamper(self, addr: int, b: bytes) -> None:
        """Arbitrary out-of-band write straight to the medium."""
        self._dev.poke(addr, b)

    def flip_bits(self, addr: int, byte_offset: int, xor_mask: bytes) -> None:
        if byte_offset < 0 or byte_offset + len(xor_mask) > self._dev.block_size:
            raise DeviceError("xor mask exceeds block bounds")
        cur = self._dev.peek(addr)
        patched = (
            cur[:byte_offset]
            + bytes(c ^ m for c, m in zip(cur[byte_offset:], xor_mask))
            + cur[byte_offset + len(xor_mask) :]
        )
        self._dev.poke(addr, patched)

    def snapshot(self) -> int:
        sid = self._next_snapshot
        self._next_snapshot += 1
        self._snapshots[sid] = self._dev.image_bytes()
        return sid

    def rollback(self, snapshot_id: int) -> None:
        if snapshot_id not in self._snapshots:
            raise SentryError(f"unknown snapshot id {snapshot_id}")
        self._dev.load_image_bytes(self._snapshots[snapshot_id])

    def set_flaky(self, p: float, seed: int = 0) -> None:
        if not 0.0 <= p <= 1.0:
            raise SentryError(f"flaky probability {p} not in [0, 1]")
        self._flaky_p = p
        self._rng = random.Random(seed)

    def schedule_crash(self, after_writes: int) -> None:
        if after_writes < 0:
            raise SentryError("crash countdown must be >= 0")
        self._crash_countdown = after_writes

    def configure(self, schedule: AttackSchedule) -> None:
        self.set_flaky(schedule.flaky_probability, schedule.rng_seed)
        if schedule.crash_after_writes is not None:
            self.schedule_crash(schedule.crash_after_writes)
        for addr, b in schedule.pending_tampers:
            self.tamper(addr, b)

    # -- recovery courtesy window ----------------------------------------------

    def begin_recovery(self) -> None:
        self._recovery_depth += 1

    def end_recovery(self) -> None:
        if self._recovery_depth > 0:
            self._recovery_depth -= 1

    def _suppressed(self) -> bool:
        return self._recovery_depth > 0 and not self.strict

    def _crash_armed(self) -> bool:
        return self._crash_countdown is not None and not self._suppressed()

    def _corrupt(self, b: bytes) -> bytes:
        # Seeded mask, forced nonzero, so the corrupted block always differs.
        mask = bytearray(self._rng.randbytes(len(b)))
        if not any(mask):
            mask[0] = 0x01
        return bytes(c ^ m for c, m in zip(b, mask))


# -- attack scripts --------------------------------------------------------
#
# Line-oriented, `#` comments:
#   tamper <addr> <hexblock>
#   flip <addr> <off> <hexmask>
#   snapshot <name>
#   rollback <name>
#   flaky <p> <seed>
#   crash-after <n>


@dataclass
class AttackCommand:
    op: str
    args: tuple


class ScriptError(SentryError):
    pass


def parse_attack_script(text: str) -> list[AttackCommand]:
    cmds = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        op, args = parts[0], parts[1:]
        try:
            if op == "tamper":
                cmds.append(AttackCommand(op, (int(args[0]), bytes.fromhex(args[1]))))
            elif op == "flip":
                cmds.append(
                    AttackCommand(op, (int(args[0]), int(args[1]), bytes.fromhex(args[2])))
                )
            elif op == "snapshot" or op == "rollback":
                (name,) = args
                cmds.append(AttackCommand(op, (name,)))
            elif op == "flaky":
                p = float(args[0])
                seed = int(args[1]) if len(args) > 1 else 0
                cmds.append(AttackCommand(op, (p, seed)))
            elif op == "crash-after":
                cmds.append(AttackCommand(op, (int(args[0]),)))
            else:
                raise ScriptError(f"line {lineno}: unknown attack op {op!r}")
        except (ValueError, IndexError) as e:
            raise ScriptError(f"line {lineno}: malformed {op!r} command: {e}") from e
    return cmds


class SnapshotStore:
    """Named full-image snapshots; in-memory by default."""

    def __init__(self):
        self._images: dict[str, bytes] = {}

    def save(self, name: str, image: bytes) -> None:
        self._images[name] = image

    def load(self, name: str) -> bytes:
        if name not in self._images:
            raise ScriptError(f"unknown snapshot {name!r}")
        return self._images[name]


class FileSnapshotStore(SnapshotStore):
    """Sidecar files next to the image, so scripts compose across CLI runs."""

    def __init__(self, image_path: str | Path):
        super().__init__()
        self._base = Path(image_path)

    def _sidecar(self, name: str) -> Path:
        safe = "".join(c if c.isalnum() or c in "-_." else "_" for c in name)
        return self._base.with_name(self._base.name + ".snap." + safe)

    def save(self, name: str, image: bytes) -> None:
        self._sidecar(name).write_bytes(image)

    def load(self, name: str) -> bytes:
        p = self._sidecar(name)
        if not p.exists():
            raise ScriptError(f"unknown snapshot {name!r} (no {p.name})")
        return p.read_bytes()


def apply_attack_script(
    evil: EvilDisk, cmds: list[AttackCommand], snapshots: SnapshotStore | None = None
) -> None:
    snapshots = snapshots if snapshots is not None else SnapshotStore()
    for cmd in cmds:
        if cmd.op == "tamper":
            addr, b = cmd.args
            if len(b) != evil.block_size:
                raise ScriptError(
                    f"tamper block must be {evil.block_size} bytes, got {len(b)}"
                )
            evil.tamper(addr, b)
        elif cmd.op == "flip":
            evil.flip_bits(*cmd.args)
        elif cmd.op == "snapshot":
            snapshots.save(cmd.args[0], evil.image_bytes())
        elif cmd.op == "rollback":
            evil.load_image_bytes(snapshots.load(cmd.args[0]))
        elif cmd.op == "flaky":
            evil.set_flaky(*cmd.args)
        elif cmd.op == "crash-after":
            evil.schedule_crash(cmd.args[0])

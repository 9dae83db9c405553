"""Verification harness: workload scripts, ghost traces, crash-point
enumeration, flaky-disk fuzzing, and operation accounting.

Everything here treats the file system as a black box and checks it
against things that cannot be subtly wrong: an in-memory model, full
image snapshots, and exhaustive enumeration of crash points.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .adversary import EvilDisk
from .blockdev import MemoryDisk
from .errors import (
    FsError,
    IntegrityError,
    IntegrityFailure,
    NoSpace,
    SentryError,
    SimulatedCrash,
)
from .fsys import FileSystem, Superblock
from .geometry import GeometryConfig, layout_for
from .hashing import HashEngine, make_engine, new_key
from .model import ModelFs
from .tpm import Tpm


# -- workload scripts ---------------------------------------------------------
#
# Line-oriented, `#` comments:
#   create <path>
#   mkdir <path>
#   unlink <path>
#   write <path> <offset> <hexdata>
#   read <path> <offset> <len>
#   readdir <path>


@dataclass
class WorkloadOp:
    op: str
    args: tuple

    def render(self) -> str:
        parts = [self.op]
        for a in self.args:
            parts.append(a.hex() if isinstance(a, bytes) else str(a))
        return " ".join(parts)


class WorkloadError(SentryError):
    pass


def parse_workload(text: str) -> list[WorkloadOp]:
    ops = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        op, args = parts[0], parts[1:]
        try:
            if op in ("create", "mkdir", "unlink", "readdir", "stat"):
                (path,) = args
                ops.append(WorkloadOp(op, (path,)))
            elif op == "write":
                ops.append(WorkloadOp(op, (args[0], int(args[1]), bytes.fromhex(args[2]))))
            elif op == "read":
                ops.append(WorkloadOp(op, (args[0], int(args[1]), int(args[2]))))
            else:
                raise WorkloadError(f"line {lineno}: unknown op {op!r}")
        except (ValueError, IndexError) as e:
            raise WorkloadError(f"line {lineno}: malformed {op!r}: {e}") from e
    return ops


MUTATING_OPS = ("create", "mkdir", "unlink", "write")


def apply_op(target, op: WorkloadOp):
    """Run one workload op against a FileSystem or a ModelFs."""
    method = {"read": "read_file", "write": "write_file"}.get(op.op, op.op)
    return getattr(target, method)(*op.args)


def smallfiles_ops(
    n_files: int, payload: bytes, dirs: int = 4
) -> list[WorkloadOp]:
    """Create-then-write workload in the style of a smallfiles benchmark."""
    ops = [WorkloadOp("mkdir", (f"/d{d}",)) for d in range(dirs)]
    for i in range(n_files):
        path = f"/d{i % dirs}/f{i}"
        ops.append(WorkloadOp("create", (path,)))
        ops.append(WorkloadOp("write", (path, 0, payload)))
    return ops


# -- ghost traces ------------------------------------------------------------------


class GhostTrace:
    """The expected-vs-actually-read block lists.

    Hooked into the log: every device write is mirrored into an honest
    shadow array, and every verified device read appends the shadow's
    block to expected_l and the device's answer to read_l. On a clean
    run the lists are equal; an integrity failure leaves them divergent
    at exactly the final element. Cache and buffer hits append nothing.
    """

    def __init__(self, shadow_image: bytes, block_size: int):
        self.block_size = block_size
        self._shadow = [
            shadow_image[i : i + block_size]
            for i in range(0, len(shadow_image), block_size)
        ]
        self.expected_l: list[tuple[int, bytes]] = []
        self.read_l: list[tuple[int, bytes]] = []

    def mirror_write(self, addr: int, b: bytes) -> None:
        self._shadow[addr] = bytes(b)

    def on_verified_read(self, addr: int, raw: bytes) -> None:
        self.expected_l.append((addr, self._shadow[addr]))
        self.read_l.append((addr, raw))

    def lists_equal(self) -> bool:
        return self.expected_l == self.read_l

    def divergence_points(self) -> list[int]:
        return [
            i for i, (e, r) in enumerate(zip(self.expected_l, self.read_l)) if e != r
        ]


def install_ghost(fs: FileSystem) -> GhostTrace:
    ghost = GhostTrace(fs.device.image_bytes(), fs.config.block_size)
    fs.txlog.ghost = ghost
    return ghost


# -- formatted images in memory -------------------------------------------------------


def format_memory_image(
    config: GeometryConfig,
    engine: HashEngine | None = None,
    key: bytes | None = None,
) -> tuple[MemoryDisk, Tpm, HashEngine]:
    engine = engine or make_engine(digest_size=config.digest_size)
    key = key or new_key(seed=0)
    device = MemoryDisk(layout_for(config).total_blocks, config.block_size)
    _, tpm = FileSystem.mkfs(device, config, engine, key)
    return device, tpm, engine


def image_config(image: bytes) -> GeometryConfig:
    return Superblock.unpack(image).config


def memory_device_for(image: bytes, config: GeometryConfig) -> MemoryDisk:
    dev = MemoryDisk(len(image) // config.block_size, config.block_size)
    dev.load_image_bytes(image)
    return dev


# -- crash-point enumeration -------------------------------------------------------------


@dataclass
class CrashRow:
    op_index: int
    op: str
    write_index: int
    policy: str
    outcome: str  # log recovery outcome, or "mount-failed"
    classification: str  # "pre-op" | "post-op" | "VIOLATION"
    tpm_root_used: str  # "pre-root" | "post-root" | "?"
    detail: str = ""


@dataclass
class CrashReport:
    rows: list[CrashRow] = field(default_factory=list)

    @property
    def violations(self) -> list[CrashRow]:
        return [r for r in self.rows if r.classification == "VIOLATION"]

    @property
    def crash_points(self) -> int:
        return len(self.rows)


def _comparable_regions(image: bytes, config: GeometryConfig) -> bytes:
    """Image bytes minus the log region (scratch space post-recovery)."""
    layout = layout_for(config)
    bs = config.block_size
    return (
        image[: layout.log_start * bs]
        + image[(layout.log_start + layout.log_len) * bs :]
    )


def crash_sim(
    image: bytes,
    tpm: Tpm,
    ops: list[WorkloadOp],
    engine: HashEngine,
    random_subsets: int = 1,
    seed: int = 0,
) -> CrashReport:
    """Enumerate a crash at every device-write boundary of every op.

    Crash point n means: the op's first n device writes completed, then
    the machine died. The unsynced writes at that moment are
    materialized under several survival policies (drop all, keep all,
    seeded random subsets). Every recovered state must equal exactly
    the pre-op or post-op image outside the log region, pass a full
    audit, and carry the trusted root matching its classification.
    """
    config = image_config(image)
    rng = random.Random(seed)

    # Honest reference run: per-op-boundary image and trusted-root snapshots.
    honest_dev = memory_device_for(image, config)
    honest_tpm = tpm.clone()
    fs = FileSystem.mount(honest_dev, honest_tpm, engine)
    snaps = [(honest_dev.image_bytes(), honest_tpm.get_current(), honest_tpm.get_recover())]
    write_counts = []
    for op in ops:
        before = honest_dev.counters().writes
        apply_op(fs, op)
        write_counts.append(honest_dev.counters().writes - before)
        snaps.append(
            (honest_dev.image_bytes(), honest_tpm.get_current(), honest_tpm.get_recover())
        )

    report = CrashReport()
    for i, op in enumerate(ops):
        w = write_counts[i]
        if w == 0:
            continue
        pre_image, pre_root, pre_recover = snaps[i]
        post_root = snaps[i + 1][1]
        pre_cmp = _comparable_regions(pre_image, config)
        post_cmp = _comparable_regions(snaps[i + 1][0], config)
        for n in range(w + 1):
            for policy in ["drop-all", "keep-all"] + [
                f"random-{k}" for k in range(random_subsets)
            ]:
                row = _run_crash_point(
                    config=config,
                    engine=engine,
                    base_tpm=tpm,
                    pre_image=pre_image,
                    pre_root=pre_root,
                    pre_recover=pre_recover,
                    post_root=post_root,
                    pre_cmp=pre_cmp,
                    post_cmp=post_cmp,
                    op=op,
                    n=n,
                    policy=policy,
                    rng=rng,
                )
                row.op_index = i
                report.rows.append(row)
    return report


def _run_crash_point(
    config, engine, base_tpm, pre_image, pre_root, pre_recover, post_root,
    pre_cmp, post_cmp, op, n, policy, rng,
) -> CrashRow:
    dev = memory_device_for(pre_image, config)
    evil = EvilDisk(dev)
    run_tpm = Tpm(
        key=base_tpm.key,
        hash_sb=base_tpm.get_sb(),
        hash_current=pre_root,
        hash_recover=pre_recover,
    )
    row = CrashRow(
        op_index=-1, op=op.render(), write_index=n, policy=policy,
        outcome="?", classification="VIOLATION", tpm_root_used="?",
    )

    fs = FileSystem.mount(evil, run_tpm, engine)
    evil.schedule_crash(n)
    try:
        apply_op(fs, op)
    except SimulatedCrash:
        pass

    pending = dev.pending_addrs()
    if policy == "drop-all":
        keep = []
    elif policy == "keep-all":
        keep = pending
    else:
        keep = [a for a in pending if rng.random() < 0.5]
    dev.apply_crash(keep)

    try:
        fs2 = FileSystem.mount(dev, run_tpm, engine)
    except SentryError as e:
        row.outcome = "mount-failed"
        row.detail = f"{type(e).__name__}: {e}"
        return row
    row.outcome = fs2.mount_info.recovery.value

    recovered = _comparable_regions(dev.image_bytes(), config)
    if recovered == pre_cmp:
        row.classification = "pre-op"
        expected_root = pre_root
    elif recovered == post_cmp:
        row.classification = "post-op"
        expected_root = post_root
    else:
        row.detail = "recovered state is neither pre-op nor post-op"
        return row

    if fs2.mount_info.root != expected_root:
        row.classification = "VIOLATION"
        row.detail = "trusted root does not match the recovered state"
        return row
    row.tpm_root_used = "pre-root" if expected_root == pre_root else "post-root"

    audit = fs2.verify_full()
    if not audit.ok:
        row.classification = "VIOLATION"
        row.detail = f"audit failed: {audit.first_violation}"
    return row


# -- flaky-disk fuzzing ---------------------------------------------------------------


@dataclass
class FuzzResult:
    ops_run: int
    halted_at: int | None  # op index of the first integrity halt
    divergence: str | None  # oracle mismatch description, None if clean

    @property
    def clean(self) -> bool:
        return self.divergence is None


def _sync_model(fs: FileSystem, model: ModelFs, path: str = "/") -> None:
    for name in fs.readdir(path):
        if name in (".", ".."):
            continue
        child = path.rstrip("/") + "/" + name
        st = fs.stat(child)
        if st.kind == "dir":
            model.mkdir(child)
            _sync_model(fs, model, child)
        else:
            model.create(child)
            data = fs.read_file(child, 0, st.size)
            if data:
                model.write_file(child, 0, data)


def generate_fuzz_op(rng: random.Random, block_size: int) -> WorkloadOp:
    dirs = ["/", "/d0", "/d1"]
    name = f"f{rng.randrange(8)}"
    path = rng.choice(dirs).rstrip("/") + "/" + name
    roll = rng.random()
    if roll < 0.30:
        size = rng.randrange(1, 2 * block_size)
        offset = rng.randrange(0, 4 * block_size)
        return WorkloadOp("write", (path, offset, rng.randbytes(size)))
    if roll < 0.60:
        return WorkloadOp(
            "read", (path, rng.randrange(0, 4 * block_size), rng.randrange(1, 3 * block_size))
        )
    if roll < 0.75:
        return WorkloadOp("create", (path,))
    if roll < 0.82:
        return WorkloadOp("mkdir", (f"/d{rng.randrange(2)}",))
    if roll < 0.92:
        return WorkloadOp("unlink", (path,))
    return WorkloadOp("readdir", (rng.choice(dirs),))


def _results_match(op: WorkloadOp, real, model) -> bool:
    if op.op == "read":
        return real == model
    if op.op == "readdir":
        return sorted(real) == sorted(model)
    if op.op == "stat":
        if real.kind != model.kind:
            return False
        return real.kind == "dir" or real.size == model.size
    return True


def fuzz_run(
    image: bytes,
    tpm: Tpm,
    engine: HashEngine,
    p: float,
    seed: int,
    op_count: int,
) -> FuzzResult:
    """Random ops under a flaky disk, checked op-by-op against the model.

    The disk behaves until the model is synced from the starting image;
    then every device read returns garbage with probability p. The run
    ends at op_count or at the first integrity halt, whichever comes
    first. Any state the file system *returns* must match the model
    exactly — corrupted reads must surface as halts, never as data.

    The block cache is disabled for the fuzz mount: a warm unbounded
    cache would stop issuing device reads entirely and the flaky disk
    would never be exercised.
    """
    config = image_config(image)
    dev = memory_device_for(image, config)
    evil = EvilDisk(dev)
    fs = FileSystem.mount(evil, tpm.clone(), engine, cache_enabled=False)
    model = ModelFs(config.block_size)
    _sync_model(fs, model)

    evil.set_flaky(p, seed)
    op_rng = random.Random(f"fuzz-ops-{seed}")
    halted_at = None
    divergence = None
    ops_run = 0

    for i in range(op_count):
        op = generate_fuzz_op(op_rng, config.block_size)
        ops_run = i + 1
        try:
            real = apply_op(fs, op)
        except IntegrityFailure:
            halted_at = i
            break
        except NoSpace:
            continue  # the model is unbounded; state unchanged on either side
        except FsError as e:
            try:
                apply_op(model, op)
            except FsError as me:
                if type(me) is not type(e):
                    divergence = (
                        f"op {i} {op.render()}: error {type(e).__name__} "
                        f"vs model {type(me).__name__}"
                    )
                    break
                continue
            divergence = f"op {i} {op.render()}: real failed {type(e).__name__}, model succeeded"
            break
        try:
            expected = apply_op(model, op)
        except FsError as me:
            divergence = f"op {i} {op.render()}: real succeeded, model raised {type(me).__name__}"
            break
        if not _results_match(op, real, expected):
            divergence = f"op {i} {op.render()}: result differs from model"
            break

    return FuzzResult(ops_run=ops_run, halted_at=halted_at, divergence=divergence)


# -- operation accounting ---------------------------------------------------------------


@dataclass
class BenchRow:
    op_class: str
    count: int = 0
    reads: int = 0
    writes: int = 0
    syncs: int = 0
    hashes: int = 0


@dataclass
class BenchReport:
    rows: dict[str, BenchRow] = field(default_factory=dict)
    total_writes: int = 0
    baseline_writes: int = 0  # same workload with no Merkle maintenance
    logical_data_writes: int = 0  # distinct data blocks committed

    @property
    def write_amplification(self) -> float:
        if self.baseline_writes == 0:
            return 0.0
        return self.total_writes / self.baseline_writes

    def format_table(self) -> str:
        lines = [f"{'':>10}  {'Read':>8} {'Write':>8} {'Sync':>8} {'Hash':>8}"]
        for name, r in self.rows.items():
            lines.append(
                f"{name:>10}  {r.reads:>8} {r.writes:>8} {r.syncs:>8} {r.hashes:>8}"
            )
        lines.append(
            f"write amplification: {self.total_writes} device writes / "
            f"{self.baseline_writes} baseline = {self.write_amplification:.2f}x "
            f"({self.logical_data_writes} logical data-block writes)"
        )
        return "\n".join(lines)


def bench(fs: FileSystem, ops: list[WorkloadOp]) -> BenchReport:
    """Per-op-class Read/Write/Sync/Hash counts, plus write amplification
    relative to a hash-free baseline of the same commits."""
    report = BenchReport()
    dev = fs.device
    eng = fs.txlog.engine
    writes_at_start = dev.counters().writes
    stats_at_start = len(fs.txlog.commit_stats)
    for op in ops:
        before = dev.counters()
        hashes_before = eng.hash_counter()
        apply_op(fs, op)
        after = dev.counters()
        row = report.rows.setdefault(op.op, BenchRow(op.op))
        row.count += 1
        row.reads += after.reads - before.reads
        row.writes += after.writes - before.writes
        row.syncs += after.syncs - before.syncs
        row.hashes += eng.hash_counter() - hashes_before
    report.total_writes = dev.counters().writes - writes_at_start
    for st in fs.txlog.commit_stats[stats_at_start:]:
        report.baseline_writes += st.baseline_writes
        report.logical_data_writes += st.n_data
    return report

"""Command-line surface.

Exit codes partition outcomes so shell-level tests are unambiguous:
  0  success
  2  expected file-system errors (not found, exists, no space, bad geometry)
  3  integrity detections (digest mismatch, superblock or root mismatch)
  4  crash-sim / fuzz violations (a genuine bug, never expected)
  1  usage errors, malformed scripts, I/O trouble

`SENTRY_HASH_MODE={production|symbolic}` selects the hash
implementation; symbolic digests only cohere within one process, so
images written by one CLI invocation and read by another need the
default production mode.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .adversary import (
    EvilDisk,
    FileSnapshotStore,
    ScriptError,
    apply_attack_script,
    parse_attack_script,
)
from .blockdev import FileDisk
from .errors import (
    DeviceError,
    FsError,
    GeometryError,
    IntegrityError,
    SentryError,
)
from .fsys import FileSystem, open_image
from .geometry import GeometryConfig, layout_for
from .harness import (
    WorkloadError,
    bench,
    crash_sim,
    fuzz_run,
    parse_workload,
)
from .hashing import make_engine, new_key
from .merkle import MerkleTree, RootCommitment
from .tpm import Tpm
from .txlog import TxLog

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FS_ERROR = 2
EXIT_INTEGRITY = 3
EXIT_VIOLATION = 4


def _config_from_args(args) -> GeometryConfig:
    digest_size = 32
    block_size = args.block_size or args.fanout * digest_size
    return GeometryConfig(
        block_size=block_size,
        digest_size=digest_size,
        fanout=args.fanout,
        depth=args.depth,
        data_blocks=args.blocks,
        log_blocks=args.log_blocks,
    )


def _open(args, cache_enabled=True):
    device = open_image(args.image)
    tpm = Tpm.load(args.tpm)
    engine = make_engine(digest_size=tpm.digest_size)
    return device, tpm, engine


def _mount(args):
    device, tpm, engine = _open(args)
    return FileSystem.mount(device, tpm, engine)


def cmd_mkfs(args) -> int:
    config = _config_from_args(args)
    layout = layout_for(config)
    image = Path(args.image)
    if not image.exists():
        with open(image, "wb") as f:
            f.truncate(layout.total_blocks * config.block_size)
    device = FileDisk(image, layout.total_blocks, config.block_size)
    engine = make_engine(digest_size=config.digest_size)
    key = new_key(args.seed)
    FileSystem.mkfs(device, config, engine, key, tpm_path=args.tpm)
    device.close()
    print(
        f"formatted {args.image}: {layout.total_blocks} blocks of "
        f"{config.block_size} B (log {layout.log_len}, hash {layout.hash_len}, "
        f"data {layout.data_len}), fanout {config.fanout}, depth {config.depth}"
    )
    print(f"trusted store written to {args.tpm}")
    return EXIT_OK


def cmd_mount_check(args) -> int:
    fs = _mount(args)
    info = fs.mount_info
    which = "hashRecover" if info.used_recover_hash else "hashCurrent"
    print(f"mount ok: log recovery {info.recovery.value}, root matched {which}")
    fs.unmount()
    return EXIT_OK


def cmd_ls(args) -> int:
    fs = _mount(args)
    for name in fs.readdir(args.path):
        print(name)
    fs.unmount()
    return EXIT_OK


def cmd_cat(args) -> int:
    fs = _mount(args)
    st = fs.stat(args.path)
    data = fs.read_file(args.path, 0, st.size)
    sys.stdout.buffer.write(data)
    sys.stdout.buffer.flush()
    fs.unmount()
    return EXIT_OK


def cmd_write(args) -> int:
    fs = _mount(args)
    data = args.data.encode()
    try:
        fs.lookup(args.path)
    except FsError:
        fs.create(args.path)
    fs.write_file(args.path, 0, data)
    fs.unmount()
    print(f"wrote {len(data)} bytes to {args.path}")
    return EXIT_OK


def cmd_cp_in(args) -> int:
    data = Path(args.local).read_bytes()
    fs = _mount(args)
    try:
        fs.lookup(args.path)
    except FsError:
        fs.create(args.path)
    fs.write_file(args.path, 0, data)
    fs.unmount()
    print(f"copied {len(data)} bytes into {args.path}")
    return EXIT_OK


def cmd_cp_out(args) -> int:
    fs = _mount(args)
    st = fs.stat(args.path)
    data = fs.read_file(args.path, 0, st.size)
    fs.unmount()
    if args.local == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.flush()
    else:
        Path(args.local).write_bytes(data)
    return EXIT_OK


def cmd_rm(args) -> int:
    fs = _mount(args)
    fs.unlink(args.path)
    fs.unmount()
    return EXIT_OK


def cmd_mkdir(args) -> int:
    fs = _mount(args)
    fs.mkdir(args.path)
    fs.unmount()
    return EXIT_OK


def cmd_attack(args) -> int:
    text = Path(args.script).read_text()
    cmds = parse_attack_script(text)
    device = open_image(args.image)
    evil = EvilDisk(device)
    apply_attack_script(evil, cmds, FileSnapshotStore(args.image))
    device.sync()
    device.close()
    print(f"applied {len(cmds)} attack command(s) to {args.image}")
    return EXIT_OK


def cmd_crashsim(args) -> int:
    ops = parse_workload(Path(args.script).read_text())
    image = Path(args.image).read_bytes()
    tpm = Tpm.load(args.tpm)
    engine = make_engine(digest_size=tpm.digest_size)
    report = crash_sim(image, tpm, ops, engine, seed=args.seed)
    per_op: dict[int, list] = {}
    for row in report.rows:
        per_op.setdefault(row.op_index, []).append(row)
    for op_index, rows in sorted(per_op.items()):
        pre = sum(1 for r in rows if r.classification == "pre-op")
        post = sum(1 for r in rows if r.classification == "post-op")
        bad = sum(1 for r in rows if r.classification == "VIOLATION")
        print(
            f"op {op_index:>3} [{rows[0].op}]: {len(rows)} crash points, "
            f"{pre} pre-op, {post} post-op, {bad} violations"
        )
    for row in report.violations:
        print(
            f"VIOLATION op {row.op_index} write {row.write_index} "
            f"policy {row.policy}: {row.detail}"
        )
    print(
        f"total: {report.crash_points} crash points, "
        f"{len(report.violations)} violations"
    )
    return EXIT_VIOLATION if report.violations else EXIT_OK


def cmd_fuzz(args) -> int:
    image = Path(args.image).read_bytes()
    tpm = Tpm.load(args.tpm)
    engine = make_engine(digest_size=tpm.digest_size)
    result = fuzz_run(image, tpm, engine, p=args.p, seed=args.seed, op_count=args.ops)
    if result.divergence is not None:
        print(f"ORACLE DIVERGENCE: {result.divergence}")
        return EXIT_VIOLATION
    if result.halted_at is not None:
        print(
            f"halted at op {result.halted_at} on the first corrupted verified "
            f"read ({result.ops_run} ops run, p={args.p}, seed={args.seed})"
        )
    else:
        print(f"completed {result.ops_run} ops with no halt (p={args.p}, seed={args.seed})")
    return EXIT_OK


def cmd_bench(args) -> int:
    ops = parse_workload(Path(args.script).read_text())
    fs = _mount(args)
    report = bench(fs, ops)
    fs.unmount()
    print(report.format_table())
    return EXIT_OK


def cmd_audit(args) -> int:
    device, tpm, engine = _open(args)
    from .fsys import Superblock

    sb = Superblock.unpack(device.read(0))
    layout = layout_for(sb.config)
    txlog = TxLog(device, layout, sb.config, engine, tpm.key)
    tree = MerkleTree(txlog)
    report = tree.verify_full(RootCommitment(tpm.get_current()))
    which = "hashCurrent"
    if not report.ok and report.first_violation.startswith("ROOT-MISMATCH"):
        report = tree.verify_full(RootCommitment(tpm.get_recover()))
        which = "hashRecover"
    for line in report.lines:
        print(line)
    if report.ok:
        print(f"audit clean against {which}")
        return EXIT_OK
    return EXIT_INTEGRITY


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sentryfs",
        description="Merkle-protected crash-consistent block store and file system",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def io_args(p):
        p.add_argument("--image", required=True, help="disk image path")
        p.add_argument("--tpm", required=True, help="trusted store path")

    p = sub.add_parser("mkfs", help="format an image and provision the trusted store")
    io_args(p)
    p.add_argument("--fanout", type=int, default=8)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--blocks", type=int, default=64, help="data-region blocks")
    p.add_argument("--log-blocks", type=int, default=16)
    p.add_argument("--block-size", type=int, default=None,
                   help="defaults to fanout * 32")
    p.add_argument("--seed", type=int, default=None, help="deterministic HMAC key")
    p.set_defaults(func=cmd_mkfs)

    p = sub.add_parser("mount-check", help="mount, run recovery, verify roots")
    io_args(p)
    p.set_defaults(func=cmd_mount_check)

    p = sub.add_parser("ls", help="list a directory")
    io_args(p)
    p.add_argument("path", nargs="?", default="/")
    p.set_defaults(func=cmd_ls)

    p = sub.add_parser("cat", help="print file contents to stdout")
    io_args(p)
    p.add_argument("path")
    p.set_defaults(func=cmd_cat)

    p = sub.add_parser("write", help="write a literal string to a file")
    io_args(p)
    p.add_argument("path")
    p.add_argument("data")
    p.set_defaults(func=cmd_write)

    p = sub.add_parser("cp-in", help="copy a local file into the image")
    io_args(p)
    p.add_argument("local")
    p.add_argument("path")
    p.set_defaults(func=cmd_cp_in)

    p = sub.add_parser("cp-out", help="copy a file out of the image ('-' = stdout)")
    io_args(p)
    p.add_argument("path")
    p.add_argument("local")
    p.set_defaults(func=cmd_cp_out)

    p = sub.add_parser("rm", help="unlink a file or empty directory")
    io_args(p)
    p.add_argument("path")
    p.set_defaults(func=cmd_rm)

    p = sub.add_parser("mkdir", help="create a directory")
    io_args(p)
    p.add_argument("path")
    p.set_defaults(func=cmd_mkdir)

    p = sub.add_parser("attack", help="apply an attack script to an unmounted image")
    io_args(p)
    p.add_argument("--script", required=True)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("crashsim", help="enumerate crashes across a workload")
    io_args(p)
    p.add_argument("--script", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_crashsim)

    p = sub.add_parser("fuzz", help="random ops under a flaky disk vs the model")
    io_args(p)
    p.add_argument("--p", type=float, default=0.01, help="per-read corruption probability")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ops", type=int, default=1000)
    p.set_defaults(func=cmd_fuzz)

    p = sub.add_parser("bench", help="run a workload and print operation counts")
    io_args(p)
    p.add_argument("--script", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("audit", help="offline full-tree audit against the trusted roots")
    io_args(p)
    p.set_defaults(func=cmd_audit)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except IntegrityError as e:
        print(f"INTEGRITY: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTEGRITY
    except (FsError, DeviceError, GeometryError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FS_ERROR
    except (ScriptError, WorkloadError) as e:
        print(f"script error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (SentryError, OSError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_USAGE


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    raise SystemExit(main())

"""Trivially-correct in-memory file system.

The oracle for fuzzing, ghost traces, and crash classification: nested
dicts of names, byte strings for files. No disk, no geometry, no way to
be subtly wrong. Raises the same exception classes as the real thing so
error outcomes can be compared too (space exhaustion excepted — the
model has no notion of capacity).
"""

from __future__ import annotations

from .errors import Exists, FsError, NotADirectory, NotEmpty, NotFound
from .fsys import NUM_DIRECT, StatResult, _split_path


class ModelFs:
    def __init__(self, block_size: int):
        self.root: dict = {}
        self.max_file = NUM_DIRECT * block_size

    def _walk(self, parts: list[str]):
        node = self.root
        for comp in parts:
            if not isinstance(node, dict):
                raise NotADirectory(f"{comp!r} looked up under a non-directory")
            if comp == ".":
                continue
            if comp == "..":
                raise FsError("the model does not resolve '..'")
            if comp not in node:
                raise NotFound(f"component {comp!r} not found")
            node = node[comp]
        return node

    def _parent(self, path: str):
        parts = _split_path(path)
        if not parts:
            raise FsError("operation needs a non-root path")
        parent = self._walk(parts[:-1])
        if not isinstance(parent, dict):
            raise NotADirectory(f"parent of {path!r} is not a directory")
        return parent, parts[-1]

    def create(self, path: str) -> None:
        parent, name = self._parent(path)
        if name in parent:
            raise Exists(f"{path!r} already exists")
        parent[name] = b""

    def mkdir(self, path: str) -> None:
        parent, name = self._parent(path)
        if name in parent:
            raise Exists(f"{path!r} already exists")
        parent[name] = {}

    def unlink(self, path: str) -> None:
        parent, name = self._parent(path)
        if name not in parent:
            raise NotFound(f"{path!r} not found")
        node = parent[name]
        if isinstance(node, dict) and node:
            raise NotEmpty(f"{path!r} is not empty")
        del parent[name]

    def exists(self, path: str) -> bool:
        try:
            self._walk(_split_path(path))
            return True
        except (NotFound, NotADirectory):
            return False

    def readdir(self, path: str) -> list[str]:
        node = self._walk(_split_path(path))
        if not isinstance(node, dict):
            raise NotADirectory(f"{path!r} is not a directory")
        return [".", ".."] + sorted(node)

    def stat(self, path: str) -> StatResult:
        node = self._walk(_split_path(path))
        if isinstance(node, dict):
            return StatResult(inum=-1, kind="dir", size=-1)
        return StatResult(inum=-1, kind="file", size=len(node))

    def write_file(self, path: str, offset: int, data: bytes) -> int:
        parent, name = self._parent(path)
        if name not in parent:
            raise NotFound(f"{path!r} not found")
        cur = parent[name]
        if isinstance(cur, dict):
            raise FsError(f"{path!r} is not a regular file")
        if offset + len(data) > self.max_file:
            raise FsError("file too large")
        if not data:
            return 0
        if len(cur) < offset:
            cur = cur + bytes(offset - len(cur))
        parent[name] = cur[:offset] + data + cur[offset + len(data) :]
        return len(data)

    def read_file(self, path: str, offset: int, length: int) -> bytes:
        node = self._walk(_split_path(path))
        if isinstance(node, dict):
            raise FsError(f"{path!r} is not a regular file")
        return node[offset : offset + length]

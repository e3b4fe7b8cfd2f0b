"""Run manifests and lock-protected run directories."""

from __future__ import annotations

import contextlib
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator

from filelock import FileLock, Timeout

from .. import __version__
from ..corpus import atomic_write_text

RUN_DIR_ENV = "DOCNMT_RUN_DIR"


class RunDirBusy(RuntimeError):
    pass


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    argv: list[str]
    config: dict
    inputs: dict[str, str] = field(default_factory=dict)  # path -> sha256
    checkpoints: dict[str, str] = field(default_factory=dict)
    seed: int | None = None
    version: str = __version__

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "RunManifest":
        return cls(**obj)

    def save(self, run_dir) -> Path:
        path = Path(run_dir) / f"manifest-{self.command}.json"
        atomic_write_text(path, json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "RunManifest":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def default_run_dir() -> str | None:
    return os.environ.get(RUN_DIR_ENV) or None


@contextlib.contextmanager
def locked_run_dir(run_dir) -> Iterator[Path]:
    """Hold the run directory's lock for the duration of one command."""
    d = Path(run_dir)
    d.mkdir(parents=True, exist_ok=True)
    lock = FileLock(str(d / ".lock"))
    try:
        lock.acquire(timeout=0)
    except Timeout:
        raise RunDirBusy(f"run directory {d} is in use by another process") from None
    try:
        yield d
    finally:
        lock.release()

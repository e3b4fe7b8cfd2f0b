"""Binary checkpoint format.

Layout: ``b"DNMT1"``, one version byte, a little-endian uint32 header length,
the UTF-8 JSON header (config, vocab hash, parameter manifest), then the
parameters as little-endian float32 arrays in manifest order.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from ..numkernel import default_dtype
from .config import ModelConfig
from .contextlm import ContextLM, ContextLMConfig
from .model import DocTransformer

MAGIC = b"DNMT1"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _manifest(params: dict) -> list[dict]:
    return [{"name": n, "shape": list(p.data.shape)} for n, p in params.items()]


def write_checkpoint(path, header: dict, arrays: list[np.ndarray]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(bytes([VERSION]))
            fh.write(struct.pack("<I", len(head)))
            fh.write(head)
            for a in arrays:
                fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:5] != MAGIC:
        raise CheckpointError(f"{path}: not a DNMT1 checkpoint")
    if raw[5] != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {raw[5]}")
    (n,) = struct.unpack("<I", raw[6:10])
    header = json.loads(raw[10:10 + n].decode("utf-8"))
    offset = 10 + n
    arrays: dict[str, np.ndarray] = {}
    for entry in header["manifest"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) if shape else 1
        nbytes = 4 * size
        if offset + nbytes > len(raw):
            raise CheckpointError(f"{path}: truncated at parameter {entry['name']}")
        arrays[entry["name"]] = np.frombuffer(raw, dtype="<f4", count=size, offset=offset).reshape(shape)
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes")
    return header, arrays


def save_model(model: DocTransformer, path, vocab_hash: str = "", extra: dict | None = None) -> None:
    params = dict(model.params)
    header = {
        "kind": "nmt",
        "config": model.config.to_dict(),
        "vocab_hash": vocab_hash,
        "extra": extra or {},
    }
    if model.ctxlm is not None:
        header["ctxlm_config"] = model.ctxlm.config.to_dict()
        for n, p in model.ctxlm.params.items():
            params[f"ctxlm.{n}"] = p
    header["manifest"] = _manifest(params)
    write_checkpoint(path, header, [p.data for p in params.values()])


def _assign(params: dict, arrays: dict[str, np.ndarray], prefix: str = "") -> None:
    dtype = default_dtype()
    for n, p in params.items():
        p.assign(arrays[prefix + n].astype(dtype))


def load_model(path) -> tuple[DocTransformer, dict]:
    header, arrays = read_checkpoint(path)
    if header.get("kind") != "nmt":
        raise CheckpointError(f"{path}: not an NMT checkpoint")
    config = ModelConfig.from_dict(header["config"])
    ctxlm = None
    if "ctxlm_config" in header:
        ctxlm = ContextLM(ContextLMConfig.from_dict(header["ctxlm_config"]))
        _assign(ctxlm.params, arrays, "ctxlm.")
    model = DocTransformer(config, ctxlm=ctxlm)
    expected = {n: list(p.data.shape) for n, p in model.params.items()}
    found = {e["name"]: e["shape"] for e in header["manifest"] if not e["name"].startswith("ctxlm.")}
    if expected != found:
        bad = sorted(set(expected) ^ set(found)) + sorted(
            n for n in set(expected) & set(found) if expected[n] != found[n]
        )
        raise CheckpointError(f"{path}: manifest does not match config: {bad}")
    _assign(model.params, arrays)
    return model, header


def save_contextlm(model: ContextLM, path, vocab_hash: str = "") -> None:
    header = {
        "kind": "contextlm",
        "config": model.config.to_dict(),
        "vocab_hash": vocab_hash,
        "manifest": _manifest(model.params),
    }
    write_checkpoint(path, header, [p.data for p in model.params.values()])


def load_contextlm(path) -> ContextLM:
    header, arrays = read_checkpoint(path)
    if header.get("kind") != "contextlm":
        raise CheckpointError(f"{path}: not a context LM checkpoint")
    model = ContextLM(ContextLMConfig.from_dict(header["config"]))
    _assign(model.params, arrays)
    return model

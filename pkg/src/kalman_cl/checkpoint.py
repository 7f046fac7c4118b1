"""Binary checkpoints of a task sequence in progress.

Layout (all integers little-endian)::

    magic     4 bytes   b"KCLC"
    version   u16       FORMAT_VERSION
    count     u16       number of sections
    sections  count x { tag: 4 ASCII bytes, length: u64, payload }
    crc32     u32       zlib.crc32 of every preceding byte

Sections, in order: ``META`` (UTF-8 JSON, sorted keys), then ``THTA``,
``UNCP``, ``IMPT``, ``FSTR`` holding theta, P, merged importance and the
thresholded gate as raw IEEE-754 float64. Writing is atomic: the file is
written next to its destination and renamed into place.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ShapeError, VersionError
from .kalman import KalmanState
from .network import NetworkParams, param_count

MAGIC = b"KCLC"
FORMAT_VERSION = 1
_VECTORS = (("THTA", "theta"), ("UNCP", "P"), ("IMPT", "importance"), ("FSTR", "f_star"))


@dataclass
class Checkpoint:
    layer_dims: tuple[int, ...]
    state: KalmanState
    tasks_completed: int
    seed: int
    meta: dict = field(default_factory=dict)

    @property
    def params(self) -> NetworkParams:
        return NetworkParams(self.layer_dims, self.state.theta.copy())


def encode(ckpt: Checkpoint) -> bytes:
    if ckpt.state.theta.size != param_count(ckpt.layer_dims):
        raise ShapeError("checkpoint state does not match its architecture")
    header = {
        "layer_dims": list(ckpt.layer_dims),
        "tasks_completed": ckpt.tasks_completed,
        "seed": ckpt.seed,
        "learning_rate": ckpt.state.learning_rate,
        "xi": ckpt.state.xi,
        "consolidated": ckpt.state.consolidated,
        "meta": ckpt.meta,
    }
    sections = [(b"META", json.dumps(header, sort_keys=True, separators=(",", ":")).encode())]
    for tag, name in _VECTORS:
        sections.append((tag.encode(), np.asarray(getattr(ckpt.state, name), dtype="<f8").tobytes()))
    out = bytearray(MAGIC + struct.pack("<HH", FORMAT_VERSION, len(sections)))
    for tag, payload in sections:
        out += tag + struct.pack("<Q", len(payload)) + payload
    out += struct.pack("<I", zlib.crc32(out))
    return bytes(out)


def decode(blob: bytes) -> Checkpoint:
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise FormatError("not a checkpoint file (bad magic)")
    version, count = struct.unpack_from("<HH", blob, 4)
    if version != FORMAT_VERSION:
        raise VersionError(f"checkpoint format version {version}, this build reads {FORMAT_VERSION}")
    (crc,) = struct.unpack_from("<I", blob, len(blob) - 4)
    if zlib.crc32(blob[:-4]) != crc:
        raise FormatError("checkpoint checksum mismatch")
    sections: dict[str, bytes] = {}
    pos, end = 8, len(blob) - 4
    for _ in range(count):
        if pos + 12 > end:
            raise FormatError("truncated section header")
        tag = blob[pos:pos + 4].decode("ascii", "replace")
        (length,) = struct.unpack_from("<Q", blob, pos + 4)
        pos += 12
        if pos + length > end:
            raise FormatError(f"section {tag} overruns the file")
        sections[tag] = blob[pos:pos + length]
        pos += length
    if pos != end:
        raise FormatError("trailing bytes after the last section")
    missing = {"META", *(t for t, _ in _VECTORS)} - sections.keys()
    if missing:
        raise FormatError(f"missing sections: {sorted(missing)}")

    try:
        header = json.loads(sections["META"].decode())
        n = param_count(header["layer_dims"])
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"bad META section: {exc}") from exc
    vectors = {}
    for tag, name in _VECTORS:
        if len(sections[tag]) != 8 * n:
            raise FormatError(f"section {tag} holds {len(sections[tag])} bytes, expected {8 * n}")
        vectors[name] = np.frombuffer(sections[tag], dtype="<f8").astype(np.float64)
    state = KalmanState(
        **vectors,
        learning_rate=header["learning_rate"],
        xi=header["xi"],
        consolidated=header["consolidated"],
    )
    return Checkpoint(tuple(header["layer_dims"]), state, header["tasks_completed"], header["seed"], header["meta"])


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    path = Path(path)
    blob = encode(ckpt)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def load_checkpoint(path: str | Path) -> Checkpoint:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return decode(blob)

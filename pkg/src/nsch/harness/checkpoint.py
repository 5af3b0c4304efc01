"""
Lossless binary checkpoints.

Layout (all integers little-endian)::

    8 bytes   magic  b"NSCHCKP1"
    8 bytes   u64    header length H
    H bytes   UTF-8 JSON header (grid, shape, t, step, run metadata)
    N bytes   float64 samples, little-endian: ρ, m_1..m_d, c in C order
    32 bytes  SHA-256 of everything above

Any mismatch (magic, lengths, checksum, shape) raises CheckpointError before
a state is constructed, so a truncated file never yields a partial state.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

from ..errors import CheckpointError
from ..model import State
from ..spectral import Field, VectorField, make_grid

__all__ = ["save_checkpoint", "load_checkpoint", "MAGIC"]

MAGIC = b"NSCHCKP1"
_DIGEST = 32


def save_checkpoint(path: str | os.PathLike, state: State, meta: dict | None = None) -> Path:
    """Write ``state`` plus JSON-serializable ``meta`` atomically to ``path``."""
    g = state.grid
    header = {
        "grid": {"dim": g.dim, "n": g.n},
        "shape": list(g.shape),
        "ncomp": g.dim + 2,
        "dtype": "<f8",
        "t": state.t,
        "meta": meta or {},
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    stack = np.stack([state.rho.values, *state.mom.values, state.c.values]).astype("<f8", copy=False)
    body = MAGIC + struct.pack("<Q", len(hbytes)) + hbytes + np.ascontiguousarray(stack).tobytes()
    blob = body + hashlib.sha256(body).digest()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(blob)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
    return path


def load_checkpoint(path: str | os.PathLike) -> tuple[State, dict]:
    """Read a checkpoint; returns ``(state, meta)``."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    if len(blob) < len(MAGIC) + 8 + _DIGEST or blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic or too short)")
    body, digest = blob[:-_DIGEST], blob[-_DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"{path}: checksum mismatch (truncated or corrupted)")
    (hlen,) = struct.unpack("<Q", body[len(MAGIC) : len(MAGIC) + 8])
    start = len(MAGIC) + 8
    try:
        header = json.loads(body[start : start + hlen].decode("utf-8"))
        dim, n = int(header["grid"]["dim"]), int(header["grid"]["n"])
        grid = make_grid(dim, n)
        ncomp = int(header["ncomp"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: malformed header ({exc})") from None
    if list(grid.shape) != header.get("shape") or ncomp != dim + 2:
        raise CheckpointError(f"{path}: header shape inconsistent with grid")
    data = body[start + hlen :]
    expected = ncomp * int(np.prod(grid.shape)) * 8
    if len(data) != expected:
        raise CheckpointError(f"{path}: payload has {len(data)} bytes, expected {expected}")
    arr = np.frombuffer(data, dtype="<f8").reshape((ncomp, *grid.shape)).astype(float)
    try:
        state = State(
            float(header["t"]),
            Field(grid, arr[0]),
            VectorField([Field(grid, arr[1 + i]) for i in range(dim)]),
            Field(grid, arr[-1]),
        )
    except ValueError as exc:
        raise CheckpointError(f"{path}: invalid state ({exc})") from None
    return state, header["meta"]

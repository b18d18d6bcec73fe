from __future__ import annotations

"""
src/lbsdc/modules/snapshot.py

Field snapshot format (.lbfield):

    LBFIELD 1\n
    d N L_1 ... L_d\n          (decimal, lengths written with repr)
    N^d little-endian float64 values, last axis fastest
"""

from pathlib import Path

import numpy as np

from ..core.errors import FormatError, GridError, TruncatedPayload
from ..core.log_manager import log_mgr
from .spectral import Grid, ScalarField

MAGIC = b"LBFIELD 1"
PAYLOAD_DTYPE = np.dtype("<f8")


def write_field(field: ScalarField, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    grid = field.grid
    dims = " ".join([str(grid.d), str(grid.n)] + [repr(L) for L in grid.lengths])
    payload = np.ascontiguousarray(field.values, dtype=PAYLOAD_DTYPE)
    with path.open("wb") as f:
        f.write(MAGIC + b"\n")
        f.write(dims.encode("ascii") + b"\n")
        f.write(payload.tobytes(order="C"))
    log_mgr.log("snapshot", f"wrote {path.name}", extra={"d": grid.d, "n": grid.n})
    return path


def _header_line(raw: bytes, start: int, what: str) -> tuple[bytes, int]:
    end = raw.find(b"\n", start)
    if end < 0:
        raise FormatError(f"missing {what} line")
    return raw[start:end], end + 1


def read_field(path: Path) -> ScalarField:
    raw = Path(path).read_bytes()

    magic, pos = _header_line(raw, 0, "magic")
    if magic.strip() != MAGIC:
        raise FormatError(f"bad magic {magic[:16]!r}")

    dims, pos = _header_line(raw, pos, "dimension")
    parts = dims.decode("ascii", errors="replace").split()
    try:
        d, n = int(parts[0]), int(parts[1])
        lengths = tuple(float(x) for x in parts[2:])
    except (IndexError, ValueError) as e:
        raise FormatError(f"bad dimension line {dims!r}") from e
    if len(lengths) != d:
        raise FormatError(f"dimension line lists {len(lengths)} lengths for d={d}")
    try:
        grid = Grid(d, lengths, n)
    except GridError as e:
        raise FormatError(f"invalid grid in header: {e}") from e

    expected = grid.size * PAYLOAD_DTYPE.itemsize
    payload = raw[pos:]
    if len(payload) < expected:
        raise TruncatedPayload(f"payload has {len(payload)} bytes, expected {expected}")
    if len(payload) > expected:
        raise FormatError(f"{len(payload) - expected} trailing bytes after payload")

    values = np.frombuffer(payload, dtype=PAYLOAD_DTYPE).astype(np.float64).reshape(grid.shape)
    try:
        return ScalarField(grid, values)
    except GridError as e:
        raise FormatError(str(e)) from e

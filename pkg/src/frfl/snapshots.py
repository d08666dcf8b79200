"""Binary field snapshots.

Layout (all little-endian):
    magic   4 bytes  b"FRFL"
    version u32
    d       u32
    n       u32      points per axis
    L       f64      box length
    namelen u32
    name    namelen bytes, UTF-8
    samples n^d f64, row-major
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .spectral import Grid, ScalarField, VectorField, make_grid

MAGIC = b"FRFL"
VERSION = 1

__all__ = ["MAGIC", "VERSION", "write_snapshot", "read_snapshot", "write_state_fields", "read_vector"]


def write_snapshot(path: str | Path, field: ScalarField, name: str) -> None:
    grid = field.grid
    encoded = name.encode("utf-8")
    header = MAGIC + struct.pack(
        "<IIIdI", VERSION, grid.d, grid.n, grid.box_length, len(encoded)
    )
    payload = np.ascontiguousarray(field.values, dtype="<f8").tobytes()
    Path(path).write_bytes(header + encoded + payload)


def read_snapshot(path: str | Path) -> tuple[ScalarField, str]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ConfigurationError(f"{path}: not a field snapshot (bad magic {raw[:4]!r})")
    version, d, n, box_length, namelen = struct.unpack_from("<IIIdI", raw, 4)
    if version != VERSION:
        raise ConfigurationError(f"{path}: unsupported snapshot version {version}")
    offset = 4 + struct.calcsize("<IIIdI")
    name = raw[offset : offset + namelen].decode("utf-8")
    offset += namelen
    count = n**d
    samples = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
    grid = make_grid(d, n, box_length)
    return ScalarField.from_values(grid, samples.reshape(grid.shape)), name


def write_state_fields(directory: str | Path, sigma: ScalarField, u: VectorField, prefix: str = "") -> list[Path]:
    """One snapshot file per field: <prefix>sigma.snap, <prefix>u0.snap, ..."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    target = directory / f"{prefix}sigma.snap"
    write_snapshot(target, sigma, "sigma")
    written.append(target)
    for i, comp in enumerate(u.components):
        target = directory / f"{prefix}u{i}.snap"
        write_snapshot(target, comp, f"u{i}")
        written.append(target)
    return written


def read_vector(paths: list[str | Path]) -> VectorField:
    comps = []
    for p in paths:
        field, _ = read_snapshot(p)
        comps.append(field)
    return VectorField(comps)

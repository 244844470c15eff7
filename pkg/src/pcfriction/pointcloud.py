"""Point cloud container, readers, zero-origin normalization and tiling.

Clouds are stored as an ``(N, 3)`` float64 array of x, y, z in meters.
Arrays held by a :class:`PointCloud` are flagged read-only so a cloud can be
shared between threads without copying.
"""
from __future__ import annotations

import math
import re
import struct
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import (
    ArgumentError,
    EmptyInputError,
    FormatError,
    ParseError,
    UnsupportedFormatError,
)

SOURCES = ("handheld-scan", "bed-profiler", "airborne-lidar", "synthetic")


@dataclass(frozen=True)
class PointCloud:
    xyz: np.ndarray
    crs_tag: Optional[str] = None
    source: str = "synthetic"

    def __post_init__(self):
        xyz = np.array(self.xyz, dtype=np.float64, copy=True).reshape(-1, 3)
        if not np.all(np.isfinite(xyz)):
            raise ArgumentError("point coordinates must be finite")
        if self.source not in SOURCES:
            raise ArgumentError(f"unknown cloud source {self.source!r}")
        xyz.flags.writeable = False
        object.__setattr__(self, "xyz", xyz)

    def __len__(self):
        return self.xyz.shape[0]

    @property
    def points(self):
        """Points as a list of ``(x, y, z)`` tuples."""
        return [tuple(p) for p in self.xyz.tolist()]

    def bounds(self):
        """Return ``(xmin, ymin, zmin), (xmax, ymax, zmax)``."""
        if len(self) == 0:
            raise EmptyInputError("empty cloud has no bounds")
        return self.xyz.min(axis=0), self.xyz.max(axis=0)

    def density(self):
        """Points per square meter of the x/y bounding rectangle."""
        lo, hi = self.bounds()
        area = float((hi[0] - lo[0]) * (hi[1] - lo[1]))
        if area <= 0:
            raise ArgumentError("bounding rectangle has zero area")
        return len(self) / area

    def with_xyz(self, xyz):
        return PointCloud(xyz, crs_tag=self.crs_tag, source=self.source)


@dataclass(frozen=True, order=True)
class TileIndex:
    col: int
    row: int
    cell_size: float = field(default=1.0, compare=False)

    def __post_init__(self):
        if not self.cell_size > 0:
            raise ArgumentError("cell_size must be positive")


_SPLIT = re.compile(r"[,\s]+")


def parse_ascii_xyz(data, source="synthetic", crs_tag=None) -> PointCloud:
    """Parse whitespace- or comma-delimited XYZ text.

    Columns beyond the third are ignored. Blank lines and lines starting
    with ``#`` are skipped; any other row with fewer than three numeric
    tokens raises :class:`ParseError` carrying its 1-based line number.
    """
    if isinstance(data, (bytes, bytearray)):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"not UTF-8 text: {exc}") from None
    rows = []
    for lineno, line in enumerate(data.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        tokens = [t for t in _SPLIT.split(line) if t]
        if len(tokens) < 3:
            raise ParseError(f"expected at least 3 columns, got {len(tokens)}", line=lineno)
        try:
            xyz = tuple(float(t) for t in tokens[:3])
        except ValueError:
            bad = next(t for t in tokens[:3] if not _is_float(t))
            raise ParseError(f"malformed numeric token {bad!r}", line=lineno) from None
        if not all(math.isfinite(v) for v in xyz):
            raise ParseError("non-finite coordinate", line=lineno)
        rows.append(xyz)
    if not rows:
        raise EmptyInputError("no valid XYZ rows")
    return PointCloud(np.array(rows), crs_tag=crs_tag, source=source)


def _is_float(token):
    try:
        float(token)
    except ValueError:
        return False
    return True


def write_ascii_xyz(cloud: PointCloud) -> bytes:
    """Serialize with ``repr`` precision so that parsing round-trips exactly."""
    return "".join(f"{x!r} {y!r} {z!r}\n" for x, y, z in cloud.xyz.tolist()).encode()


# LAS public header block; offsets are identical for versions 1.2 to 1.4.
_LAS_MAGIC = b"LASF"
_LAS_HEADER_12 = 227
_LAS_RECORD_LEN = {0: 20, 1: 28, 2: 26, 3: 34}


def parse_las_minimal(data: bytes, crs_tag=None) -> PointCloud:
    """Read x/y/z from an uncompressed LAS 1.2-1.4 file, point formats 0-3.

    Coordinates are rebuilt as ``raw_int * scale + offset`` per axis.
    """
    data = bytes(data)
    if len(data) < 4 or data[:4] != _LAS_MAGIC:
        raise FormatError("bad magic bytes, not a LAS file")
    if len(data) < _LAS_HEADER_12:
        raise FormatError(f"truncated LAS header ({len(data)} bytes)")
    major, minor = data[24], data[25]
    if major != 1 or not 2 <= minor <= 4:
        raise FormatError(f"unsupported LAS version {major}.{minor}")
    header_size, point_offset = struct.unpack_from("<HI", data, 94)
    fmt_byte, record_len, legacy_count = struct.unpack_from("<BHI", data, 104)
    if fmt_byte & 0xC0:
        # high bits flag LAZ compression
        raise UnsupportedFormatError(fmt_byte)
    fmt = fmt_byte & 0x3F
    if fmt not in _LAS_RECORD_LEN:
        raise UnsupportedFormatError(fmt)
    if record_len < _LAS_RECORD_LEN[fmt]:
        raise FormatError(f"record length {record_len} too short for format {fmt}")
    scale = np.array(struct.unpack_from("<3d", data, 131))
    offset = np.array(struct.unpack_from("<3d", data, 155))
    count = legacy_count
    if minor == 4 and header_size >= 375:
        (count64,) = struct.unpack_from("<Q", data, 247)
        count = count64 or legacy_count
    if count == 0:
        raise EmptyInputError("LAS file holds zero points")
    end = point_offset + count * record_len
    if end > len(data):
        raise FormatError(
            f"point block needs {end} bytes but file has {len(data)}"
        )
    dtype = np.dtype({"names": ["X", "Y", "Z"], "formats": ["<i4"] * 3,
                      "offsets": [0, 4, 8], "itemsize": record_len})
    rec = np.frombuffer(data, dtype=dtype, count=count, offset=point_offset)
    raw = np.stack([rec["X"], rec["Y"], rec["Z"]], axis=1).astype(np.float64)
    return PointCloud(raw * scale + offset, crs_tag=crs_tag, source="airborne-lidar")


def write_las(cloud: PointCloud, scale=(0.001, 0.001, 0.001), offset=None) -> bytes:
    """Write a LAS 1.2, point format 0 file holding only x/y/z.

    ``offset`` defaults to the per-axis minimum rounded down to a whole
    scale step, which keeps the stored integers small.
    """
    if len(cloud) == 0:
        raise EmptyInputError("cannot write an empty cloud")
    scale = np.asarray(scale, dtype=np.float64)
    if offset is None:
        offset = np.floor(cloud.xyz.min(axis=0) / scale) * scale
    offset = np.asarray(offset, dtype=np.float64)
    ints = np.round((cloud.xyz - offset) / scale)
    if np.any(np.abs(ints) > 2**31 - 1):
        raise ArgumentError("coordinates overflow int32 at this scale")
    ints = ints.astype("<i4")
    n = len(cloud)

    header = bytearray(_LAS_HEADER_12)
    header[0:4] = _LAS_MAGIC
    header[24], header[25] = 1, 2
    header[26:58] = b"pcfriction".ljust(32, b"\0")
    header[58:90] = b"pcfriction".ljust(32, b"\0")
    struct.pack_into("<HIIBHI", header, 94, _LAS_HEADER_12, _LAS_HEADER_12, 0, 0, 20, n)
    struct.pack_into("<5I", header, 111, n, 0, 0, 0, 0)
    struct.pack_into("<3d", header, 131, *scale)
    struct.pack_into("<3d", header, 155, *offset)
    lo, hi = cloud.xyz.min(axis=0), cloud.xyz.max(axis=0)
    struct.pack_into("<6d", header, 179, hi[0], lo[0], hi[1], lo[1], hi[2], lo[2])

    records = np.zeros(n, dtype=np.dtype([("xyz", "<i4", 3), ("rest", "V8")]))
    records["xyz"] = ints
    return bytes(header) + records.tobytes()


def read_cloud(path, source=None) -> PointCloud:
    """Dispatch on the file's magic bytes: LAS if it starts with ``LASF``, else XYZ text."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] == _LAS_MAGIC:
        return parse_las_minimal(data)
    return parse_ascii_xyz(data, source=source or "synthetic")


def normalize_zero_origin(cloud: PointCloud) -> PointCloud:
    """Translate so each axis minimum is exactly zero. No scaling."""
    if len(cloud) == 0:
        raise EmptyInputError("cannot normalize an empty cloud")
    return cloud.with_xyz(zero_origin(cloud.xyz))


def zero_origin(xyz: np.ndarray) -> np.ndarray:
    """Array form of :func:`normalize_zero_origin`."""
    xyz = np.asarray(xyz, dtype=np.float64)
    return xyz - xyz.min(axis=0)


def tile_keys(xyz, cell_size, origin):
    """Column and row of every point; lower-left-closed cells."""
    xyz = np.asarray(xyz, dtype=np.float64)
    cols = np.floor((xyz[:, 0] - origin[0]) / cell_size).astype(np.int64)
    rows = np.floor((xyz[:, 1] - origin[1]) / cell_size).astype(np.int64)
    return cols, rows


def tile_cloud(cloud: PointCloud, cell_size=1.0,
               origin: Optional[Tuple[float, float]] = None) -> Dict[TileIndex, PointCloud]:
    """Partition a cloud into square tiles of side ``cell_size``.

    ``origin`` defaults to the cloud's x/y minimum. Only tiles that receive
    at least one point are returned; each tile keeps its points in input
    order.
    """
    if not cell_size > 0:
        raise ArgumentError("cell_size must be positive")
    if len(cloud) == 0:
        return {}
    if origin is None:
        lo, _ = cloud.bounds()
        origin = (float(lo[0]), float(lo[1]))
    cols, rows = tile_keys(cloud.xyz, cell_size, origin)
    keys = np.stack([cols, rows], axis=1)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    order = np.argsort(inverse, kind="stable")
    bounds = np.searchsorted(inverse[order], np.arange(len(uniq) + 1))
    tiles = {}
    for i, (c, r) in enumerate(uniq.tolist()):
        idx = order[bounds[i]:bounds[i + 1]]
        tiles[TileIndex(c, r, cell_size)] = cloud.with_xyz(cloud.xyz[idx])
    return tiles

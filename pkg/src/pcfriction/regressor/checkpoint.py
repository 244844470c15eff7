"""Binary checkpoint files.

Layout (all integers little-endian)::

    magic        8 bytes   b"PCFNET\\x00\\x01"
    version      u16
    config_len   u32, then config_len bytes of UTF-8 JSON (NetConfig)
    n_params     u64
    params       n_params floats (<f4 or <f8, per config dtype)
    norm stats   per encoder layer: mean then var, width floats each
    step_count   u64
    adam m, v    n_params floats each
    crc32        u32 over every preceding byte
"""
from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from ..errors import CheckpointCorruptError, CheckpointVersionError
from .net import NetConfig, RegressionNet

MAGIC = b"PCFNET\x00\x01"
FORMAT_VERSION = 1


def dumps(net: RegressionNet) -> bytes:
    dt = np.dtype(net.dtype).newbyteorder("<")
    cfg = json.dumps(net.config.to_dict(), sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<HI", FORMAT_VERSION, len(cfg)), cfg,
             struct.pack("<Q", net.n_params), net.params.astype(dt).tobytes()]
    for mean, var in net.norm_stats:
        parts += [mean.astype(dt).tobytes(), var.astype(dt).tobytes()]
    parts += [struct.pack("<Q", net.step_count),
              net.adam_m.astype(dt).tobytes(), net.adam_v.astype(dt).tobytes()]
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise CheckpointCorruptError(f"truncated while reading {what}", offset=self.pos)
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def array(self, dtype, count, what):
        return np.frombuffer(self.take(dtype.itemsize * count, what), dtype=dtype).astype(
            dtype.newbyteorder("="))


def loads(data: bytes, expected_config: NetConfig = None) -> RegressionNet:
    r = _Reader(bytes(data))
    if r.take(len(MAGIC), "magic") != MAGIC:
        raise CheckpointCorruptError("bad magic bytes", offset=0)
    version, cfg_len = r.unpack("<HI", "header")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint format version {version}, this build reads {FORMAT_VERSION}")
    try:
        config = NetConfig.from_dict(json.loads(r.take(cfg_len, "config").decode()))
    except (ValueError, TypeError) as exc:
        raise CheckpointCorruptError(f"unreadable config block: {exc}", offset=len(MAGIC) + 6)
    if expected_config is not None and config != expected_config:
        raise CheckpointVersionError(
            f"checkpoint config {config.to_dict()} does not match expected {expected_config.to_dict()}")
    dt = np.dtype(config.dtype).newbyteorder("<")
    (n_params,) = r.unpack("<Q", "parameter count")
    params = r.array(dt, n_params, "parameters")
    stats = []
    for w in config.encoder_widths[1:]:
        stats.append((r.array(dt, w, "norm stats"), r.array(dt, w, "norm stats")))
    (step,) = r.unpack("<Q", "step counter")
    m = r.array(dt, n_params, "optimizer state")
    v = r.array(dt, n_params, "optimizer state")
    crc_at = r.pos
    (crc,) = r.unpack("<I", "checksum")
    if r.pos != len(r.data):
        raise CheckpointCorruptError("trailing bytes after checksum", offset=r.pos)
    if zlib.crc32(r.data[:crc_at]) != crc:
        raise CheckpointCorruptError("checksum mismatch", offset=crc_at)
    return RegressionNet(config, params, stats, step, m, v)


def save_checkpoint(net: RegressionNet, path) -> None:
    Path(path).write_bytes(dumps(net))


def load_checkpoint(path, expected_config: NetConfig = None) -> RegressionNet:
    return loads(Path(path).read_bytes(), expected_config=expected_config)

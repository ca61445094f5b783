"""Binary trace and checkpoint files.

Layout (all integers unsigned 32-bit little endian, floats IEEE binary64
little endian)::

    "GSTR" | version | header length | header JSON (utf-8)
    frame*  : "F" | t, dissipation, dissipation_u, forcing, error (5 doubles)
              | n | n doubles (w coefficients, row-major (j, m)) | crc32
    footer  : "E" | length | JSON | crc32

The crc32 covers everything from the tag byte up to the checksum.  A
checkpoint is a trace with a single frame.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorruptFrame, FormatVersionMismatch

__all__ = ["MAGIC", "VERSION", "TraceFrame", "TraceFile", "TraceWriter", "read_trace",
           "write_trace", "save_checkpoint", "load_checkpoint", "file_checksum"]

MAGIC = b"GSTR"
VERSION = 1
_U32 = struct.Struct("<I")
_ACC = struct.Struct("<5d")


@dataclass(frozen=True, eq=False)
class TraceFrame:
    t: float
    coeffs: np.ndarray
    dissipation_accum: float = 0.0
    dissipation_u_accum: float = 0.0
    forcing_accum: float = 0.0
    error_accum: float = 0.0


@dataclass(eq=False)
class TraceFile:
    header: dict
    frames: list[TraceFrame] = field(default_factory=list)
    footer: dict | None = None

    @property
    def times(self) -> list[float]:
        return [f.t for f in self.frames]

    @property
    def coeffs(self) -> list[np.ndarray]:
        return [f.coeffs for f in self.frames]


def _encode_frame(fr, shape) -> bytes:
    c = np.ascontiguousarray(fr.coeffs, dtype="<f8")
    if c.shape != tuple(shape):
        raise ValueError(f"frame shape {c.shape} does not match header {tuple(shape)}")
    body = (b"F" + _ACC.pack(fr.t, fr.dissipation_accum, fr.dissipation_u_accum, fr.forcing_accum,
                             fr.error_accum) + _U32.pack(c.size) + c.tobytes())
    return body + _U32.pack(zlib.crc32(body))


class TraceWriter:
    """Streaming writer; usable as an integration observer."""

    def __init__(self, path, header: dict):
        self.path = Path(path)
        self.header = dict(header, version=VERSION)
        self.shape = (int(header["nx"]), int(header["ny"]))
        self._fh = open(self.path, "wb")
        blob = json.dumps(self.header, sort_keys=True).encode()
        self._fh.write(MAGIC + _U32.pack(VERSION) + _U32.pack(len(blob)) + blob)
        self._last_t = -np.inf

    def write(self, fr):
        if not fr.t > self._last_t:
            raise ValueError("trace frames must be strictly increasing in t")
        self._fh.write(_encode_frame(fr, self.shape))
        self._last_t = fr.t

    def __call__(self, state):
        self.write(TraceFrame(state.t, state.coeffs, state.dissipation_accum, state.dissipation_u_accum,
                              state.forcing_accum, state.error_accum))

    def close(self, footer: dict | None = None):
        if self._fh.closed:
            return
        blob = json.dumps(footer or {}, sort_keys=True, default=_jsonable).encode()
        body = b"E" + _U32.pack(len(blob)) + blob
        self._fh.write(body + _U32.pack(zlib.crc32(body)))
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def write_trace(path, header: dict, frames, footer: dict | None = None):
    with TraceWriter(path, header) as w:
        for fr in frames:
            w.write(fr)
        w.close(footer)


def _take(buf: memoryview, pos: int, n: int, what: str):
    if pos + n > len(buf):
        raise CorruptFrame(f"file truncated while reading {what}")
    return bytes(buf[pos:pos + n]), pos + n


def read_trace(path, require_footer: bool = True) -> TraceFile:
    data = memoryview(Path(path).read_bytes())
    raw, pos = _take(data, 0, 4, "magic")
    if raw != MAGIC:
        raise CorruptFrame(f"{path}: not a trace file (magic {raw!r})")
    raw, pos = _take(data, pos, 4, "version")
    ver = _U32.unpack(raw)[0]
    if ver != VERSION:
        raise FormatVersionMismatch(f"{path}: trace format version {ver}, reader supports {VERSION}")
    raw, pos = _take(data, pos, 4, "header length")
    hl = _U32.unpack(raw)[0]
    raw, pos = _take(data, pos, hl, "header")
    try:
        header = json.loads(raw.decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptFrame(f"{path}: unreadable header") from exc
    if header.get("version") != ver:
        raise FormatVersionMismatch(f"{path}: header version {header.get('version')} != {ver}")
    shape = (int(header["nx"]), int(header["ny"]))
    tf = TraceFile(header)
    last = -np.inf
    while pos < len(data):
        start = pos
        tag, pos = _take(data, pos, 1, "record tag")
        if tag == b"F":
            acc, pos = _take(data, pos, _ACC.size, "frame")
            raw, pos = _take(data, pos, 4, "frame")
            n = _U32.unpack(raw)[0]
            if n != shape[0] * shape[1]:
                raise CorruptFrame(f"frame holds {n} coefficients, header says {shape}")
            cbytes, pos = _take(data, pos, 8 * n, "frame coefficients")
            raw, pos = _take(data, pos, 4, "frame checksum")
            if zlib.crc32(bytes(data[start:pos - 4])) != _U32.unpack(raw)[0]:
                raise CorruptFrame(f"checksum mismatch in frame {len(tf.frames)}")
            t, d, du, k, e = _ACC.unpack(acc)
            if not t > last:
                raise CorruptFrame("frame times are not increasing")
            last = t
            c = np.frombuffer(cbytes, dtype="<f8").astype(float).reshape(shape)
            tf.frames.append(TraceFrame(t, c, d, du, k, e))
        elif tag == b"E":
            raw, pos = _take(data, pos, 4, "footer")
            n = _U32.unpack(raw)[0]
            blob, pos = _take(data, pos, n, "footer")
            raw, pos = _take(data, pos, 4, "footer checksum")
            if zlib.crc32(bytes(data[start:pos - 4])) != _U32.unpack(raw)[0]:
                raise CorruptFrame("checksum mismatch in footer")
            tf.footer = json.loads(blob.decode())
            if pos != len(data):
                raise CorruptFrame("trailing bytes after footer")
        else:
            raise CorruptFrame(f"unknown record tag {tag!r} at byte {start}")
    if require_footer and tf.footer is None:
        raise CorruptFrame(f"{path}: missing footer (file truncated?)")
    return tf


def save_checkpoint(path, state, header: dict):
    write_trace(path, header, [TraceFrame(state.t, state.coeffs, state.dissipation_accum,
                                          state.dissipation_u_accum, state.forcing_accum,
                                          state.error_accum)],
                {"kind": "checkpoint", "status": getattr(state.status, "value", str(state.status))})


def load_checkpoint(path):
    """``(header, frame)`` of the last frame stored in ``path``."""
    tf = read_trace(path)
    if not tf.frames:
        raise CorruptFrame(f"{path}: no frames")
    return tf.header, tf.frames[-1]


def file_checksum(path) -> str:
    import hashlib

    return hashlib.sha256(Path(path).read_bytes()).hexdigest()

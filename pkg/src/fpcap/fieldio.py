"""Grid field export: CSV and a small self-describing binary format.

Binary layout (little endian)::

    b"FPCG"                magic
    uint32                 format version (1)
    uint32                 ndim
    uint64[ndim]           shape
    float64                spacing h
    float64[ndim]          origin
    16 bytes               role tag, ASCII, NUL padded
    float64[prod(shape)]   values in C order
"""
from __future__ import annotations

import csv
import io
import struct

import numpy as np

MAGIC = b"FPCG"
VERSION = 1


class FieldFormatError(ValueError):
    """The byte stream is not a valid field file."""


def encode_field(values, origin, h: float, role: str) -> bytes:
    values = np.asarray(values, dtype="<f8")
    origin = np.asarray(origin, dtype="<f8").ravel()
    if origin.size != values.ndim:
        raise ValueError("origin must have one entry per array dimension")
    tag = role.encode("ascii")
    if len(tag) > 16:
        raise ValueError("role tag longer than 16 bytes")
    head = MAGIC + struct.pack("<II", VERSION, values.ndim)
    head += np.asarray(values.shape, dtype="<u8").tobytes()
    head += struct.pack("<d", float(h)) + origin.tobytes() + tag.ljust(16, b"\0")
    return head + np.ascontiguousarray(values).tobytes()


def decode_field(data: bytes) -> tuple[np.ndarray, np.ndarray, float, str]:
    """Inverse of :func:`encode_field`: ``(values, origin, h, role)``."""
    if data[:4] != MAGIC:
        raise FieldFormatError("bad magic")
    version, ndim = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise FieldFormatError(f"unsupported version {version}")
    off = 12
    shape = tuple(int(v) for v in np.frombuffer(data, dtype="<u8", count=ndim, offset=off))
    off += 8 * ndim
    (h,) = struct.unpack_from("<d", data, off)
    off += 8
    origin = np.frombuffer(data, dtype="<f8", count=ndim, offset=off).copy()
    off += 8 * ndim
    role = data[off : off + 16].rstrip(b"\0").decode("ascii")
    off += 16
    n = int(np.prod(shape))
    if len(data) != off + 8 * n:
        raise FieldFormatError("payload size does not match the header")
    values = np.frombuffer(data, dtype="<f8", count=n, offset=off).reshape(shape).copy()
    return values, origin, h, role


def field_csv(values, origin, h: float) -> str:
    """One row per node: coordinates ``z0..z{d-1}`` followed by ``value``."""
    values = np.asarray(values, dtype=np.float64)
    origin = np.asarray(origin, dtype=np.float64).ravel()
    idx = np.indices(values.shape).reshape(values.ndim, -1).T
    coords = origin + h * idx
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"z{k}" for k in range(values.ndim)] + ["value"])
    for c, v in zip(coords, values.ravel()):
        w.writerow([repr(float(x)) for x in c] + [repr(float(v))])
    return buf.getvalue()


def discrete_field_bytes(field) -> bytes:
    """Encode a :class:`~fpcap.fd.DiscreteField`."""
    g = field.grid
    return encode_field(field.array(), g.origin, g.h, field.role)

"""Versioned binary container shared by model and dataset files.

Layout::

    8 bytes   magic (kind specific)
    4 bytes   header length, little-endian uint32
    n bytes   UTF-8 JSON header (sorted keys)
    payload   little-endian float blobs, row-major, in header "arrays" order

Blobs are float64 unless stored as float32 (listed in header "dtypes"); model
weights are always float64.  The header records every blob's shape plus a
SHA-256 of the payload, so
truncation or corruption fails loudly instead of producing a partial object.
"""
from __future__ import annotations

import hashlib
import json
import os
import struct

import numpy as np

FORMAT_VERSION = 1

_LE_F64 = np.dtype("<f8")
_DTYPES = {"<f8": _LE_F64, "<f4": np.dtype("<f4")}


class FormatError(ValueError):
    """A file is not a valid container of the expected kind and version."""


def write_container(path, magic: bytes, header: dict, arrays) -> None:
    assert len(magic) == 8
    blobs = [np.ascontiguousarray(
        a, dtype=_DTYPES["<f4"] if np.asarray(a).dtype == np.float32 else _LE_F64) for a in arrays]
    digest = hashlib.sha256()
    for b in blobs:
        digest.update(memoryview(b).cast("B"))
    header = dict(header)
    header["format_version"] = FORMAT_VERSION
    header["arrays"] = [list(b.shape) for b in blobs]
    header["dtypes"] = [b.dtype.str for b in blobs]
    header["payload_sha256"] = digest.hexdigest()
    text = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = f"{os.fspath(path)}.partial"
    with open(tmp, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<I", len(text)))
        fh.write(text)
        for b in blobs:
            fh.write(memoryview(b).cast("B"))
    os.replace(tmp, path)


def read_container(path, magic: bytes):
    """Return ``(header, arrays)``; raises :class:`FormatError` on any defect."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != magic:
        raise FormatError(f"{path}: bad magic, not a {magic.rstrip(bytes(1)).decode()} file")
    if len(raw) < 12:
        raise FormatError(f"{path}: truncated header")
    (hlen,) = struct.unpack("<I", raw[8:12])
    try:
        header = json.loads(raw[12:12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt header ({exc})") from None
    if header.get("format_version") != FORMAT_VERSION:
        raise FormatError(
            f"{path}: format version {header.get('format_version')} != {FORMAT_VERSION}")
    shapes = [tuple(s) for s in header["arrays"]]
    try:
        dtypes = [_DTYPES[d] for d in header.get("dtypes", ["<f8"] * len(shapes))]
    except KeyError as exc:
        raise FormatError(f"{path}: unsupported blob dtype {exc}") from None
    if len(dtypes) != len(shapes):
        raise FormatError(f"{path}: dtype list does not match array list")
    payload = memoryview(raw)[12 + hlen:]
    expected = sum(int(np.prod(s)) * d.itemsize for s, d in zip(shapes, dtypes))
    if len(payload) != expected:
        raise FormatError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise FormatError(f"{path}: payload checksum mismatch")
    arrays, off = [], 0
    for s, d in zip(shapes, dtypes):
        n = int(np.prod(s))
        # read-only views onto the file buffer; no copy for multi-GB datasets
        arrays.append(np.frombuffer(payload, d, n, off).reshape(s))
        off += d.itemsize * n
    return header, arrays

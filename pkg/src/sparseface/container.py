"""Binary container for cached artifacts (dictionaries, graphs, SVM models).

One file holds a flat set of named numpy arrays. All payloads are
little-endian; floats are 64-bit. The format is deliberately dumb: a magic
string, a version, then length-prefixed (name, dtype, shape, raw bytes)
records in insertion order.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"SFACEBIN"
VERSION = 1

_DTYPE_CODES = {0: "<f8", 1: "<i8", 2: "|u1"}
_DTYPE_TAGS = {"f": 0, "i": 1, "u": 2}


class ContainerError(ValueError):
    """Raised when a container file cannot be parsed."""


def write_arrays(path, arrays):
    """Write a name -> ndarray mapping to `path`.

    Float arrays are stored as little-endian float64, integer arrays as
    little-endian int64, unsigned byte arrays as-is.
    """
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(arrays)))
        for name, arr in arrays.items():
            arr = np.asarray(arr)
            code = _DTYPE_TAGS.get(arr.dtype.kind)
            if code is None:
                raise ContainerError(f"unsupported dtype {arr.dtype} for entry {name!r}")
            arr = np.ascontiguousarray(arr.astype(_DTYPE_CODES[code], copy=False))
            raw_name = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw_name)))
            fh.write(raw_name)
            fh.write(struct.pack("<BI", code, arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes())


def read_arrays(path):
    """Read a container file back into a name -> ndarray dict."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[: len(MAGIC)] != MAGIC:
        raise ContainerError(f"{path}: not a container file")
    off = len(MAGIC)

    def take(fmt):
        nonlocal off
        size = struct.calcsize(fmt)
        if off + size > len(data):
            raise ContainerError(f"{path}: truncated container")
        vals = struct.unpack_from(fmt, data, off)
        off += size
        return vals

    version, n_entries = take("<II")
    if version != VERSION:
        raise ContainerError(f"{path}: unsupported container version {version}")
    out = {}
    for _ in range(n_entries):
        (name_len,) = take("<I")
        name = data[off : off + name_len].decode("utf-8")
        off += name_len
        code, ndim = take("<BI")
        if code not in _DTYPE_CODES:
            raise ContainerError(f"{path}: bad dtype code {code}")
        shape = take(f"<{ndim}Q")
        dtype = np.dtype(_DTYPE_CODES[code])
        count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        nbytes = count * dtype.itemsize
        if off + nbytes > len(data):
            raise ContainerError(f"{path}: truncated payload for entry {name!r}")
        arr = np.frombuffer(data[off : off + nbytes], dtype=dtype).reshape(shape)
        off += nbytes
        out[name] = arr.copy()
    return out

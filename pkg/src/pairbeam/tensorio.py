"""Binary container for named float32 tensors.

One format serves every tensor file in the project: network weights,
exported training features, and mask dumps.  The training side implements
its own reader/writer against this layout, so the byte format below is a
contract and must not change without bumping the version.

Layout, little-endian throughout:

    magic    4 bytes   b"STRN"
    version  u32       currently 1
    n_meta   u32
    n_meta * { key_len u32, key utf-8, val_len u32, val utf-8 }
    n_tens   u32
    n_tens * { name_len u32, name utf-8, rank u32, dims u32[rank],
               payload float32[prod(dims)] row-major }
"""

import os
import struct
import tempfile

import numpy as np

from .errors import FormatError

MAGIC = b"STRN"
VERSION = 1

_U32 = struct.Struct("<I")


def save_tensors(path, tensors, metadata=None):
    """Write named tensors to ``path`` atomically (write then rename).

    Parameters
    ----------
    tensors : dict of str -> array-like
        Stored as float32 row-major, insertion order preserved.
    metadata : dict of str -> str, optional
    """
    metadata = metadata or {}
    chunks = [MAGIC, _U32.pack(VERSION), _U32.pack(len(metadata))]
    for key, val in metadata.items():
        for text in (str(key), str(val)):
            raw = text.encode("utf-8")
            chunks.append(_U32.pack(len(raw)))
            chunks.append(raw)
    chunks.append(_U32.pack(len(tensors)))
    for name, tensor in tensors.items():
        arr = np.ascontiguousarray(tensor, dtype=np.float32)
        raw = str(name).encode("utf-8")
        chunks.append(_U32.pack(len(raw)))
        chunks.append(raw)
        chunks.append(_U32.pack(arr.ndim))
        for dim in arr.shape:
            chunks.append(_U32.pack(dim))
        chunks.append(arr.tobytes())

    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(b"".join(chunks))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    def __init__(self, blob, path):
        self.blob = blob
        self.path = path
        self.pos = 0

    def take(self, count, what):
        end = self.pos + count
        if end > len(self.blob):
            raise FormatError(f"{self.path}: truncated while reading {what}")
        piece = self.blob[self.pos:end]
        self.pos = end
        return piece

    def u32(self, what):
        return _U32.unpack(self.take(4, what))[0]

    def text(self, what):
        return self.take(self.u32(what), what).decode("utf-8")


def load_tensors(path):
    """Read a tensor container; returns ``(tensors, metadata)``.

    Raises :class:`FormatError` on a bad magic, unsupported version, or a
    truncated record, naming the offending tensor where possible.
    """
    try:
        with open(path, "rb") as handle:
            blob = handle.read()
    except OSError as exc:
        raise FormatError(f"cannot read tensor file {path}: {exc}") from exc

    reader = _Reader(blob, path)
    if reader.take(4, "magic") != MAGIC:
        raise FormatError(f"{path}: not a tensor container (bad magic)")
    version = reader.u32("version")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported container version {version}")

    metadata = {}
    for _ in range(reader.u32("metadata count")):
        key = reader.text("metadata key")
        metadata[key] = reader.text(f"metadata value for {key!r}")

    tensors = {}
    for _ in range(reader.u32("tensor count")):
        name = reader.text("tensor name")
        rank = reader.u32(f"rank of {name!r}")
        dims = tuple(reader.u32(f"dims of {name!r}") for _ in range(rank))
        count = int(np.prod(dims, dtype=np.int64)) if dims else 1
        payload = reader.take(4 * count, f"payload of tensor {name!r}")
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    if reader.pos != len(blob):
        raise FormatError(f"{path}: {len(blob) - reader.pos} trailing bytes")
    return tensors, metadata

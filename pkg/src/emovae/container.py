"""``EMOVAE1`` tensor container used for checkpoints and feature caches.

Layout::

    b"EMOVAE1\\n"
    uint64 little-endian header length
    UTF-8 JSON header {"meta": {...}, "tensors": [{"name", "shape", "offset"}]}
    raw little-endian float64 payload, offsets relative to payload start
"""

import json
import struct

import numpy as np

from .errors import ContainerError

MAGIC = b"EMOVAE1\n"


def dumps(tensors, meta=None):
    """Serialize an ordered mapping of name -> array to bytes."""
    entries = []
    chunks = []
    offset = 0
    for name, arr in tensors.items():
        a = np.asarray(arr, dtype="<f8")  # tobytes() is C-ordered; keeps 0-d shapes
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        chunks.append(a.tobytes())
        offset += a.nbytes
    header = json.dumps({"meta": meta or {}, "tensors": entries},
                        sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(header)) + header + b"".join(chunks)


def loads(blob):
    """Inverse of :func:`dumps`; returns ``(tensors, meta)``."""
    if not blob.startswith(MAGIC):
        raise ContainerError("missing EMOVAE1 magic bytes")
    pos = len(MAGIC)
    if len(blob) < pos + 8:
        raise ContainerError("truncated header length")
    (hlen,) = struct.unpack_from("<Q", blob, pos)
    pos += 8
    try:
        header = json.loads(blob[pos:pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"corrupt header: {exc}") from None
    payload = memoryview(blob)[pos + hlen:]
    tensors = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        start = entry["offset"]
        if start + 8 * count > len(payload):
            raise ContainerError(f"tensor {entry['name']!r} runs past end of file")
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=start)
        tensors[entry["name"]] = arr.astype(np.float64).reshape(shape)
    return tensors, header["meta"]


def save(path, tensors, meta=None):
    with open(path, "wb") as fh:
        fh.write(dumps(tensors, meta))


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())

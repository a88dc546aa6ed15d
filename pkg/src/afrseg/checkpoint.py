"""Binary checkpoint format.

Layout, all little-endian:

    magic b"AFRD" | version u32 | tensor count u32
    per tensor: name length u16 | name utf-8 | rank u8 | dims u32 each | f64 payload
    iteration u64
    rng: PCG64 state u128 | inc u128 | has_uint32 u8 | uinteger u32

Loads are strict: bad magic, unknown version, truncation, or trailing bytes
raise CheckpointError naming the offending field.
"""

import struct

import numpy as np

from .fileio import atomic_write_bytes

MAGIC = b"AFRD"
VERSION = 1


class CheckpointError(Exception):
    pass


class _Reader:
    def __init__(self, blob):
        self.blob = blob
        self.pos = 0

    def take(self, n, field):
        if self.pos + n > len(self.blob):
            raise CheckpointError(f"truncated while reading {field}")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, field):
        return struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt), field))[0]


def pack_rng_state(rng):
    """Serialize a numpy Generator backed by PCG64."""
    st = rng.bit_generator.state
    if st["bit_generator"] != "PCG64":
        raise CheckpointError(f"unsupported rng {st['bit_generator']}")
    return (st["state"]["state"].to_bytes(16, "little")
            + st["state"]["inc"].to_bytes(16, "little")
            + struct.pack("<BI", st["has_uint32"], st["uinteger"]))


def unpack_rng_state(r):
    state = int.from_bytes(r.take(16, "rng state"), "little")
    inc = int.from_bytes(r.take(16, "rng inc"), "little")
    has = r.unpack("B", "rng has_uint32")
    uinteger = r.unpack("I", "rng uinteger")
    rng = np.random.default_rng(0)
    rng.bit_generator.state = {
        "bit_generator": "PCG64",
        "state": {"state": state, "inc": inc},
        "has_uint32": int(has), "uinteger": int(uinteger)}
    return rng


def save(path, tensors, iteration, rng):
    """tensors: iterable of (name, float array); order is preserved."""
    tensors = list(tensors)
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors:
        arr = np.asarray(arr, dtype="<f8")  # 0-d survives; tobytes handles layout
        nb = name.encode()
        parts.append(struct.pack("<H", len(nb)) + nb + struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    parts.append(struct.pack("<Q", iteration))
    parts.append(pack_rng_state(rng))
    atomic_write_bytes(path, b"".join(parts))


def load(path):
    """-> (list of (name, array), iteration, rng Generator)."""
    with open(path, "rb") as f:
        r = _Reader(f.read())
    if r.take(4, "magic") != MAGIC:
        raise CheckpointError("bad magic, not a checkpoint file")
    version = r.unpack("I", "version")
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version}")
    count = r.unpack("I", "tensor count")
    tensors = []
    for i in range(count):
        nlen = r.unpack("H", f"tensor {i} name length")
        try:
            name = r.take(nlen, f"tensor {i} name").decode()
        except UnicodeDecodeError:
            raise CheckpointError(f"tensor {i} name is not valid utf-8") from None
        rank = r.unpack("B", f"{name} rank")
        shape = tuple(r.unpack("I", f"{name} dim {d}") for d in range(rank))
        n = int(np.prod(shape, dtype=np.int64)) if rank else 1
        payload = r.take(8 * n, f"{name} payload")
        arr = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
        tensors.append((name, arr))
    iteration = r.unpack("Q", "iteration")
    rng = unpack_rng_state(r)
    if r.pos != len(r.blob):
        raise CheckpointError(f"{len(r.blob) - r.pos} trailing bytes after rng state")
    return tensors, iteration, rng

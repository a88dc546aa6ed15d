"""Binary netpbm writers: P6 for color, P5 for gray, both byte-deterministic.

Writes go to a temp file in the destination directory followed by an atomic
rename, so readers never observe a partial image.
"""

import numpy as np

from .fileio import atomic_write_bytes

# fixed colors for label maps; class id indexes this table
LABEL_PALETTE = np.array([
    [40, 40, 48],      # 0 background: near black
    [220, 80, 80],     # 1 red
    [80, 200, 100],    # 2 green
    [240, 220, 80],    # 3 yellow
    [90, 120, 230],    # 4 blue
    [200, 100, 220],   # 5 magenta
    [90, 210, 210],    # 6 cyan
    [230, 230, 230],   # 7 white
], dtype=np.uint8)


def _quantize(x):
    return np.round(np.asarray(x) * 255.0).astype(np.uint8)


def write_image(path, data, kind):
    """Write data as P6 (rgb, label) or P5 (gray).

    rgb: 3xHxW floats in [0,1], range-checked, no silent clamping.
    gray: 1xHxW (or HxW) floats, min-max normalized; constant maps go black.
    label: HxW integer class map colored through LABEL_PALETTE.
    """
    if kind == "rgb":
        arr = np.asarray(data if isinstance(data, np.ndarray) else data.data)
        if arr.ndim != 3 or arr.shape[0] != 3:
            raise ValueError(f"write_image: rgb expects 3xHxW, got {arr.shape}")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("write_image: rgb values outside [0,1]")
        payload = _quantize(arr).transpose(1, 2, 0).tobytes()
        header = b"P6\n%d %d\n255\n" % (arr.shape[2], arr.shape[1])
    elif kind == "gray":
        arr = np.asarray(data if isinstance(data, np.ndarray) else data.data)
        if arr.ndim == 3 and arr.shape[0] == 1:
            arr = arr[0]
        if arr.ndim != 2:
            raise ValueError(f"write_image: gray expects 1xHxW or HxW, got {arr.shape}")
        lo, hi = arr.min(), arr.max()
        norm = np.zeros_like(arr) if hi == lo else (arr - lo) / (hi - lo)
        payload = _quantize(norm).tobytes()
        header = b"P5\n%d %d\n255\n" % (arr.shape[1], arr.shape[0])
    elif kind == "label":
        arr = np.asarray(data)
        if arr.ndim != 2:
            raise ValueError(f"write_image: label expects HxW, got {arr.shape}")
        if arr.min() < 0 or arr.max() >= len(LABEL_PALETTE):
            raise ValueError(f"write_image: label id outside [0,{len(LABEL_PALETTE)})")
        payload = LABEL_PALETTE[arr].tobytes()
        header = b"P6\n%d %d\n255\n" % (arr.shape[1], arr.shape[0])
    else:
        raise ValueError(f"write_image: unknown kind {kind!r}")
    atomic_write_bytes(path, header + payload)


def read_image(path):
    """Parse a P5/P6 file back into (kind, HxW or HxWx3 uint8). Test aid."""
    with open(path, "rb") as f:
        blob = f.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":
            while pos < len(blob) and blob[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        fields.append(blob[start:pos])
    pos += 1  # single whitespace after maxval
    magic, w, h = fields[0], int(fields[1]), int(fields[2])
    if int(fields[3]) != 255:
        raise ValueError("read_image: only maxval 255 supported")
    body = np.frombuffer(blob[pos:], dtype=np.uint8)
    if magic == b"P6":
        return "rgb", body.reshape(h, w, 3)
    if magic == b"P5":
        return "gray", body.reshape(h, w)
    raise ValueError(f"read_image: unknown magic {magic!r}")

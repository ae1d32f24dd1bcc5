"""Atomic file output, CSV helpers and the binary checkpoint format."""
import os
import struct
import tempfile

import numpy as np

CHECKPOINT_MAGIC = b"EGAECKPT"
CHECKPOINT_VERSION = 1
# magic, version, d, h, d', seed
_HEADER = struct.Struct("<8sIQQQq")


class CheckpointError(ValueError):
    pass


def atomic_write(path, content):
    """Write ``content`` (str or bytes) to ``path`` via a temp file + rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    mode = "wb" if isinstance(content, (bytes, bytearray)) else "w"
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
            fh.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(path, w1, w2, seed):
    """Header then W1 and W2 as row-major little-endian float64."""
    d, h = w1.shape
    h2, d_out = w2.shape
    if h != h2:
        raise CheckpointError(f"inner dimensions differ: {h} vs {h2}")
    header = _HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, d, h, d_out, int(seed))
    body = np.ascontiguousarray(w1, dtype="<f8").tobytes() + np.ascontiguousarray(w2, dtype="<f8").tobytes()
    atomic_write(path, header + body)


def load_checkpoint(path):
    """Return ``(w1, w2, seed)``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise CheckpointError(f"{path}: truncated header")
    magic, version, d, h, d_out, seed = _HEADER.unpack_from(raw)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not an EGAE checkpoint")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    expected = _HEADER.size + 8 * (d * h + h * d_out)
    if len(raw) != expected:
        raise CheckpointError(f"{path}: expected {expected} bytes, found {len(raw)}")
    flat = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    w1 = flat[: d * h].reshape(d, h).copy()
    w2 = flat[d * h:].reshape(h, d_out).copy()
    return w1, w2, seed


def write_rows_csv(path, header, rows):
    lines = [",".join(header)]
    lines += [",".join(str(v) for v in row) for row in rows]
    atomic_write(path, "\n".join(lines) + "\n")

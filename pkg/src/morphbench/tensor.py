"""Dense tensor utilities: precision control, finiteness checks, MTEN and PNG i/o.

Compute runs in 32-bit by default; a 64-bit mode exists for verification
(finite-difference gradient checks). The MTEN file format is the lossless
exchange format for weights, latents and images:

    magic b"MTEN" | u32 LE rank | rank x u32 LE dims | f32 LE data, row-major
"""

from __future__ import annotations

import contextlib
import struct

import numpy as np

MTEN_MAGIC = b"MTEN"

_DEFAULT_DTYPE = np.float32


class TensorError(ValueError):
    """Shape or value violation in tensor-level code."""


def default_dtype():
    """The dtype new tensors and graphs use unless told otherwise."""
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def precision(dtype):
    """Temporarily switch the default precision ("float32" or "float64")."""
    global _DEFAULT_DTYPE
    new = np.dtype(dtype).type
    if new not in (np.float32, np.float64):
        raise TensorError(f"unsupported precision {dtype!r}")
    old = _DEFAULT_DTYPE
    _DEFAULT_DTYPE = new
    try:
        yield
    finally:
        _DEFAULT_DTYPE = old


def as_tensor(data, dtype=None):
    """Coerce to an ndarray at the default (or given) precision."""
    return np.asarray(data, dtype=dtype or _DEFAULT_DTYPE)


def check_finite(arr, what="tensor"):
    """NaN/Inf is an error state, never silent."""
    if not np.all(np.isfinite(arr)):
        raise TensorError(f"{what} contains non-finite values")
    return arr


def save_mten(path, arr):
    """Write an array as an MTEN file (always f32 on disk)."""
    arr = np.asarray(arr, dtype=np.float32)
    if arr.ndim:  # ascontiguousarray would promote rank 0 to rank 1
        arr = np.ascontiguousarray(arr)
    with open(path, "wb") as fh:
        fh.write(MTEN_MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes(order="C"))


def load_mten(path, dtype=None):
    """Read an MTEN file back into an ndarray (default precision)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MTEN_MAGIC:
            raise TensorError(f"{path}: bad magic {magic!r}, expected {MTEN_MAGIC!r}")
        (rank,) = struct.unpack("<I", fh.read(4))
        dims = struct.unpack(f"<{rank}I", fh.read(4 * rank))
        count = int(np.prod(dims)) if rank else 1
        raw = fh.read(4 * count)
        if len(raw) != 4 * count:
            raise TensorError(f"{path}: truncated data ({len(raw)} bytes for {count} floats)")
        data = np.frombuffer(raw, dtype="<f4", count=count)
    return data.reshape(dims).astype(dtype or _DEFAULT_DTYPE)


def save_png(path, img):
    """Export an HxWx3 image in [0,1] as 8-bit RGB. Lossy; MTEN is the lossless path."""
    from PIL import Image

    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise TensorError(f"expected HxWx3 image, got shape {img.shape}")
    u8 = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(u8, mode="RGB").save(path)


def load_png(path, dtype=None):
    """Read an 8-bit RGB PNG into an HxWx3 array in [0,1]."""
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=dtype or _DEFAULT_DTYPE)
    return arr / 255.0

"""Five-axis tensors, seeded random fill, tolerance comparison and the T5DF file format.

A tensor is a C-contiguous numpy array with axes (batch, channel, time,
height, width), so the flat offset of ``(b, c, t, y, x)`` is
``(((b*C + c)*T + t)*H + y)*W + x``.

T5DF layout (all little-endian, no padding, no footer)::

    offset  size  field
    0       4     magic b"T5DF"
    4       2     version (u16) = 1
    6       2     dtype code (u16): 1 = f32, 2 = f64
    8       20    five extents (u32 each)
    28      ...   raw element data in flat order

Random tensors come from SplitMix64 evaluated at a counter, so element ``i``
of a tensor with seed ``s`` is::

    z = s + (i + 1) * 0x9E3779B97F4A7C15            (mod 2**64)
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    z =  z ^ (z >> 31)
    value = 2 * (z >> 11) * 2**-53 - 1              (f64, then cast)

which is bit-reproducible on any platform.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ShapeError, SizeError

MAGIC = b"T5DF"
VERSION = 1
DTYPE_CODES = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}
CODE_DTYPES = {v: k for k, v in DTYPE_CODES.items()}
_HEADER = struct.Struct("<4sHH5I")

# Largest element count we agree to allocate; anything above is a size error.
MAX_ELEMENTS = 2**40


def _check_dims(dims):
    dims = tuple(int(d) for d in dims)
    if len(dims) != 5:
        raise ShapeError(f"expected five extents, got {len(dims)}")
    if any(d < 0 for d in dims):
        raise ShapeError(f"extents must be non-negative, got {dims}")
    total = 1
    for d in dims:
        total *= d
    if total > MAX_ELEMENTS:
        raise SizeError(f"{dims} has {total} elements, limit is {MAX_ELEMENTS}")
    return dims


def _check_dtype(dtype):
    dtype = np.dtype(dtype)
    if dtype not in DTYPE_CODES:
        raise TypeError(f"unsupported dtype {dtype}; use float32 or float64")
    return dtype


def check_tensor(t, name="tensor"):
    """Raise ShapeError unless ``t`` is a 5-D float32/float64 array."""
    if not isinstance(t, np.ndarray) or t.ndim != 5:
        raise ShapeError(f"{name} must be a 5-D array, got {getattr(t, 'shape', type(t))}")
    return t


def tensor_new(dims, dtype=np.float32, fill=0.0):
    dims = _check_dims(dims)
    return np.full(dims, fill, dtype=_check_dtype(dtype))


def _splitmix64(count, seed):
    with np.errstate(over="ignore"):
        z = np.arange(1, count + 1, dtype=np.uint64) * np.uint64(0x9E3779B97F4A7C15)
        z += np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z ^= z >> np.uint64(31)
    return z


def tensor_random(dims, dtype=np.float32, seed=0):
    """Uniform values in [-1, 1], bit-identical for identical (dims, dtype, seed)."""
    dims = _check_dims(dims)
    dtype = _check_dtype(dtype)
    count = int(np.prod(dims, dtype=np.int64))
    bits = _splitmix64(count, int(seed))
    unit = (bits >> np.uint64(11)).astype(np.float64) * (2.0**-53)
    return (2.0 * unit - 1.0).astype(dtype).reshape(dims)


@dataclass(frozen=True)
class CloseReport:
    ok: bool
    max_error: float
    index: tuple

    def __bool__(self):
        return self.ok


def allclose(a, b, rel_tol=1e-6, abs_tol=0.0):
    """Element-wise |a - b| <= abs_tol + rel_tol * max(|a|, |b|).

    The report carries the largest absolute difference and where it occurs.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        return CloseReport(True, 0.0, ())
    a64 = a.astype(np.float64)
    b64 = b.astype(np.float64)
    diff = np.abs(a64 - b64)
    bound = abs_tol + rel_tol * np.maximum(np.abs(a64), np.abs(b64))
    flat = int(np.argmax(diff))
    index = tuple(int(i) for i in np.unravel_index(flat, a.shape))
    return CloseReport(bool(np.all(diff <= bound)), float(diff.flat[flat]), index)


def max_rel_error(actual, expected):
    """Largest absolute deviation scaled by the largest oracle magnitude."""
    actual = np.asarray(actual, dtype=np.float64)
    expected = np.asarray(expected, dtype=np.float64)
    if actual.shape != expected.shape:
        raise ShapeError(f"shape mismatch: {actual.shape} vs {expected.shape}")
    if actual.size == 0:
        return 0.0
    scale = float(np.max(np.abs(expected)))
    err = float(np.max(np.abs(actual - expected)))
    if scale == 0.0:
        return err
    return err / scale


def to_bytes(t):
    check_tensor(t)
    dtype = _check_dtype(t.dtype)
    header = _HEADER.pack(MAGIC, VERSION, DTYPE_CODES[dtype], *t.shape)
    return header + np.ascontiguousarray(t).astype(dtype.newbyteorder("<"), copy=False).tobytes()


def from_bytes(buf):
    if len(buf) < _HEADER.size:
        raise FormatError(f"truncated header: {len(buf)} of {_HEADER.size} bytes", len(buf))
    magic, version, code, *dims = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if code not in CODE_DTYPES:
        raise FormatError(f"unknown dtype code {code}", 6)
    dtype = CODE_DTYPES[code]
    dims = _check_dims(dims)
    count = int(np.prod(dims, dtype=np.int64))
    need = _HEADER.size + count * dtype.itemsize
    if len(buf) < need:
        raise FormatError(f"truncated payload: need {need} bytes, have {len(buf)}", len(buf))
    if len(buf) > need:
        raise FormatError(f"{len(buf) - need} trailing bytes after payload", need)
    data = np.frombuffer(buf, dtype=dtype.newbyteorder("<"), count=count, offset=_HEADER.size)
    return data.astype(dtype).reshape(dims)


def tensor_write(t, path):
    with open(path, "wb") as fh:
        fh.write(to_bytes(t))


def tensor_read(path):
    with open(path, "rb") as fh:
        return from_bytes(fh.read())

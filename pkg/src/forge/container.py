"""MSD: a minimal self-describing array container.

Layout::

    MSD1\\n
    {"byte_order": "little", "dims": [...], "domain": ..., "dtype": ..., "meta": {...}}\\n
    <raw little-endian payload, C order>

The header is a single line of JSON with sorted keys, so identical arrays and
metadata always produce identical bytes. Writes go to a temporary file in the
target directory and are renamed into place.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import CorruptHeader, LengthMismatch, UnsupportedDtype

MAGIC = b"MSD1\n"
DTYPES = {"complex64": np.dtype("<c8"), "float32": np.dtype("<f4")}
DOMAINS = ("image", "kspace", "map")


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def encode(data: np.ndarray, dtype: str, domain: str = "image", meta: dict | None = None) -> bytes:
    if dtype not in DTYPES:
        raise UnsupportedDtype(f"dtype {dtype!r} not in {sorted(DTYPES)}")
    if domain not in DOMAINS:
        raise ValueError(f"domain {domain!r} not in {DOMAINS}")
    arr = np.asarray(data)
    if dtype == "float32" and np.iscomplexobj(arr):
        raise UnsupportedDtype("complex data cannot be stored as float32")
    arr = np.ascontiguousarray(arr, dtype=DTYPES[dtype])
    header = {
        "byte_order": "little",
        "dims": list(arr.shape),
        "domain": domain,
        "dtype": dtype,
        "meta": _clean(meta or {}),
    }
    line = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("ascii")
    return MAGIC + line + b"\n" + arr.tobytes()


def decode(raw: bytes) -> tuple[np.ndarray, dict]:
    if not raw.startswith(MAGIC):
        raise CorruptHeader("missing MSD1 magic")
    end = raw.find(b"\n", len(MAGIC))
    if end < 0:
        raise CorruptHeader("unterminated header")
    try:
        header = json.loads(raw[len(MAGIC) : end].decode("ascii"))
        dims = [int(d) for d in header["dims"]]
        dtype = header["dtype"]
        order = header["byte_order"]
    except (ValueError, KeyError, TypeError, UnicodeDecodeError) as exc:
        raise CorruptHeader(f"unreadable header: {exc}") from exc
    if any(d < 0 for d in dims):
        raise CorruptHeader(f"negative dimension in {dims}")
    if order != "little":
        raise CorruptHeader(f"unsupported byte order {order!r}")
    if dtype not in DTYPES:
        raise UnsupportedDtype(f"dtype {dtype!r} not in {sorted(DTYPES)}")
    payload = raw[end + 1 :]
    expected = math.prod(dims) * DTYPES[dtype].itemsize
    if len(payload) != expected:
        raise LengthMismatch(f"payload is {len(payload)} bytes, header implies {expected}")
    arr = np.frombuffer(payload, dtype=DTYPES[dtype]).reshape(dims).copy()
    return arr, header


def atomic_write_bytes(path, raw: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(raw)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_msd(path, data: np.ndarray, dtype: str | None = None, domain: str = "image", meta: dict | None = None) -> bytes:
    """Write ``data`` atomically; ``dtype`` defaults to complex64 for complex
    input and float32 otherwise. Returns the bytes written."""
    if dtype is None:
        dtype = "complex64" if np.iscomplexobj(data) else "float32"
    raw = encode(data, dtype, domain, meta)
    atomic_write_bytes(path, raw)
    return raw


def read_msd(path) -> tuple[np.ndarray, dict]:
    return decode(Path(path).read_bytes())

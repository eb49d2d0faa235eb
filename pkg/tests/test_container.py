import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from forge.container import MAGIC, decode, encode, read_msd, write_msd
from forge.errors import CorruptHeader, LengthMismatch, UnsupportedDtype


def _header(raw: bytes) -> dict:
    return json.loads(raw[len(MAGIC) : raw.index(b"\n", len(MAGIC))])


def test_roundtrip_complex_bit_identical(tmp_path, rng):
    x = (rng.standard_normal((128, 128)) + 1j * rng.standard_normal((128, 128))).astype(np.complex64)
    write_msd(tmp_path / "a.msd", x, domain="kspace", meta={"seed": 3, "snr": float("inf")})
    y, h = read_msd(tmp_path / "a.msd")
    assert y.dtype == np.complex64 and y.tobytes() == x.tobytes()
    assert h["domain"] == "kspace" and h["meta"] == {"seed": 3, "snr": "inf"}
    assert not list(tmp_path.glob("*.tmp"))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float32, array_shapes(min_dims=1, max_dims=4, max_side=6), elements=st.floats(width=32, allow_nan=False)))
def test_roundtrip_float32(x):
    y, h = decode(encode(x, "float32", "map"))
    assert y.tobytes() == x.tobytes() and h["dims"] == list(x.shape)


def test_header_is_little_endian_and_deterministic():
    raw = encode(np.ones((2, 3)), "float32", meta={"b": 1, "a": [1, 2]})
    h = _header(raw)
    assert h["byte_order"] == "little"
    assert raw == encode(np.ones((2, 3)), "float32", meta={"a": [1, 2], "b": 1})
    # interleaved (re, im) payload
    c = decode(encode(np.array([1 + 2j]), "complex64"))[0]
    assert encode(c, "complex64").endswith(np.array([1.0, 2.0], "<f4").tobytes())


def test_truncated_payload(tmp_path):
    raw = write_msd(tmp_path / "a.msd", np.zeros((4, 4), np.complex64))
    (tmp_path / "b.msd").write_bytes(raw[:-3])
    with pytest.raises(LengthMismatch):
        read_msd(tmp_path / "b.msd")
    with pytest.raises(LengthMismatch):
        decode(raw + b"\0")


def test_corrupt_header():
    with pytest.raises(CorruptHeader):
        decode(b"NOPE\n{}\n")
    with pytest.raises(CorruptHeader):
        decode(MAGIC + b"{not json\n")
    with pytest.raises(CorruptHeader):
        decode(MAGIC + b'{"dims": [1]}')
    bad = json.dumps({"byte_order": "big", "dims": [1], "dtype": "float32", "domain": "map", "meta": {}})
    with pytest.raises(CorruptHeader):
        decode(MAGIC + bad.encode() + b"\n" + b"\0" * 4)


def test_unsupported_dtype():
    with pytest.raises(UnsupportedDtype):
        encode(np.ones(3), "float64")
    with pytest.raises(UnsupportedDtype):
        encode(np.ones(3, complex), "float32")
    hdr = json.dumps({"byte_order": "little", "dims": [1], "dtype": "int8", "domain": "map", "meta": {}})
    with pytest.raises(UnsupportedDtype):
        decode(MAGIC + hdr.encode() + b"\n\0")

import struct

import numpy as np
import pytest

from morphbench import tensor as T


def test_mten_round_trip_exact(tmp_path, rng):
    for shape in [(), (7,), (3, 4), (2, 3, 4, 5)]:
        arr = rng.standard_normal(shape).astype(np.float32)
        p = tmp_path / "t.mten"
        T.save_mten(p, arr)
        back = T.load_mten(p)
        assert back.shape == arr.shape
        np.testing.assert_array_equal(back, arr)


def test_mten_header_layout(tmp_path):
    arr = np.arange(6, dtype=np.float32).reshape(2, 3)
    p = tmp_path / "t.mten"
    T.save_mten(p, arr)
    raw = p.read_bytes()
    assert raw[:4] == b"MTEN"
    rank, d0, d1 = struct.unpack("<III", raw[4:16])
    assert (rank, d0, d1) == (2, 2, 3)
    assert raw[16:] == arr.tobytes(order="C")


def test_mten_bad_magic_rejected(tmp_path):
    p = tmp_path / "junk.mten"
    p.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(T.TensorError, match="magic"):
        T.load_mten(p)


def test_mten_truncation_rejected(tmp_path):
    p = tmp_path / "t.mten"
    T.save_mten(p, np.ones((4, 4), np.float32))
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(T.TensorError, match="truncated"):
        T.load_mten(p)


def test_png_round_trip_within_quantization(tmp_path, rng):
    img = rng.random((16, 16, 3)).astype(np.float32)
    p = tmp_path / "img.png"
    T.save_png(p, img)
    back = T.load_png(p)
    assert back.shape == img.shape
    assert float(np.abs(back - img).max()) <= 0.5 / 255.0 + 1e-6


def test_png_of_quantized_image_is_exact(tmp_path):
    img = (np.arange(16 * 16 * 3).reshape(16, 16, 3) % 256) / 255.0
    p = tmp_path / "img.png"
    T.save_png(p, img.astype(np.float32))
    np.testing.assert_allclose(T.load_png(p), img, atol=1e-7)


def test_save_png_rejects_non_image(tmp_path):
    with pytest.raises(T.TensorError):
        T.save_png(tmp_path / "x.png", np.ones((4, 4)))


def test_precision_context_switches_and_restores():
    assert T.default_dtype() is np.float32
    with T.precision("float64"):
        assert T.default_dtype() is np.float64
        assert T.as_tensor([1, 2]).dtype == np.float64
    assert T.default_dtype() is np.float32
    with pytest.raises(T.TensorError):
        with T.precision("int32"):
            pass


def test_check_finite():
    T.check_finite(np.ones(3))
    with pytest.raises(T.TensorError, match="weights"):
        T.check_finite(np.array([1.0, np.inf]), what="weights")

import numpy as np
import pytest

from qsilk import LatentTensor, TensorFormatError, ValidationError, load_tensor, save_tensor


def test_load_zeros_roundtrip(tmp_path):
    path = tmp_path / "z.npy"
    np.save(path, np.zeros((2, 4, 8, 8), dtype=np.float32))
    t = load_tensor(path)
    assert t.shape == (2, 4, 8, 8)
    assert t.source_precision == "f32"
    assert not t.data.any()


def test_f16_widening_is_exact(tmp_path):
    path = tmp_path / "h.npy"
    np.save(path, np.full((1, 1, 1, 1), 1.5, dtype=np.float16))
    t = load_tensor(path)
    assert t.data.dtype == np.float32
    assert t.source_precision == "f16"
    assert float(t.data[0, 0, 0, 0]) == 1.5


def test_wrong_rank_rejected(tmp_path):
    path = tmp_path / "r3.npy"
    np.save(path, np.zeros((4, 8, 8), dtype=np.float32))
    with pytest.raises(TensorFormatError, match="rank 4"):
        load_tensor(path)


def test_wrong_dtype_rejected(tmp_path):
    path = tmp_path / "f8.npy"
    np.save(path, np.zeros((1, 1, 2, 2), dtype=np.float64))
    with pytest.raises(TensorFormatError, match="<f4 or <f2"):
        load_tensor(path)


def test_fortran_order_rejected(tmp_path):
    path = tmp_path / "fortran.npy"
    np.save(path, np.asfortranarray(np.ones((2, 2, 3, 3), dtype=np.float32)))
    with pytest.raises(TensorFormatError, match="C-order"):
        load_tensor(path)


def test_nonfinite_names_first_index(tmp_path):
    arr = np.zeros((1, 2, 3, 3), dtype=np.float32)
    arr[0, 1, 2, 0] = np.nan
    path = tmp_path / "bad.npy"
    np.save(path, arr)
    with pytest.raises(TensorFormatError, match=r"\(0, 1, 2, 0\)"):
        load_tensor(path)


def test_truncated_file_rejected(tmp_path):
    path = tmp_path / "trunc.npy"
    np.save(path, np.ones((1, 1, 4, 4), dtype=np.float32))
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(TensorFormatError, match="truncated"):
        load_tensor(path)


def test_not_npy_rejected(tmp_path):
    path = tmp_path / "junk.npy"
    path.write_bytes(b"definitely not numpy")
    with pytest.raises(TensorFormatError):
        load_tensor(path)


def test_f32_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(5)
    t = LatentTensor.from_array(rng.standard_normal((2, 3, 5, 7)).astype(np.float32))
    path = tmp_path / "rt.npy"
    save_tensor(t, path, "f32")
    back = load_tensor(path)
    assert np.array_equal(back.data, t.data)


def test_f16_save_within_rounding(tmp_path):
    t = LatentTensor.from_array(np.full((1, 1, 1, 1), 3.14159, dtype=np.float32))
    path = tmp_path / "h16.npy"
    save_tensor(t, path, "f16")
    back = load_tensor(path)
    v = float(back.data[0, 0, 0, 0])
    assert abs(v - 3.14159) <= 2 ** -10 * 3.14159
    assert back.source_precision == "f16"


def test_save_default_dtype_follows_source(tmp_path):
    np.save(tmp_path / "src.npy", np.full((1, 1, 1, 2), 0.25, dtype=np.float16))
    t = load_tensor(tmp_path / "src.npy")
    save_tensor(t, tmp_path / "out.npy")
    reloaded = np.load(tmp_path / "out.npy")
    assert reloaded.dtype == np.float16


def test_save_unwritable_path_errors(tmp_path):
    t = LatentTensor.from_array(np.zeros((1, 1, 1, 1), dtype=np.float32))
    with pytest.raises(OSError):
        save_tensor(t, tmp_path / "missing-dir" / "out.npy", "f32")


def test_from_array_rejects_nonfinite():
    arr = np.zeros((1, 1, 2, 2), dtype=np.float32)
    arr[0, 0, 0, 1] = np.inf
    with pytest.raises(TensorFormatError):
        LatentTensor.from_array(arr)


def test_constructor_validates_shape_and_dtype():
    with pytest.raises(ValidationError):
        LatentTensor(np.zeros((2, 2), dtype=np.float32))
    with pytest.raises(ValidationError):
        LatentTensor(np.zeros((1, 1, 2, 2), dtype=np.float64))
    with pytest.raises(ValidationError):
        LatentTensor(np.zeros((1, 0, 2, 2), dtype=np.float32))

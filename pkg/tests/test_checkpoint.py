"""Checkpoint container round-trips and corruption handling."""

import struct

import numpy as np
import pytest

from tacforce import autodiff as ad
from tacforce import checkpoint as ckpt
from tacforce.errors import FormatError


@pytest.fixture
def arrays(tmp_path):
    rng = np.random.default_rng(99)
    return {
        "w1": rng.normal(size=(4, 3)),
        "b1": rng.normal(size=(3,)),
        "scalar": np.array(2.5),
        "cube": rng.normal(size=(2, 2, 2)),
    }


class TestRoundTrip:
    def test_values_and_order_preserved(self, tmp_path, arrays):
        path = tmp_path / "m.fafw"
        ckpt.save_arrays(path, arrays)
        back = ckpt.load_arrays(path)
        assert list(back) == list(arrays)
        for k in arrays:
            np.testing.assert_array_equal(back[k], arrays[k])
            assert back[k].dtype == np.float64

    def test_bitwise_stable(self, tmp_path, arrays):
        p1 = tmp_path / "a.fafw"
        p2 = tmp_path / "b.fafw"
        ckpt.save_arrays(p1, arrays)
        ckpt.save_arrays(p2, ckpt.load_arrays(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_empty_checkpoint(self, tmp_path):
        path = tmp_path / "empty.fafw"
        ckpt.save_arrays(path, {})
        assert ckpt.load_arrays(path) == {}
        assert path.read_bytes() == b"FAFW" + struct.pack("<H", 1)

    def test_unicode_names(self, tmp_path):
        path = tmp_path / "u.fafw"
        ckpt.save_arrays(path, {"层.权重": np.ones(2)})
        back = ckpt.load_arrays(path)
        assert "层.权重" in back

    def test_model_helpers(self, tmp_path):
        path = tmp_path / "model.fafw"
        params = {"enc.w": ad.parameter(np.arange(6.0).reshape(2, 3)), "enc.b": ad.parameter(np.zeros(3))}
        ckpt.save_model(path, params, extra={"adam.t": np.array([3.0])})

        fresh = {"enc.w": ad.parameter(np.zeros((2, 3))), "enc.b": ad.parameter(np.ones(3))}
        leftover = ckpt.load_model(path, fresh)
        np.testing.assert_array_equal(fresh["enc.w"].data, params["enc.w"].data)
        np.testing.assert_array_equal(fresh["enc.b"].data, params["enc.b"].data)
        assert list(leftover) == ["adam.t"]

    def test_load_model_shape_mismatch(self, tmp_path):
        path = tmp_path / "model.fafw"
        ckpt.save_model(path, {"w": ad.parameter(np.zeros((2, 3)))})
        with pytest.raises(FormatError, match="shape mismatch"):
            ckpt.load_model(path, {"w": ad.parameter(np.zeros((3, 2)))})

    def test_load_model_missing_param(self, tmp_path):
        path = tmp_path / "model.fafw"
        ckpt.save_model(path, {"w": ad.parameter(np.zeros(2))})
        with pytest.raises(FormatError, match="missing"):
            ckpt.load_model(path, {"w": ad.parameter(np.zeros(2)), "v": ad.parameter(np.zeros(2))})


class TestCorruption:
    def test_bad_magic_offset_zero(self, tmp_path):
        path = tmp_path / "bad.fafw"
        path.write_bytes(b"NOPE" + b"\x00" * 10)
        with pytest.raises(FormatError) as exc:
            ckpt.load_arrays(path)
        assert exc.value.offset == 0

    def test_wrong_version(self, tmp_path):
        path = tmp_path / "v9.fafw"
        path.write_bytes(b"FAFW" + struct.pack("<H", 9))
        with pytest.raises(FormatError) as exc:
            ckpt.load_arrays(path)
        assert exc.value.offset == 4

    def test_truncated_data_reports_offset(self, tmp_path, arrays):
        path = tmp_path / "t.fafw"
        ckpt.save_arrays(path, {"w": np.ones((4, 4))})
        blob = path.read_bytes()
        cut = path.with_suffix(".cut")
        cut.write_bytes(blob[: len(blob) - 16])
        with pytest.raises(FormatError) as exc:
            ckpt.load_arrays(cut)
        assert exc.value.offset is not None
        assert "truncated" in str(exc.value)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "h.fafw"
        path.write_bytes(b"FAFW" + struct.pack("<H", 1) + b"\x05")
        with pytest.raises(FormatError, match="truncated"):
            ckpt.load_arrays(path)

    def test_truncated_dims(self, tmp_path):
        path = tmp_path / "d.fafw"
        body = struct.pack("<H", 1) + b"w" + struct.pack("<B", 2) + struct.pack("<I", 3)
        path.write_bytes(b"FAFW" + struct.pack("<H", 1) + body)
        with pytest.raises(FormatError, match="truncated dims"):
            ckpt.load_arrays(path)

"""File-format tests: round trips, corruption handling, pinned golden bytes."""

import json
import os
import struct

import numpy as np
import numpy.testing as npt
import pytest

from nsktr import (
    Dataset,
    DenseTensor,
    FileFormatError,
    KruskalModel,
    ModeRegConfig,
    read_dataset,
    read_model,
    read_tensor,
    write_dataset,
    write_model,
    write_tensor,
)


class TestTensorFile:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        t = DenseTensor((3, 4, 5), rng.standard_normal(60))
        path = tmp_path / "t.nskt"
        write_tensor(path, t)
        back = read_tensor(path)
        assert back.dims == t.dims
        npt.assert_array_equal(back.values, t.values)

    def test_corrupt_magic(self, tmp_path):
        path = tmp_path / "bad.nskt"
        path.write_bytes(b"XXXX" + b"\x00" * 32)
        with pytest.raises(FileFormatError, match="not a tensor file"):
            read_tensor(path)

    def test_version_mismatch(self, tmp_path):
        t = DenseTensor((2,), [1.0, 2.0])
        path = tmp_path / "v.nskt"
        write_tensor(path, t)
        blob = bytearray(path.read_bytes())
        blob[4:8] = struct.pack("<I", 99)
        path.write_bytes(bytes(blob))
        with pytest.raises(FileFormatError, match="version"):
            read_tensor(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "trunc.nskt"
        header = (b"NSKT" + struct.pack("<II", 1, 2)
                  + np.asarray([2, 2], dtype="<u8").tobytes())
        path.write_bytes(header + np.asarray([1.0, 2.0, 3.0], "<f8").tobytes())
        with pytest.raises(FileFormatError, match="payload"):
            read_tensor(path)

    def test_dims_overflow(self, tmp_path):
        path = tmp_path / "huge.nskt"
        header = (b"NSKT" + struct.pack("<II", 1, 3)
                  + np.asarray([2 ** 40, 2 ** 40, 2], dtype="<u8").tobytes())
        path.write_bytes(header)
        with pytest.raises(FileFormatError, match="overflow"):
            read_tensor(path)

    def test_golden_bytes(self, tmp_path):
        # byte layout is pinned: little-endian magic/version/dims then
        # column-major float64 payload
        t = DenseTensor((2, 2), [1.0, 2.0, 3.0, 4.0])
        path = tmp_path / "g.nskt"
        write_tensor(path, t)
        expect = (b"NSKT"
                  + struct.pack("<II", 1, 2)
                  + struct.pack("<QQ", 2, 2)
                  + struct.pack("<4d", 1.0, 2.0, 3.0, 4.0))
        assert path.read_bytes() == expect


class TestModelFile:
    def _model(self):
        return KruskalModel([np.array([[1.0, 2.0], [3.0, 4.0]]),
                             np.array([[5.0, 6.0], [7.0, 8.0], [9.0, 10.0]])])

    def test_round_trip(self, tmp_path):
        model = self._model()
        cfgs = [ModeRegConfig(1.0, 2.0, 3.0, True), ModeRegConfig(0.5)]
        meta = {"seed": 7, "iterations": 13, "final_objective": 2.5,
                "loss": "linear"}
        path = tmp_path / "m.nskm"
        write_model(path, model, cfgs, meta)
        back, back_cfgs, back_meta = read_model(path)
        assert back.dims == model.dims and back.rank == 2
        for a, b in zip(back.factors, model.factors):
            npt.assert_array_equal(a, b)
        assert back_cfgs == cfgs
        assert back_meta == meta

    def test_golden_bytes(self, tmp_path):
        model = KruskalModel([np.array([[1.0], [2.0]])])
        path = tmp_path / "g.nskm"
        write_model(path, model, [ModeRegConfig(0.5, 0.0, 0.25, True)], {})
        expect = (b"NSKM"
                  + struct.pack("<III", 1, 1, 1)
                  + struct.pack("<Q", 2)
                  + struct.pack("<dddB", 0.5, 0.0, 0.25, 1)
                  + struct.pack("<2d", 1.0, 2.0)
                  + struct.pack("<I", 2) + b"{}")
        assert path.read_bytes() == expect

    def test_corrupt_magic(self, tmp_path):
        path = tmp_path / "bad.nskm"
        path.write_bytes(b"ZZZZ" + b"\x00" * 64)
        with pytest.raises(FileFormatError, match="not a model file"):
            read_model(path)

    def test_truncated_factor(self, tmp_path):
        model = self._model()
        path = tmp_path / "t.nskm"
        write_model(path, model)
        blob = path.read_bytes()
        path.write_bytes(blob[:len(blob) - 30])
        with pytest.raises(FileFormatError):
            read_model(path)

    def test_factors_are_column_major(self, tmp_path):
        model = KruskalModel([np.array([[1.0, 3.0], [2.0, 4.0]])])
        path = tmp_path / "cm.nskm"
        write_model(path, model)
        blob = path.read_bytes()
        # header: 4 + 12 + 8 bytes, penalties: 25 bytes, then the factor
        vals = struct.unpack_from("<4d", blob, 4 + 12 + 8 + 25)
        assert vals == (1.0, 2.0, 3.0, 4.0)


class TestDatasetDirectory:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        data = Dataset(rng.standard_normal((4, 3, 2)), rng.standard_normal(4))
        d = tmp_path / "ds"
        write_dataset(d, data, meta={"snr_db": 20.0})
        back = read_dataset(d)
        assert back.loss == "linear"
        npt.assert_array_equal(back.covariates, data.covariates)
        npt.assert_array_equal(back.responses, data.responses)
        meta = json.loads((d / "meta.json").read_text())
        assert meta["snr_db"] == 20.0

    def test_signal_stored_alongside(self, tmp_path):
        rng = np.random.default_rng(2)
        data = Dataset(rng.standard_normal((2, 3, 3)), np.ones(2))
        sig = DenseTensor.from_array(rng.random((3, 3)))
        d = tmp_path / "ds"
        write_dataset(d, data, signal=sig)
        back = read_tensor(d / "signal.nskt")
        npt.assert_array_equal(back.values, sig.values)

    def test_missing_responses(self, tmp_path):
        d = tmp_path / "empty"
        os.makedirs(d)
        with pytest.raises(FileFormatError, match="responses"):
            read_dataset(d)

    def test_logistic_loss_tag_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        y = np.where(rng.random(4) < 0.5, 1.0, -1.0)
        data = Dataset(rng.standard_normal((4, 2, 2)), y, loss="logistic")
        d = tmp_path / "ds"
        write_dataset(d, data)
        assert read_dataset(d).loss == "logistic"

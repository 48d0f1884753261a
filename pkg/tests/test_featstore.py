import struct
import zlib

import numpy as np
import pytest

from klda.batch import FeatureBatch
from klda.errors import (
    CrcMismatch,
    FormatError,
    MagicMismatch,
    NonFiniteData,
    TruncatedFile,
    VersionMismatch,
)
from klda.featstore import (
    DTYPE_F32,
    DTYPE_F64,
    DatasetManifest,
    SplitRef,
    decode_features,
    encode_features,
    expected_file_size,
    load_manifest,
    load_split,
    read_features,
    save_manifest,
    validate_manifest,
    write_features,
)


def small_batch(seed=0, n=3, d=4):
    rng = np.random.default_rng(seed)
    values = rng.standard_normal((n, d)).astype(np.float32).astype(np.float64)
    labels = rng.integers(0, 3, n)
    return FeatureBatch(values, labels)


class TestRoundTrip:
    def test_f32_bit_exact(self, tmp_path):
        batch = small_batch()
        path = tmp_path / "b.kldf"
        write_features(batch, path, DTYPE_F32)
        back = read_features(path)
        # payload held as f32 on disk; source values are f32-representable
        assert np.array_equal(back.values, batch.values)
        assert np.array_equal(back.labels, batch.labels)

    def test_f64_bit_exact(self, tmp_path):
        rng = np.random.default_rng(5)
        batch = FeatureBatch(rng.standard_normal((7, 5)), rng.integers(0, 9, 7))
        path = tmp_path / "b64.kldf"
        write_features(batch, path, DTYPE_F64)
        back = read_features(path)
        assert np.array_equal(back.values, batch.values)

    def test_f32_quantizes_f64_payload(self, tmp_path):
        values = np.array([[np.pi, np.e]])
        path = tmp_path / "q.kldf"
        write_features(FeatureBatch(values), path, DTYPE_F32)
        back = read_features(path)
        assert np.array_equal(back.values, values.astype(np.float32).astype(np.float64))
        assert not np.array_equal(back.values, values)

    def test_declared_size_formula(self, tmp_path):
        n, d = 10_000, 768
        rng = np.random.default_rng(1)
        batch = FeatureBatch(
            rng.standard_normal((n, d)).astype(np.float32), rng.integers(0, 150, n)
        )
        path = tmp_path / "clinc_sized.kldf"
        write_features(batch, path, DTYPE_F32)
        assert path.stat().st_size == 24 + n * d * 4 + n * 4 + 4
        assert path.stat().st_size == expected_file_size(n, d, DTYPE_F32)

    def test_empty_batch_roundtrip(self):
        blob = encode_features(FeatureBatch(np.empty((0, 4)), np.empty(0, dtype=int)))
        back, code = decode_features(blob)
        assert back.n_rows == 0 and back.width == 4 and code == DTYPE_F32


class TestMalformedInputs:
    def test_single_byte_flip_always_detected(self):
        blob = encode_features(small_batch(), DTYPE_F32)
        for position in range(len(blob)):
            corrupted = bytearray(blob)
            corrupted[position] ^= 0xFF
            with pytest.raises(FormatError):
                decode_features(bytes(corrupted))

    def test_error_kinds_distinct(self):
        blob = encode_features(small_batch(), DTYPE_F32)
        with pytest.raises(MagicMismatch):
            decode_features(b"NOPE" + blob[4:])
        bad_version = bytearray(blob)
        bad_version[4] = 99
        with pytest.raises(VersionMismatch):
            decode_features(bytes(bad_version))
        with pytest.raises(TruncatedFile):
            decode_features(blob[:-5])
        flipped = bytearray(blob)
        flipped[len(blob) // 2] ^= 0x10
        with pytest.raises(CrcMismatch):
            decode_features(bytes(flipped))

    def test_nonfinite_payload_rejected(self):
        # hand-assemble a file whose CRC is valid but payload holds a NaN
        n, d = 1, 2
        header = b"KLDF" + struct.pack("<IQII", 1, n, d, DTYPE_F64)
        payload = np.array([np.nan, 1.0]).astype("<f8").tobytes()
        labels = np.zeros(n, dtype="<i4").tobytes()
        body = header + payload + labels
        blob = body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)
        with pytest.raises(NonFiniteData):
            decode_features(blob)

    def test_writer_rejects_nonfinite(self):
        from klda.errors import DataError

        with pytest.raises(DataError):
            FeatureBatch(np.array([[np.inf]]), np.array([0]))

    def test_trailing_bytes_rejected(self):
        blob = encode_features(small_batch())
        with pytest.raises(FormatError):
            decode_features(blob + b"x")

    def test_unknown_dtype_code(self):
        with pytest.raises(FormatError):
            encode_features(small_batch(), 7)


def write_dataset(tmp_path, num_classes=3, rows=30, dim=4, label_shift=0):
    rng = np.random.default_rng(0)
    batch = FeatureBatch(
        rng.standard_normal((rows, dim)),
        rng.integers(0, num_classes, rows) + label_shift,
    )
    write_features(batch, tmp_path / "train.kldf")
    write_features(batch, tmp_path / "test.kldf")
    manifest = DatasetManifest(
        dataset="toy",
        num_classes=num_classes,
        class_names={i: f"class_{i}" for i in range(num_classes)},
        splits={
            "train": SplitRef("train.kldf", rows),
            "test": SplitRef("test.kldf", rows),
        },
        provenance={"model": "test", "pooling": "none", "extraction_seed": 0},
    )
    save_manifest(manifest, tmp_path / "manifest.json")
    return tmp_path / "manifest.json"


class TestManifest:
    def test_roundtrip_and_load_split(self, tmp_path):
        path = write_dataset(tmp_path)
        manifest = load_manifest(path)
        assert manifest.dataset == "toy"
        assert manifest.num_classes == 3
        assert load_split(path, "train").n_rows == 30

    def test_valid_manifest_empty_diagnostics(self, tmp_path):
        path = write_dataset(tmp_path)
        assert validate_manifest(path) == []

    def test_missing_file_reported(self, tmp_path):
        path = write_dataset(tmp_path)
        (tmp_path / "test.kldf").unlink()
        problems = validate_manifest(path)
        assert any("does not exist" in p for p in problems)

    def test_label_out_of_range_reported(self, tmp_path):
        path = write_dataset(tmp_path, num_classes=3, label_shift=1)
        problems = validate_manifest(path)
        assert any("out of range" in p or "missing from the class table" in p for p in problems)

    def test_row_count_mismatch_reported(self, tmp_path):
        path = write_dataset(tmp_path)
        manifest = load_manifest(path)
        bad = DatasetManifest(
            dataset=manifest.dataset,
            num_classes=manifest.num_classes,
            class_names=manifest.class_names,
            splits={"train": SplitRef("train.kldf", 999), "test": manifest.splits["test"]},
            provenance=manifest.provenance,
        )
        save_manifest(bad, tmp_path / "manifest.json")
        problems = validate_manifest(tmp_path / "manifest.json")
        assert any("999" in p for p in problems)

    def test_corrupt_feature_file_reported(self, tmp_path):
        path = write_dataset(tmp_path)
        raw = bytearray((tmp_path / "train.kldf").read_bytes())
        raw[40] ^= 0xFF
        (tmp_path / "train.kldf").write_bytes(bytes(raw))
        problems = validate_manifest(path)
        assert any("unreadable" in p for p in problems)

    def test_unparseable_manifest_raises(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(FormatError):
            load_manifest(bad)

    def test_intent_scale_manifest_valid(self, tmp_path):
        # 150-class layout: one row per class in each split
        rng = np.random.default_rng(2)
        labels = np.arange(150)
        batch = FeatureBatch(rng.standard_normal((150, 4)), labels)
        write_features(batch, tmp_path / "train.kldf")
        write_features(batch, tmp_path / "test.kldf")
        manifest = DatasetManifest(
            dataset="intents",
            num_classes=150,
            class_names={i: f"intent_{i}" for i in range(150)},
            splits={
                "train": SplitRef("train.kldf", 150),
                "test": SplitRef("test.kldf", 150),
            },
        )
        save_manifest(manifest, tmp_path / "manifest.json")
        assert validate_manifest(tmp_path / "manifest.json") == []

    def test_class_table_size_mismatch(self, tmp_path):
        path = write_dataset(tmp_path)
        manifest = load_manifest(path)
        bad = DatasetManifest(
            dataset="toy",
            num_classes=5,
            class_names=manifest.class_names,
            splits=manifest.splits,
        )
        save_manifest(bad, tmp_path / "manifest.json")
        problems = validate_manifest(tmp_path / "manifest.json")
        assert any("class table" in p for p in problems)

import json
import os

import numpy as np
import pytest

from fmextract.runner import extract
from fmextract.spec import ExtractionError, ExtractionSpec, load_spec


def text_spec(base, out="features", **overrides):
    kwargs = dict(
        model="tiny-test-model",
        family="text",
        pooling="mean",
        dataset="toytext",
        source_type="jsonl",
        split_paths={"train": "train.jsonl", "test": "test.jsonl"},
        output_dir=out,
        batch_size=4,
        base_dir=str(base),
    )
    kwargs.update(overrides)
    return ExtractionSpec(**kwargs)


class TestTextExtraction:
    def test_end_to_end(self, text_dataset, tiny_text_backend):
        result = extract(text_spec(text_dataset), backend=tiny_text_backend)
        assert result.width == 16
        assert result.split_rows == {"train": 12, "test": 6}
        manifest = json.loads(open(result.manifest_path).read())
        assert manifest["dataset"] == "toytext"
        assert manifest["num_classes"] == 3
        assert manifest["class_names"]["0"] == "intent_0"
        assert manifest["provenance"]["model"] == "tiny-test-model"
        assert "mean" in manifest["provenance"]["pooling"]
        for split, rows in result.split_rows.items():
            assert manifest["splits"][split]["rows"] == rows
            assert os.path.exists(result.split_files[split])

    def test_deterministic_reruns(self, text_dataset, tiny_text_backend):
        a = extract(text_spec(text_dataset, out="a"), backend=tiny_text_backend)
        b = extract(text_spec(text_dataset, out="b"), backend=tiny_text_backend)
        for split in ("train", "test"):
            assert (
                open(a.split_files[split], "rb").read() == open(b.split_files[split], "rb").read()
            )

    def test_engine_accepts_output(self, text_dataset, tiny_text_backend):
        klda_featstore = pytest.importorskip("klda.featstore")
        result = extract(text_spec(text_dataset), backend=tiny_text_backend)
        assert klda_featstore.validate_manifest(result.manifest_path) == []
        batch = klda_featstore.read_features(result.split_files["train"])
        assert batch.width == 16

    def test_empty_split_fails_and_cleans_up(self, text_dataset, tiny_text_backend):
        (text_dataset / "train.jsonl").write_text("")
        out_dir = text_dataset / "features"
        with pytest.raises(ExtractionError, match="no samples"):
            extract(text_spec(text_dataset), backend=tiny_text_backend)
        assert not list(out_dir.glob("*.kldf"))
        assert not (out_dir / "manifest.json").exists()

    def test_width_mismatch_fails_and_cleans_up(self, text_dataset, tiny_text_backend):
        out_dir = text_dataset / "features"
        with pytest.raises(ExtractionError, match="expected"):
            extract(text_spec(text_dataset, expected_width=768), backend=tiny_text_backend)
        assert not list(out_dir.glob("*.kldf"))

    def test_mean_pooling_ignores_padding(self, tiny_text_backend):
        import torch

        from fmextract.backends import masked_mean

        hidden = torch.tensor([[[1.0, 2.0], [3.0, 4.0], [99.0, 99.0]]])
        mask = torch.tensor([[1, 1, 0]])
        pooled = masked_mean(hidden, mask)
        assert torch.allclose(pooled, torch.tensor([[2.0, 3.0]]))


class TestVisionExtraction:
    @pytest.fixture
    def image_dataset(self, tmp_path):
        from PIL import Image

        rng = np.random.default_rng(0)
        for split, per_class in (("train", 4), ("test", 2)):
            for cls in ("plane", "ship"):
                directory = tmp_path / split / cls
                directory.mkdir(parents=True)
                for i in range(per_class):
                    arr = rng.integers(0, 255, (40, 48, 3), dtype=np.uint8)
                    Image.fromarray(arr).save(directory / f"img_{i}.png")
        return tmp_path

    def test_end_to_end(self, image_dataset, tiny_vision_backend):
        spec = ExtractionSpec(
            model="tiny-vit",
            family="vision",
            pooling="class-token",
            dataset="toyimg",
            source_type="image-folder",
            split_paths={"train": "train", "test": "test"},
            output_dir="features",
            batch_size=3,
            image_size=32,
            base_dir=str(image_dataset),
        )
        result = extract(spec, backend=tiny_vision_backend)
        assert result.width == 24
        assert result.split_rows == {"train": 8, "test": 4}
        manifest = json.loads(open(result.manifest_path).read())
        assert manifest["class_names"] == {"0": "plane", "1": "ship"}
        assert "class-token" in manifest["provenance"]["pooling"]

    def test_class_token_is_first_position(self):
        import torch

        from fmextract.backends import first_token

        hidden = torch.arange(24, dtype=torch.float32).reshape(2, 3, 4)
        np.testing.assert_array_equal(first_token(hidden).numpy(), hidden[:, 0].numpy())


class TestSpec:
    def test_load_roundtrip(self, tmp_path):
        doc = {
            "model": "facebook/bart-base",
            "family": "text",
            "pooling": "mean",
            "dataset": "clinc",
            "source": {"type": "jsonl", "splits": {"train": "t.jsonl"}},
            "output_dir": "out",
            "expected_width": 768,
        }
        path = tmp_path / "spec.json"
        path.write_text(json.dumps(doc))
        spec = load_spec(path)
        assert spec.model == "facebook/bart-base"
        assert spec.expected_width == 768
        assert spec.split_path("train") == str(tmp_path / "t.jsonl")

    def test_bad_values_rejected(self):
        with pytest.raises(ExtractionError):
            text_spec(".", family="audio")
        with pytest.raises(ExtractionError):
            text_spec(".", pooling="max")
        with pytest.raises(ExtractionError):
            text_spec(".", family="vision")  # vision requires class-token pooling
        with pytest.raises(ExtractionError):
            text_spec(".", split_paths={})

    def test_unreadable_spec(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{")
        with pytest.raises(ExtractionError):
            load_spec(path)


class TestCli:
    def test_cli_runs_spec(self, text_dataset, tiny_text_backend, monkeypatch, capsys):
        import fmextract.runner as runner_module
        from fmextract.cli import main

        monkeypatch.setattr(runner_module, "load_backend", lambda spec: tiny_text_backend)
        spec_doc = {
            "model": "tiny-test-model",
            "family": "text",
            "pooling": "mean",
            "dataset": "toytext",
            "source": {
                "type": "jsonl",
                "splits": {"train": "train.jsonl", "test": "test.jsonl"},
            },
            "output_dir": "cli_out",
            "batch_size": 4,
        }
        spec_path = text_dataset / "spec.json"
        spec_path.write_text(json.dumps(spec_doc))
        assert main([str(spec_path)]) == 0
        out = capsys.readouterr().out
        assert "width=16" in out
        assert (text_dataset / "cli_out" / "manifest.json").exists()

    def test_cli_reports_failure(self, tmp_path, capsys):
        from fmextract.cli import main

        bad = tmp_path / "missing.json"
        assert main([str(bad)]) == 1
        assert "error" in capsys.readouterr().err

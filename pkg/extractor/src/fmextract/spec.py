"""Extraction job description, loaded from a JSON file.

Example:

    {
      "model": "facebook/bart-base",
      "family": "text",
      "pooling": "mean",
      "batch_size": 32,
      "device": "cpu",
      "dataset": "clinc",
      "source": {"type": "jsonl",
                 "splits": {"train": "clinc_train.jsonl", "test": "clinc_test.jsonl"}},
      "output_dir": "features/clinc-bart",
      "max_length": 128,
      "image_size": 224,
      "expected_width": 768,
      "seed": 0
    }

Text sources are JSONL files with one {"text": ..., "label": int} object per
line (optional "label_name"). Image sources use {"type": "image-folder",
"splits": {...}} where each split path is a directory of class-named
subdirectories. Relative paths resolve against the spec file's directory.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field


class ExtractionError(Exception):
    """Any failure while producing feature files."""


POOLINGS = ("mean", "cls", "class-token")
FAMILIES = ("text", "vision")
SOURCE_TYPES = ("jsonl", "image-folder")


@dataclass(frozen=True)
class ExtractionSpec:
    model: str
    family: str
    pooling: str
    dataset: str
    source_type: str
    split_paths: dict[str, str]
    output_dir: str
    batch_size: int = 32
    device: str = "cpu"
    max_length: int = 128
    image_size: int = 224
    expected_width: int | None = None
    seed: int = 0
    base_dir: str = "."

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ExtractionError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.pooling not in POOLINGS:
            raise ExtractionError(f"pooling must be one of {POOLINGS}, got {self.pooling!r}")
        if self.source_type not in SOURCE_TYPES:
            raise ExtractionError(f"source type must be one of {SOURCE_TYPES}, got {self.source_type!r}")
        if self.family == "vision" and self.pooling != "class-token":
            raise ExtractionError("vision models pool via the class token")
        if self.batch_size < 1:
            raise ExtractionError("batch_size must be >= 1")
        if not self.split_paths:
            raise ExtractionError("at least one split is required")

    def split_path(self, split: str) -> str:
        p = self.split_paths[split]
        return p if os.path.isabs(p) else os.path.join(self.base_dir, p)

    def resolved_output_dir(self) -> str:
        p = self.output_dir
        return p if os.path.isabs(p) else os.path.join(self.base_dir, p)


def load_spec(path) -> ExtractionSpec:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        source = doc["source"]
        return ExtractionSpec(
            model=doc["model"],
            family=doc.get("family", "text"),
            pooling=doc.get("pooling", "mean" if doc.get("family", "text") == "text" else "class-token"),
            dataset=doc["dataset"],
            source_type=source["type"],
            split_paths={str(k): str(v) for k, v in source["splits"].items()},
            output_dir=doc["output_dir"],
            batch_size=int(doc.get("batch_size", 32)),
            device=str(doc.get("device", "cpu")),
            max_length=int(doc.get("max_length", 128)),
            image_size=int(doc.get("image_size", 224)),
            expected_width=doc.get("expected_width"),
            seed=int(doc.get("seed", 0)),
            base_dir=os.path.dirname(os.fspath(path)) or ".",
        )
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ExtractionError(f"unreadable extraction spec {path}: {exc}") from exc

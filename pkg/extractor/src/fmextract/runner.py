"""Drive a backend over dataset splits and emit feature files + manifest."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .backends import load_backend
from .kldf import write_kldf, write_manifest
from .spec import ExtractionError, ExtractionSpec


@dataclass(frozen=True)
class ExtractionResult:
    manifest_path: str
    split_files: dict[str, str]
    split_rows: dict[str, int]
    width: int


def _load_jsonl(path) -> tuple[list[str], list[int], dict[int, str]]:
    items, labels, names = [], [], {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                doc = json.loads(line)
                text, label = doc["text"], int(doc["label"])
                if label < 0:
                    raise ValueError(f"negative label at line {line_no}")
                items.append(text)
                labels.append(label)
                if "label_name" in doc:
                    names[label] = str(doc["label_name"])
    except (OSError, ValueError, KeyError) as exc:
        raise ExtractionError(f"bad jsonl source {path}: {exc}") from exc
    return items, labels, names


def _load_image_folder(path) -> tuple[list, list[int], dict[int, str]]:
    from PIL import Image

    if not os.path.isdir(path):
        raise ExtractionError(f"image folder {path} does not exist")
    class_dirs = sorted(d for d in os.listdir(path) if os.path.isdir(os.path.join(path, d)))
    items, labels, names = [], [], {}
    for label, name in enumerate(class_dirs):
        names[label] = name
        directory = os.path.join(path, name)
        for fname in sorted(os.listdir(directory)):
            full = os.path.join(directory, fname)
            try:
                with Image.open(full) as img:
                    items.append(img.copy())
            except OSError as exc:
                raise ExtractionError(f"unreadable image {full}: {exc}") from exc
            labels.append(label)
    return items, labels, names


def _load_split(spec: ExtractionSpec, split: str):
    path = spec.split_path(split)
    if spec.source_type == "jsonl":
        return _load_jsonl(path)
    return _load_image_folder(path)


def extract(spec: ExtractionSpec, backend=None) -> ExtractionResult:
    """Run the model over every split; leaves no partial outputs on failure.

    A prebuilt backend may be injected (tests use a locally constructed
    model); by default the checkpoint named in the spec is loaded.
    """
    if backend is None:
        backend = load_backend(spec)

    out_dir = spec.resolved_output_dir()
    os.makedirs(out_dir, exist_ok=True)
    written: list[str] = []
    split_files: dict[str, str] = {}
    split_rows: dict[str, int] = {}
    class_names: dict[int, str] = {}
    all_labels: set[int] = set()
    try:
        for split in sorted(spec.split_paths):
            items, labels, names = _load_split(spec, split)
            if not items:
                raise ExtractionError(f"split {split!r} has no samples")
            features = backend.encode(items)
            if features.shape[0] != len(labels):
                raise ExtractionError(
                    f"backend returned {features.shape[0]} rows for {len(labels)} samples"
                )
            if features.shape[1] != backend.hidden_size:
                raise ExtractionError(
                    f"pooled width {features.shape[1]} != model hidden size {backend.hidden_size}"
                )
            if spec.expected_width is not None and features.shape[1] != spec.expected_width:
                raise ExtractionError(
                    f"width {features.shape[1]} != expected {spec.expected_width}"
                )
            rel = f"{split}.kldf"
            write_kldf(features, np.asarray(labels), os.path.join(out_dir, rel))
            written.append(os.path.join(out_dir, rel))
            split_files[split] = rel
            split_rows[split] = len(labels)
            class_names.update(names)
            all_labels.update(labels)

        for label in sorted(all_labels):
            class_names.setdefault(label, f"class_{label}")

        manifest_path = os.path.join(out_dir, "manifest.json")
        write_manifest(
            manifest_path,
            dataset=spec.dataset,
            class_names=class_names,
            splits={s: (split_files[s], split_rows[s]) for s in split_files},
            provenance={
                "model": spec.model,
                "pooling": _pooling_descriptor(spec),
                "extraction_seed": spec.seed,
                "batch_size": spec.batch_size,
            },
        )
        written.append(manifest_path)
    except BaseException:
        for path in written:
            if os.path.exists(path):
                os.unlink(path)
        raise
    return ExtractionResult(
        manifest_path=manifest_path,
        split_files={s: os.path.join(out_dir, rel) for s, rel in split_files.items()},
        split_rows=split_rows,
        width=backend.hidden_size,
    )


def _pooling_descriptor(spec: ExtractionSpec) -> str:
    if spec.family == "text":
        layer = "encoder-final" if spec.pooling == "mean" else "final"
        return f"{spec.pooling}-over-tokens@{layer}" if spec.pooling == "mean" else f"{spec.pooling}@{layer}"
    return f"class-token@final,resize-center-crop-{spec.image_size}"

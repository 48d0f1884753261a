import json

import pytest
import torch

VOCAB = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]",
    "the", "cat", "sat", "on", "mat", "dog", "ran", "fast", "bird", "flew", "away",
]


@pytest.fixture(scope="session")
def tiny_text_backend(tmp_path_factory):
    from transformers import BertConfig, BertModel, BertTokenizerFast

    from fmextract.backends import TextBackend

    vocab_file = tmp_path_factory.mktemp("vocab") / "vocab.txt"
    vocab_file.write_text("\n".join(VOCAB))
    tokenizer = BertTokenizerFast(vocab_file=str(vocab_file), do_lower_case=True)
    torch.manual_seed(1234)
    config = BertConfig(
        vocab_size=len(VOCAB),
        hidden_size=16,
        num_hidden_layers=1,
        num_attention_heads=2,
        intermediate_size=32,
        max_position_embeddings=32,
    )
    model = BertModel(config)
    return TextBackend(model, tokenizer, pooling="mean", max_length=16, batch_size=4, device="cpu")


@pytest.fixture(scope="session")
def tiny_vision_backend():
    from transformers import ViTConfig, ViTModel

    from fmextract.backends import ImagePreprocessor, VisionBackend

    torch.manual_seed(99)
    config = ViTConfig(
        image_size=32,
        patch_size=16,
        hidden_size=24,
        num_hidden_layers=1,
        num_attention_heads=2,
        intermediate_size=48,
        num_channels=3,
    )
    model = ViTModel(config)
    return VisionBackend(model, ImagePreprocessor(32), batch_size=3, device="cpu")


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


@pytest.fixture
def text_dataset(tmp_path):
    texts = ["the cat sat on mat", "the dog ran fast", "bird flew away", "the mat sat"]
    train = [
        {"text": texts[i % 4] + f" {VOCAB[4 + i % 6]}", "label": i % 3, "label_name": f"intent_{i % 3}"}
        for i in range(12)
    ]
    test = [{"text": texts[(i + 1) % 4], "label": i % 3} for i in range(6)]
    write_jsonl(tmp_path / "train.jsonl", train)
    write_jsonl(tmp_path / "test.jsonl", test)
    return tmp_path

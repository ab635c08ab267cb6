"""Offline fixtures: a tiny locally-saved transformer, seeded backbone
weights, and small synthetic images.  Pretrained downloads are unavailable
in sandboxed runs, so everything here is built on the fly."""

from __future__ import annotations

import json
import os

import numpy as np
import pytest
import torch


@pytest.fixture(scope="session")
def tiny_text_model(tmp_path_factory):
    """A 2-block transformer with a toy vocabulary, saved like a hub model."""
    from transformers import BertConfig, BertModel, BertTokenizer

    root = tmp_path_factory.mktemp("tiny-bert")
    vocab = [
        "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
        "the", "president", "signed", "new", "climate", "bill", "into", "law", "on", "tuesday",
        "head", "of", "state", "enacted", "fresh", "legislation",
        "my", "cat", "refuses", "to", "eat", "breakfast", "unless", "i", "warm", "it", "up",
        "quick", "brown", "fox", "story", "shared", "network", "today", "source", "please",
    ]
    vocab_path = root / "vocab.txt"
    vocab_path.write_text("\n".join(vocab))
    tokenizer = BertTokenizer(vocab_file=str(vocab_path), model_max_length=24)
    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=64,
    )
    torch.manual_seed(0)
    model = BertModel(config)
    model.save_pretrained(root)
    tokenizer.save_pretrained(root)
    return str(root)


@pytest.fixture(scope="session")
def backbone_weights(tmp_path_factory):
    """Seeded random state dict for the image backbone (no download)."""
    import torchvision.models as models

    torch.manual_seed(1)
    backbone = models.resnet50(weights=None)
    path = tmp_path_factory.mktemp("weights") / "backbone.pth"
    torch.save(backbone.state_dict(), path)
    return str(path)


@pytest.fixture(scope="session")
def image_dir(tmp_path_factory):
    from PIL import Image

    root = tmp_path_factory.mktemp("images")
    rng = np.random.default_rng(2)
    gradient = np.linspace(0, 255, 64 * 64, dtype=np.uint8).reshape(64, 64)
    Image.fromarray(np.stack([gradient] * 3, axis=-1)).save(root / "img_a.png")
    noise = rng.integers(0, 256, (64, 64, 3), dtype=np.uint8)
    Image.fromarray(noise).save(root / "img_b.png")
    (root / "broken.png").write_text("this is not an image")
    return str(root)


@pytest.fixture
def dataset_path(tmp_path):
    rows = [
        {"id": "r1", "label": "real", "text": "the president signed the new climate bill",
         "comments": ["source please", "seen the story"], "image": "img_a.png"},
        {"id": "r2", "label": "fake", "text": "my cat refuses to eat breakfast",
         "comments": [], "image": "img_b.png"},
        {"id": "r3", "label": "real", "text": "fresh climate legislation enacted on tuesday",
         "comments": ["warm it up"], "image": None},
        {"id": "r4", "label": "fake", "text": "the quick brown fox story shared today",
         "comments": [], "image": "img_a.png"},
        {"id": "r5", "label": "real", "text": "breakfast network story", "comments": [], "image": "broken.png"},
    ]
    path = tmp_path / "data.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    (tmp_path / "data.jsonl.labels").write_text("real\nfake\n")
    return str(path)


def real_text_model():
    """A genuinely pretrained text encoder, when one is reachable locally."""
    from transformers import AutoConfig

    from exporter.encoders import DEFAULT_TEXT_MODEL

    name = os.environ.get("MAGIC_EXPORT_TEXT_MODEL", DEFAULT_TEXT_MODEL)
    try:
        AutoConfig.from_pretrained(name, local_files_only=True)
        return name
    except Exception:
        return None

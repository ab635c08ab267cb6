"""Synthetic dataset generators for exercising the pipeline end to end.

Two families: records whose text vocabulary separates the classes (training
sanity checks), and records whose only class signal is the image reference
(ablation probes).  Both are deterministic under a seed.
"""

from __future__ import annotations

import json

import numpy as np

from .graphs import MultimodalRecord

DEFAULT_LABELS = ["real", "fake"]


def separable_records(
    n: int,
    seed: int = 0,
    num_classes: int = 2,
    words_per_post: int = 6,
    comments_per_record: int = 2,
) -> list[MultimodalRecord]:
    """Records whose posts and comments draw from disjoint per-class vocabularies."""
    rng = np.random.default_rng(seed)
    vocab = {c: [f"topic{c}word{k}" for k in range(30)] for c in range(num_classes)}

    def sentence(label: int, length: int) -> str:
        words = rng.choice(vocab[label], size=length)
        return " ".join(words)

    records = []
    for i in range(n):
        label = i % num_classes
        records.append(
            MultimodalRecord(
                id=f"sep{i:04d}",
                label=label,
                post_text=sentence(label, words_per_post),
                comments=[sentence(label, 4) for _ in range(comments_per_record)],
                image_ref=None,
            )
        )
    return records


def image_signal_records(n: int, num_classes: int = 2) -> list[MultimodalRecord]:
    """Records where text is identical everywhere and only the image
    reference carries the label, so dropping the image node removes all
    class signal."""
    records = []
    for i in range(n):
        label = i % num_classes
        records.append(
            MultimodalRecord(
                id=f"img{i:04d}",
                label=label,
                post_text="breaking story shared across the network today",
                comments=["seen this before", "source please"],
                image_ref=f"signal{label}",
            )
        )
    return records


def write_dataset(path, records: list[MultimodalRecord], labels: list[str]) -> None:
    """Write JSON-lines records plus the `<path>.labels` schema sidecar."""
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            obj = {
                "id": r.id,
                "label": labels[r.label],
                "text": r.post_text,
                "comments": r.comments,
                "image": r.image_ref,
            }
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
    with open(f"{path}.labels", "w", encoding="utf-8") as fh:
        fh.write("\n".join(labels) + "\n")

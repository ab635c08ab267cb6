"""The export job: encode every post, comment, and image of a dataset and
write one MEB1 store the classifier can consume directly.

Image rows for records with an image are keyed by the record's image
reference; records without one get an all-zero row keyed by the record id,
matching how the classifier resolves image nodes.  Before writing, every key
the dataset will look up is checked to exist in the store.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass

import numpy as np

from .dataset import Record, read_records
from .encoders import DEFAULT_DIM, DEFAULT_TEXT_MODEL, ImageEncoder, TextEncoder
from .meb import MebWriter, comment_key, image_key, post_key

logger = logging.getLogger(__name__)


class ExportError(Exception):
    pass


@dataclass
class ExportJob:
    dataset_path: str
    output_path: str
    images_dir: str | None = None
    text_model: str = DEFAULT_TEXT_MODEL
    image_weights: str | None = None
    projection_dim: int = DEFAULT_DIM
    raw_image_features: bool = False
    mean_pool: bool = False
    device: str = "cpu"
    batch_size: int = 16
    projection_seed: int = 0


def export_text(records: list[Record], encoder: TextEncoder, writer: MebWriter, batch_size: int = 16) -> None:
    """One row per post and per comment, in record order."""
    keys: list[str] = []
    texts: list[str] = []
    for record in records:
        keys.append(post_key(record.id))
        texts.append(record.text)
        for ordinal, comment in enumerate(record.comments):
            keys.append(comment_key(record.id, ordinal))
            texts.append(comment)
    vectors = encoder.encode(texts, batch_size=batch_size)
    for key, vector in zip(keys, vectors):
        writer.add(key, vector)


def export_image(records: list[Record], encoder: ImageEncoder, writer: MebWriter, images_dir: str | None) -> None:
    """One row per image reference plus a zero row per record without one."""
    for record in records:
        if record.image is None:
            writer.add(image_key(record.id), np.zeros(writer.dim))
            continue
        key = image_key(record.image)
        if key in writer:
            continue
        path = os.path.join(images_dir, record.image) if images_dir else record.image
        features = encoder.encode_file(path)
        if features is None:
            writer.add(key, np.zeros(writer.dim))
        else:
            writer.add(key, features)


def referenced_keys(records: list[Record]) -> list[str]:
    keys = []
    for record in records:
        keys.append(post_key(record.id))
        keys.extend(comment_key(record.id, k) for k in range(len(record.comments)))
        if record.image is not None:
            keys.append(image_key(record.image))
    return keys


def raw_images_path(output_path: str) -> str:
    base, ext = os.path.splitext(output_path)
    return f"{base}.images{ext or '.meb'}"


def run_export(job: ExportJob) -> int:
    """Execute the job; returns the number of rows written.

    Default mode writes one store with both modalities at the text encoder's
    dimension.  `raw_image_features` skips the projection and writes the
    2048-dim image rows to a sibling store (a MEB1 file holds exactly one
    dimension), leaving the text store untouched by image rows.
    """
    records = read_records(job.dataset_path)
    text_encoder = TextEncoder(job.text_model, device=job.device, mean_pool=job.mean_pool)
    projection = None if job.raw_image_features else text_encoder.dim
    image_encoder = ImageEncoder(
        weights_path=job.image_weights,
        device=job.device,
        projection_dim=projection,
        projection_seed=job.projection_seed,
    )
    writer = MebWriter(text_encoder.dim)
    export_text(records, text_encoder, writer, batch_size=job.batch_size)
    if job.raw_image_features:
        image_writer = MebWriter(image_encoder.dim)
        export_image(records, image_encoder, image_writer, job.images_dir)
    else:
        image_writer = writer
        export_image(records, image_encoder, writer, job.images_dir)
    missing = [
        key
        for key in referenced_keys(records)
        if key not in (image_writer if key.startswith("image:") else writer)
    ]
    if missing:
        raise ExportError(f"store is missing {len(missing)} referenced keys, first: {missing[0]}")
    writer.write(job.output_path)
    written = len(writer)
    if job.raw_image_features:
        sibling = raw_images_path(job.output_path)
        image_writer.write(sibling)
        written += len(image_writer)
        logger.info("wrote %d raw image rows of dim %d to %s", len(image_writer), image_writer.dim, sibling)
    logger.info("wrote %d rows of dim %d to %s", len(writer), writer.dim, job.output_path)
    return written

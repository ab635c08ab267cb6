"""MEB1 embedding-store writer: the interchange contract with the classifier.

Layout (integers little-endian): magic "MEB1", uint32 row count, uint32
dimension, float32 rows in row-major order, uint32 index byte length, UTF-8
JSON object mapping key -> row number.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MEB_MAGIC = b"MEB1"


class MebError(Exception):
    pass


def post_key(record_id: str) -> str:
    return f"post:{record_id}"


def comment_key(record_id: str, ordinal: int) -> str:
    return f"comment:{record_id}:{ordinal}"


def image_key(ref: str) -> str:
    return f"image:{ref}"


class MebWriter:
    """Collects keyed rows of one dimension and writes them once."""

    def __init__(self, dim: int):
        if dim <= 0:
            raise MebError("dimension must be positive")
        self.dim = int(dim)
        self.index: dict[str, int] = {}
        self.rows: list[np.ndarray] = []

    def __contains__(self, key: str) -> bool:
        return key in self.index

    def __len__(self) -> int:
        return len(self.rows)

    def add(self, key: str, vector) -> None:
        vec = np.asarray(vector, dtype=np.float64).reshape(-1)
        if vec.shape[0] != self.dim:
            raise MebError(f"row '{key}' has dim {vec.shape[0]}, expected {self.dim}")
        if key in self.index:
            raise MebError(f"duplicate key '{key}'")
        self.index[key] = len(self.rows)
        self.rows.append(vec)

    def write(self, path) -> None:
        matrix = np.vstack(self.rows) if self.rows else np.zeros((0, self.dim))
        blob = json.dumps(self.index, ensure_ascii=False, separators=(",", ":")).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(MEB_MAGIC)
            fh.write(struct.pack("<II", len(self.rows), self.dim))
            fh.write(matrix.astype("<f4").tobytes())
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)

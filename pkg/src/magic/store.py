"""Embedding stores, the MEB1 binary interchange format, and the fallback
text embedder that lets the whole pipeline run without pretrained encoders.

MEB1 layout (all integers little-endian):
  bytes 0-3   magic "MEB1"
  bytes 4-7   uint32 row count R
  bytes 8-11  uint32 dimension D
  R*D         float32 values, row-major
  uint32      byte length L of the index
  L bytes     UTF-8 JSON object mapping key -> row number

Rows are float32 on disk and promoted to float64 in memory; that is the one
intentional precision boundary in the pipeline.
"""

from __future__ import annotations

import hashlib
import json
import re
import struct

import numpy as np

MEB_MAGIC = b"MEB1"

DEFAULT_EMBED_SEED = 0


class StoreError(Exception):
    """Malformed store files or inconsistent store contents."""


def post_key(record_id: str) -> str:
    return f"post:{record_id}"


def comment_key(record_id: str, ordinal: int) -> str:
    return f"comment:{record_id}:{ordinal}"


def image_key(ref: str) -> str:
    return f"image:{ref}"


class EmbeddingStore:
    """String-keyed rows of fixed dimension, kept in insertion order."""

    def __init__(self, dim: int):
        if dim <= 0:
            raise StoreError("store dimension must be positive")
        self.dim = int(dim)
        self._index: dict[str, int] = {}
        self._rows: list[np.ndarray] = []

    @classmethod
    def from_data(cls, matrix: np.ndarray, index: dict[str, int]) -> "EmbeddingStore":
        matrix = np.asarray(matrix, dtype=np.float64)
        store = cls(matrix.shape[1])
        store._rows = [matrix[i].copy() for i in range(matrix.shape[0])]
        values = list(index.values())
        if len(set(values)) != len(values):
            raise StoreError("index row numbers are not unique")
        if any(v < 0 or v >= matrix.shape[0] for v in values):
            raise StoreError("index row number out of range")
        store._index = dict(index)
        return store

    def __len__(self) -> int:
        return len(self._rows)

    def __contains__(self, key: str) -> bool:
        return key in self._index

    def keys(self):
        return self._index.keys()

    def add(self, key: str, vector) -> None:
        vec = np.asarray(vector, dtype=np.float64).reshape(-1)
        if vec.shape[0] != self.dim:
            raise StoreError(f"vector for '{key}' has dim {vec.shape[0]}, store dim {self.dim}")
        if key in self._index:
            raise StoreError(f"duplicate store key '{key}'")
        self._index[key] = len(self._rows)
        self._rows.append(vec)

    def lookup(self, key: str) -> np.ndarray:
        row = self._index.get(key)
        if row is None:
            raise KeyError(key)
        return self._rows[row].copy()

    def matrix(self) -> np.ndarray:
        if not self._rows:
            return np.zeros((0, self.dim), dtype=np.float64)
        return np.vstack(self._rows)

    def index(self) -> dict[str, int]:
        return dict(self._index)


def write_meb(path, store: EmbeddingStore) -> None:
    matrix32 = store.matrix().astype("<f4")
    index_blob = json.dumps(store.index(), ensure_ascii=False, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MEB_MAGIC)
        fh.write(struct.pack("<II", len(store), store.dim))
        fh.write(matrix32.tobytes())
        fh.write(struct.pack("<I", len(index_blob)))
        fh.write(index_blob)


def read_meb(path) -> EmbeddingStore:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MEB_MAGIC:
        raise StoreError(f"bad magic {blob[:4]!r}, expected {MEB_MAGIC!r}")
    if len(blob) < 12:
        raise StoreError("truncated header")
    rows, dim = struct.unpack_from("<II", blob, 4)
    if dim == 0:
        raise StoreError("zero dimension")
    payload_end = 12 + rows * dim * 4
    if len(blob) < payload_end + 4:
        raise StoreError("truncated payload")
    matrix = np.frombuffer(blob, dtype="<f4", count=rows * dim, offset=12).reshape(rows, dim)
    (index_len,) = struct.unpack_from("<I", blob, payload_end)
    index_blob = blob[payload_end + 4:payload_end + 4 + index_len]
    if len(index_blob) != index_len:
        raise StoreError("truncated index")

    def no_duplicates(pairs):
        seen = {}
        for key, value in pairs:
            if key in seen:
                raise StoreError(f"duplicate key '{key}' in index")
            seen[key] = value
        return seen

    index = json.loads(index_blob.decode("utf-8"), object_pairs_hook=no_duplicates)
    return EmbeddingStore.from_data(matrix.astype(np.float64), index)


def write_jsonl_store(path, store: EmbeddingStore) -> None:
    """Human-readable debug twin of MEB1: one {key, vector} object per line."""
    matrix = store.matrix()
    with open(path, "w", encoding="utf-8") as fh:
        for key, row in store.index().items():
            obj = {"key": key, "vector": [float(v) for v in matrix[row]]}
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


_WORD_RE = re.compile(r"\w+", re.UNICODE)


def fallback_embed(text: str, dim: int, seed: int = DEFAULT_EMBED_SEED) -> np.ndarray:
    """Deterministic feature-hashing text vectorizer.

    Lowercase word unigrams and bigrams are hashed into `dim` buckets with a
    seeded sign hash, then the vector is L2-normalized.  Empty text yields the
    zero vector.
    """
    if dim <= 0:
        raise StoreError("embedding dimension must be positive")
    words = _WORD_RE.findall(text.lower())
    grams = list(words)
    grams.extend(f"{a} {b}" for a, b in zip(words, words[1:]))
    vec = np.zeros(dim, dtype=np.float64)
    key = (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
    for gram in grams:
        digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8, key=key).digest()
        value = int.from_bytes(digest, "little")
        sign = 1.0 if value >> 63 else -1.0
        vec[value % dim] += sign
    norm = float(np.linalg.norm(vec))
    if norm > 0.0:
        vec /= norm
    return vec


def build_fallback_store(records, dim: int, seed: int = DEFAULT_EMBED_SEED) -> EmbeddingStore:
    """Embed every post, comment, and image reference of a dataset.

    Image references are hashed as text, which gives records with images a
    deterministic stand-in feature; records without an image get an all-zero
    row keyed by their record id.
    """
    store = EmbeddingStore(dim)
    for record in records:
        store.add(post_key(record.id), fallback_embed(record.post_text, dim, seed))
        for ordinal, text in enumerate(record.comments):
            store.add(comment_key(record.id, ordinal), fallback_embed(text, dim, seed))
        if record.image_ref is not None:
            key = image_key(record.image_ref)
            if key not in store:
                store.add(key, fallback_embed(record.image_ref, dim, seed))
        else:
            store.add(image_key(record.id), np.zeros(dim))
    return store

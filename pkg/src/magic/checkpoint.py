"""Model checkpoints: magic MGC1, a JSON header, float64 payload, CRC32.

Layout (integers little-endian):
  bytes 0-3  magic "MGC1"
  uint32     format version
  uint32     header byte length
  header     UTF-8 JSON: dims, label vocabulary, best depth, model config,
             and the parameter name/shape table in payload order
  payload    concatenated float64 little-endian parameter values
  uint32     CRC32 of the payload

Round trips are bit-exact: a loaded model produces identical logits.
"""

from __future__ import annotations

import dataclasses
import json
import struct
import zlib

import numpy as np

from .model import MagicModel, ModelConfig, build_model, load_parameter_arrays

CKPT_MAGIC = b"MGC1"
CKPT_VERSION = 1


class CheckpointError(Exception):
    """Unreadable, corrupt, or incompatible checkpoint files."""


@dataclasses.dataclass
class Checkpoint:
    model: MagicModel
    labels: list[str] | None
    best_n: int
    extra: dict


def _config_to_json(config: ModelConfig) -> dict:
    data = dataclasses.asdict(config)
    data["layer_search_range"] = list(config.layer_search_range)
    return data


def _config_from_json(data: dict) -> ModelConfig:
    data = dict(data)
    data["layer_search_range"] = tuple(data["layer_search_range"])
    return ModelConfig(**data)


def save_checkpoint(
    path,
    model: MagicModel,
    labels: list[str] | None = None,
    best_n: int | None = None,
    extra: dict | None = None,
) -> None:
    params = model.parameters()
    header = {
        "input_dim": model.input_dim,
        "hidden_dim": model.hidden_dim,
        "num_classes": model.num_classes,
        "n_layers": model.n_layers,
        "best_n": model.n_layers if best_n is None else best_n,
        "labels": labels,
        "config": _config_to_json(model.config),
        "extra": extra or {},
        "params": [{"name": name, "rows": p.rows, "cols": p.cols} for name, p in params],
    }
    header_blob = json.dumps(header, ensure_ascii=False, separators=(",", ":")).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(p.data, dtype="<f8").tobytes() for _, p in params)
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", CKPT_VERSION, len(header_blob)))
        fh.write(header_blob)
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload)))


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CKPT_MAGIC:
        raise CheckpointError(f"bad magic {blob[:4]!r}, expected {CKPT_MAGIC!r}")
    if len(blob) < 12:
        raise CheckpointError("truncated header")
    version, header_len = struct.unpack_from("<II", blob, 4)
    if version != CKPT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}, expected {CKPT_VERSION}")
    header_end = 12 + header_len
    if len(blob) < header_end + 4:
        raise CheckpointError("truncated payload")
    try:
        header = json.loads(blob[12:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable header: {exc}") from None
    payload = blob[header_end:-4]
    (stored_crc,) = struct.unpack_from("<I", blob, len(blob) - 4)
    if zlib.crc32(payload) != stored_crc:
        raise CheckpointError("payload CRC mismatch")
    expected_bytes = sum(p["rows"] * p["cols"] * 8 for p in header["params"])
    if len(payload) != expected_bytes:
        raise CheckpointError("payload length does not match the parameter table")
    config = _config_from_json(header["config"])
    model = build_model(header["input_dim"], header["num_classes"], header["n_layers"], config)
    names = [name for name, _ in model.parameters()]
    if names != [p["name"] for p in header["params"]]:
        raise CheckpointError("parameter table does not match the model structure")
    arrays = []
    offset = 0
    for p in header["params"]:
        count = p["rows"] * p["cols"]
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=offset)
        arrays.append(arr.reshape(p["rows"], p["cols"]).astype(np.float64))
        offset += count * 8
    load_parameter_arrays(model, arrays)
    return Checkpoint(
        model=model,
        labels=header.get("labels"),
        best_n=header["best_n"],
        extra=header.get("extra", {}),
    )

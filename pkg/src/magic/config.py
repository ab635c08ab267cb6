"""Flat `key = value` run configuration with strict unknown-key rejection.

Every tunable default of the pipeline lives here, so a config file can pin
any of them; keys that are not in the table below are errors rather than
silently ignored.  The environment variable MAGIC_SEED overrides the seed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields

from .model import ABLATION_VARIANTS, ModelConfig
from .training import TrainConfig


class ConfigFileError(Exception):
    """Unknown keys, malformed lines, or invalid values in a config file."""


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: '{text}'")


def _parse_optional_int(text: str):
    return None if text.lower() == "none" else int(text)


def _parse_optional_float(text: str):
    return None if text.lower() == "none" else float(text)


@dataclass
class RunConfig:
    # model
    hidden_dim: int = 64
    heads: int = 2
    topk_ratio: float = 0.8
    dropout_rate: float = 0.2
    include_image: bool = True
    multi_head_enabled: bool = True
    residual_enabled: bool = True
    layer_min: int = 1
    layer_max: int = 4
    seed: int = 0
    leaky_slope: float = 0.2
    elu_alpha: float = 1.0
    topk_mode: str = "coefficient"
    topk_scope: str = "all_layers"
    hidden_aggregation: str = "concat"
    final_aggregation: str = "average"
    comment_edges: str = "star"
    variant: str = "full"
    # training
    learning_rate: float = 0.002
    batch_size: int = 128
    epochs: int = 100
    patience: int | None = 20
    clip_norm: float | None = 5.0
    # data
    test_ratio: float = 0.2
    val_ratio: float = 0.2
    embed_dim: int = 256
    # default paths, overridable by CLI flags
    schema: str = ""
    data: str = ""
    embeddings: str = ""
    model: str = ""
    report: str = ""

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            hidden_dim=self.hidden_dim,
            heads=self.heads,
            topk_ratio=self.topk_ratio,
            dropout_rate=self.dropout_rate,
            include_image=self.include_image,
            multi_head_enabled=self.multi_head_enabled,
            residual_enabled=self.residual_enabled,
            layer_search_range=(self.layer_min, self.layer_max),
            seed=self.seed,
            leaky_slope=self.leaky_slope,
            elu_alpha=self.elu_alpha,
            topk_mode=self.topk_mode,
            topk_scope=self.topk_scope,
            hidden_aggregation=self.hidden_aggregation,
            final_aggregation=self.final_aggregation,
            comment_edges=self.comment_edges,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            seed=self.seed,
            patience=self.patience,
            clip_norm=self.clip_norm,
        )


_PARSERS = {
    "include_image": _parse_bool,
    "multi_head_enabled": _parse_bool,
    "residual_enabled": _parse_bool,
    "patience": _parse_optional_int,
    "clip_norm": _parse_optional_float,
}


def _parser_for(field) -> callable:
    if field.name in _PARSERS:
        return _PARSERS[field.name]
    if field.type in ("int", int):
        return int
    if field.type in ("float", float):
        return float
    return str


def load_run_config(path=None, env=None) -> RunConfig:
    """Parse a config file (or take pure defaults) and apply MAGIC_SEED."""
    config = RunConfig()
    known = {f.name: f for f in fields(RunConfig)}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigFileError(f"line {line_no}: expected 'key = value'")
                key, _, value = (part.strip() for part in line.partition("="))
                if key not in known:
                    raise ConfigFileError(f"line {line_no}: unknown key '{key}'")
                try:
                    setattr(config, key, _parser_for(known[key])(value))
                except ValueError as exc:
                    raise ConfigFileError(f"line {line_no}: bad value for '{key}': {exc}") from None
    env = os.environ if env is None else env
    seed_override = env.get("MAGIC_SEED")
    if seed_override is not None:
        try:
            config.seed = int(seed_override)
        except ValueError:
            raise ConfigFileError(f"MAGIC_SEED is not an integer: '{seed_override}'") from None
    if config.variant not in ABLATION_VARIANTS:
        raise ConfigFileError(f"unknown variant '{config.variant}'")
    return config

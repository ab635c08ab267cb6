"""Pretrained encoders: transformer sentence vectors and CNN image features.

Text goes through a multilingual transformer encoder (base variant, 12
blocks by default); the sentence representation is the classification-token
output, or a mask-weighted mean with `mean_pool=True`.  Images go through a
50-layer residual network's penultimate pooled features (2048-dim), then a
fixed seeded linear projection to the text dimension followed by ReLU, so
both modalities land in the same space.  The projection is deliberately not
trained here: all trainable parameters live in the classifier.
"""

from __future__ import annotations

import logging

import numpy as np
import torch

logger = logging.getLogger(__name__)

DEFAULT_TEXT_MODEL = "bert-base-multilingual-cased"
DEFAULT_DIM = 768
IMAGE_FEATURE_DIM = 2048
DEFAULT_PROJECTION_SEED = 0


class EncoderError(Exception):
    pass


class TextEncoder:
    def __init__(self, model_name: str = DEFAULT_TEXT_MODEL, device: str = "cpu", mean_pool: bool = False):
        from transformers import AutoModel, AutoTokenizer

        try:
            self.tokenizer = AutoTokenizer.from_pretrained(model_name)
            self.model = AutoModel.from_pretrained(model_name)
        except Exception as exc:
            raise EncoderError(f"cannot load text encoder '{model_name}': {exc}") from None
        self.device = torch.device(device)
        self.model.to(self.device)
        self.model.eval()
        self.mean_pool = mean_pool
        self.max_length = min(int(getattr(self.tokenizer, "model_max_length", 512)), 512)
        self.dim = int(self.model.config.hidden_size)

    @torch.no_grad()
    def encode(self, texts: list[str], batch_size: int = 16) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        specials = self.tokenizer.num_special_tokens_to_add(pair=False)
        for start in range(0, len(texts), batch_size):
            chunk = texts[start:start + batch_size]
            for offset, text in enumerate(chunk):
                n_tokens = len(self.tokenizer.tokenize(text)) + specials
                if n_tokens > self.max_length:
                    logger.warning(
                        "text %d exceeds %d tokens (%d); truncating", start + offset, self.max_length, n_tokens
                    )
            enc = self.tokenizer(
                chunk,
                padding=True,
                truncation=True,
                max_length=self.max_length,
                return_tensors="pt",
            ).to(self.device)
            hidden = self.model(**enc).last_hidden_state
            if self.mean_pool:
                mask = enc["attention_mask"].unsqueeze(-1).to(hidden.dtype)
                pooled = (hidden * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1.0)
            else:
                pooled = hidden[:, 0]
            out[start:start + len(chunk)] = pooled.cpu().double().numpy()
        return out


def projection_matrix(in_dim: int, out_dim: int, seed: int = DEFAULT_PROJECTION_SEED) -> tuple[np.ndarray, np.ndarray]:
    """Fixed seeded linear map aligning image features with the text space."""
    rng = np.random.default_rng(seed)
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    weight = rng.uniform(-limit, limit, size=(in_dim, out_dim))
    bias = np.zeros(out_dim)
    return weight, bias


class ImageEncoder:
    def __init__(
        self,
        weights_path: str | None = None,
        device: str = "cpu",
        projection_dim: int | None = DEFAULT_DIM,
        projection_seed: int = DEFAULT_PROJECTION_SEED,
    ):
        import torchvision.models as models
        from torchvision.models import ResNet50_Weights

        self.device = torch.device(device)
        if weights_path is not None:
            backbone = models.resnet50(weights=None)
            try:
                state = torch.load(weights_path, map_location="cpu", weights_only=True)
                backbone.load_state_dict(state)
            except Exception as exc:
                raise EncoderError(f"cannot load image weights '{weights_path}': {exc}") from None
        else:
            try:
                backbone = models.resnet50(weights=ResNet50_Weights.IMAGENET1K_V2)
            except Exception as exc:
                raise EncoderError(f"cannot download pretrained image weights: {exc}") from None
        # drop the classification head; keep the pooled penultimate features
        self.backbone = torch.nn.Sequential(*list(backbone.children())[:-1])
        self.backbone.to(self.device)
        self.backbone.eval()
        self.projection_dim = projection_dim
        if projection_dim is None:
            self.dim = IMAGE_FEATURE_DIM
            self._weight = None
            self._bias = None
        else:
            self.dim = projection_dim
            self._weight, self._bias = projection_matrix(IMAGE_FEATURE_DIM, projection_dim, projection_seed)

    @staticmethod
    def _preprocess():
        from torchvision import transforms

        return transforms.Compose(
            [
                transforms.Resize(256),
                transforms.CenterCrop(224),
                transforms.ToTensor(),
                transforms.Normalize(mean=[0.485, 0.456, 0.406], std=[0.229, 0.224, 0.225]),
            ]
        )

    @torch.no_grad()
    def encode_file(self, path) -> np.ndarray | None:
        """Pooled features for one image file; None when it cannot be decoded."""
        from PIL import Image, UnidentifiedImageError

        try:
            with Image.open(path) as img:
                tensor = self._preprocess()(img.convert("RGB")).unsqueeze(0).to(self.device)
        except (OSError, UnidentifiedImageError) as exc:
            logger.warning("cannot decode image '%s': %s", path, exc)
            return None
        features = self.backbone(tensor).reshape(-1).cpu().double().numpy()
        if self._weight is None:
            return features
        return np.maximum(features @ self._weight + self._bias, 0.0)

"""Vision and text encoders wrapped behind a small uniform interface.

An image encoder exposes `image_size` and `encode(image) -> (t, d) float32`
patch features; a text encoder exposes `encode(text) -> (t, d) float32`
token features. Pretrained checkpoints come through the transformers Auto
classes; the tiny-random variants build the same architectures from a
fixed-seed config so tests never touch the network.
"""

from __future__ import annotations

import numpy as np
import torch
from transformers import (AutoModel, AutoTokenizer, RobertaConfig,
                          RobertaModel, ViTConfig, ViTModel)


class ImageEncoder:
    """ViT-style patch feature extractor over square RGB inputs."""

    def __init__(self, model, image_size: int):
        self.model = model.eval()
        self.image_size = image_size

    def encode(self, image) -> np.ndarray:
        """PIL image -> (patch count, hidden width) float32 features."""
        image = image.convert("RGB").resize(
            (self.image_size, self.image_size))
        arr = np.asarray(image, dtype=np.float32) / 255.0
        arr = (arr - 0.5) / 0.5
        pixels = torch.from_numpy(arr).permute(2, 0, 1).unsqueeze(0)
        with torch.no_grad():
            hidden = self.model(pixel_values=pixels).last_hidden_state
        # drop the CLS slot; keep one feature row per image patch
        return hidden[0, 1:].numpy().astype(np.float32)


class TextEncoder:
    """Transformer token feature extractor over tokenized captions."""

    def __init__(self, model, tokenize, max_tokens: int = 128):
        self.model = model.eval()
        self.tokenize = tokenize      # text -> list of input ids
        self.max_tokens = max_tokens

    def encode(self, text: str) -> np.ndarray:
        """Caption string -> (token count, hidden width) float32 features."""
        ids = self.tokenize(text)[: self.max_tokens]
        if not ids:
            raise ValueError("caption tokenized to nothing")
        batch = torch.tensor([ids], dtype=torch.long)
        with torch.no_grad():
            hidden = self.model(input_ids=batch).last_hidden_state
        return hidden[0].numpy().astype(np.float32)


def load_image_encoder(name: str) -> ImageEncoder:
    """Pretrained ViT-family encoder by checkpoint name."""
    model = AutoModel.from_pretrained(name)
    return ImageEncoder(model, int(model.config.image_size))


def load_text_encoder(name: str) -> TextEncoder:
    """Pretrained RoBERTa-family encoder by checkpoint name."""
    tokenizer = AutoTokenizer.from_pretrained(name)
    model = AutoModel.from_pretrained(name)

    def tokenize(text):
        return tokenizer(text, truncation=True)["input_ids"]

    return TextEncoder(model, tokenize)


def tiny_random_image_encoder(seed: int = 0) -> ImageEncoder:
    """Small fixed-seed ViT; 32x32 inputs, 4 patches, width 24."""
    torch.manual_seed(seed)
    config = ViTConfig(image_size=32, patch_size=16, num_channels=3,
                       hidden_size=24, num_hidden_layers=2,
                       num_attention_heads=2, intermediate_size=48)
    return ImageEncoder(ViTModel(config), 32)


def tiny_random_text_encoder(seed: int = 0) -> TextEncoder:
    """Small fixed-seed RoBERTa over a byte-level vocabulary."""
    torch.manual_seed(seed)
    # pad id 0 keeps position ids small (RoBERTa offsets them by pad+1);
    # byte 0 never occurs in caption text, so the slot is free
    config = RobertaConfig(vocab_size=260, hidden_size=24,
                           num_hidden_layers=2, num_attention_heads=2,
                           intermediate_size=48,
                           max_position_embeddings=140, pad_token_id=0)

    def tokenize(text):
        # ids 1..255 are raw UTF-8 bytes; 256/257 mark start and end
        return [256] + [b for b in text.encode("utf-8")] + [257]

    return TextEncoder(RobertaModel(config), tokenize)

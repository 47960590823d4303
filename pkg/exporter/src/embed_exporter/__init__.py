"""Offline encoder export tool for the itermatch embedding format."""

from .captions import split_caption, split_sentences
from .encoders import (ImageEncoder, TextEncoder, load_image_encoder,
                       load_text_encoder, tiny_random_image_encoder,
                       tiny_random_text_encoder)
from .export import encode_image, export_images, export_texts
from .format import ExportError, write_embedding_file

__version__ = "0.1.0"

__all__ = [
    "ExportError",
    "ImageEncoder",
    "TextEncoder",
    "encode_image",
    "export_images",
    "export_texts",
    "load_image_encoder",
    "load_text_encoder",
    "split_caption",
    "split_sentences",
    "tiny_random_image_encoder",
    "tiny_random_text_encoder",
    "write_embedding_file",
]

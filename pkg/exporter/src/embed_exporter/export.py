"""Export jobs: run encoders over images/captions, write engine files."""

from __future__ import annotations

from PIL import Image, UnidentifiedImageError

from .captions import split_caption
from .format import (ExportError, write_embedding_file,
                     write_manifest_fragment)


def encode_image(path, encoder):
    """Patch features for one image file."""
    try:
        with Image.open(path) as image:
            return encoder.encode(image)
    except (OSError, UnidentifiedImageError) as exc:
        raise ExportError(f"unreadable image {path}: {exc}") from exc


def export_images(paths: list, encoder, out_path) -> int:
    """Encode each image and write one embedding file; ids are file stems.

    Returns the number of exported instances.
    """
    if not paths:
        raise ExportError("no images to export")
    instances = []
    for path in paths:
        instances.append((_stem(path), encode_image(path, encoder)))
    write_embedding_file(out_path, instances, "image")
    return len(instances)


def read_caption_file(path) -> list:
    """Read (image_id, caption_id, text) rows from a tab-separated file."""
    rows = []
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise ExportError(f"cannot read caption file {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ExportError(
                    f"{path}:{lineno}: expected image_id, caption_id, text")
            image_id, caption_id, text = parts
            if not text.strip():
                raise ExportError(f"{path}:{lineno}: empty caption")
            rows.append((image_id, caption_id, text))
    return rows


def export_texts(caption_path, encoder, out_path, manifest_path,
                 split_captions: bool = False, split: str = "train") -> int:
    """Encode captions and write embeddings plus a manifest fragment.

    With `split_captions`, a multi-sentence description becomes several
    instances that share the image id; derived ids get a numeric suffix.
    Returns the number of exported instances.
    """
    rows = read_caption_file(caption_path)
    if not rows:
        raise ExportError(f"{caption_path}: no captions")
    instances = []
    records = []
    seen = set()
    for image_id, caption_id, text in rows:
        captions = split_caption(text) if split_captions else [text.strip()]
        for k, caption in enumerate(captions):
            cid = caption_id if len(captions) == 1 else f"{caption_id}_{k}"
            if cid in seen:
                raise ExportError(f"caption id collision: {cid!r}")
            seen.add(cid)
            instances.append((cid, encoder.encode(caption)))
            records.append((image_id, cid, split))
    write_embedding_file(out_path, instances, "text")
    write_manifest_fragment(manifest_path, records)
    return len(instances)


def _stem(path):
    name = str(path).replace("\\", "/").rsplit("/", 1)[-1]
    return name.rsplit(".", 1)[0] if "." in name else name

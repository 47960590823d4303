"""Embedding files, manifests, caption splitting, synthesis, and batching."""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, l2_normalize
from .errors import DataError

EMBEDDING_MAGIC = b"LILE"
EMBEDDING_VERSION = 1
MODALITY_CODES = {"image": 0, "text": 1}
MODALITY_NAMES = {v: k for k, v in MODALITY_CODES.items()}


@dataclass
class RawEmbedding:
    """One instance's token/region features as produced by an encoder."""

    instance_id: str
    modality: str           # "image" or "text"
    tokens: np.ndarray      # (t, d_raw) float array


@dataclass
class PairRecord:
    image_id: str
    caption_id: str
    split: str              # train / val / test


# -- binary embedding files --------------------------------------------------

def write_embeddings(path, embeddings: list, modality: str) -> None:
    """Write instances in the little-endian binary embedding format."""
    if modality not in MODALITY_CODES:
        raise DataError(f"unknown modality {modality!r}")
    if not embeddings:
        raise DataError("refusing to write an empty embedding file")
    d_raw = embeddings[0].tokens.shape[1]
    with open(path, "wb") as fh:
        fh.write(EMBEDDING_MAGIC)
        fh.write(struct.pack("<H", EMBEDDING_VERSION))
        fh.write(struct.pack("<B", MODALITY_CODES[modality]))
        fh.write(struct.pack("<I", d_raw))
        fh.write(struct.pack("<I", len(embeddings)))
        for emb in embeddings:
            t, d = emb.tokens.shape
            if d != d_raw:
                raise DataError(
                    f"{emb.instance_id}: d_raw {d} != file d_raw {d_raw}")
            if t < 1:
                raise DataError(f"{emb.instance_id}: empty token sequence")
            idb = emb.instance_id.encode("utf-8")
            fh.write(struct.pack("<H", len(idb)))
            fh.write(idb)
            fh.write(struct.pack("<I", t))
            fh.write(emb.tokens.astype("<f4").tobytes(order="C"))


def load_embeddings(path) -> dict:
    """Load an embedding file; returns {instance_id: RawEmbedding}."""
    with open(path, "rb") as fh:
        data = fh.read()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise DataError(f"{path}: truncated embedding file")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    if take(4) != EMBEDDING_MAGIC:
        raise DataError(f"{path}: bad magic")
    (version,) = struct.unpack("<H", take(2))
    if version != EMBEDDING_VERSION:
        raise DataError(f"{path}: unsupported version {version}")
    (mod_code,) = struct.unpack("<B", take(1))
    if mod_code not in MODALITY_NAMES:
        raise DataError(f"{path}: unknown modality code {mod_code}")
    modality = MODALITY_NAMES[mod_code]
    (d_raw,) = struct.unpack("<I", take(4))
    (count,) = struct.unpack("<I", take(4))
    out = {}
    for _ in range(count):
        (id_len,) = struct.unpack("<H", take(2))
        instance_id = take(id_len).decode("utf-8")
        (t,) = struct.unpack("<I", take(4))
        if t < 1:
            raise DataError(f"{path}: instance {instance_id} has t=0")
        tokens = np.frombuffer(take(4 * t * d_raw), dtype="<f4")
        tokens = tokens.astype(np.float64).reshape(t, d_raw)
        if not np.isfinite(tokens).all():
            raise DataError(f"{path}: NaN/Inf in instance {instance_id}")
        if instance_id in out:
            raise DataError(f"{path}: duplicate instance id {instance_id}")
        out[instance_id] = RawEmbedding(instance_id, modality, tokens)
    if pos != len(data):
        raise DataError(f"{path}: trailing bytes after payload")
    return out


# -- manifest ----------------------------------------------------------------

def write_manifest(path, records: list) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(f"{r.image_id}\t{r.caption_id}\t{r.split}\n")


def load_manifest(path) -> list:
    """Read tab-separated (image_id, caption_id, split) records."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 tab-separated fields")
            image_id, caption_id, split = parts
            if split not in ("train", "val", "test"):
                raise DataError(f"{path}:{lineno}: unknown split {split!r}")
            records.append(PairRecord(image_id, caption_id, split))
    return records


# -- caption splitting -------------------------------------------------------

_SENTENCE_RE = re.compile(r".+?[.!?](?=\s|$)|.+$", re.DOTALL)


def split_sentences(text: str) -> list:
    """Split on terminal punctuation followed by whitespace or end of text."""
    return [m.group(0).strip() for m in _SENTENCE_RE.finditer(text.strip())
            if m.group(0).strip()]


def split_caption(description: str) -> list:
    """Derive uniform captions from a multi-sentence description.

    With k >= 2 sentences, returns the k-1 concatenations of sentence 1
    with each later sentence; single-sentence inputs come back as-is.
    """
    if not description or not description.strip():
        raise DataError("empty caption")
    sentences = split_sentences(description)
    if len(sentences) <= 1:
        return [description.strip()]
    first = sentences[0]
    return [f"{first} {other}" for other in sentences[1:]]


# -- projection --------------------------------------------------------------

def project(tokens: Tensor, weights: Tensor) -> Tensor:
    """Map raw tokens into the shared dimension and unit-normalize each row."""
    if tokens.shape[-1] != weights.shape[0]:
        raise ValueError(
            f"projection shape mismatch: tokens d_raw {tokens.shape[-1]} "
            f"vs weights {weights.shape}")
    return l2_normalize(tokens @ weights, axis=-1)


# -- synthetic data ----------------------------------------------------------

def synth_dataset(seed: int, n_pairs: int, t_img: int, t_txt: int,
                  d_raw: int, noise: float):
    """Paired synthetic embeddings sharing a latent anchor per pair.

    Returns (image embeddings dict, text embeddings dict, manifest records,
    anchors). Deterministic per seed.
    """
    if n_pairs < 2:
        raise DataError("n_pairs must be >= 2")
    if noise < 0:
        raise DataError("noise must be nonnegative")
    if t_img < 1 or t_txt < 1 or d_raw < 1:
        raise DataError("t_img, t_txt and d_raw must be >= 1")
    rng = np.random.default_rng(seed)
    anchors = rng.normal(size=(n_pairs, d_raw))
    anchors /= np.linalg.norm(anchors, axis=1, keepdims=True)
    images, texts, records = {}, {}, []
    for i in range(n_pairs):
        img_id = f"img{i:05d}"
        cap_id = f"cap{i:05d}"
        img_tokens = anchors[i] + noise * rng.normal(size=(t_img, d_raw))
        txt_tokens = anchors[i] + noise * rng.normal(size=(t_txt, d_raw))
        images[img_id] = RawEmbedding(img_id, "image", img_tokens)
        texts[cap_id] = RawEmbedding(cap_id, "text", txt_tokens)
        records.append(PairRecord(img_id, cap_id, "train"))
    return images, texts, records, anchors


# -- batching ----------------------------------------------------------------

@dataclass
class Batch:
    """Aligned image/text instances; position i on each side is a pair."""

    images: list
    texts: list

    def __len__(self):
        return len(self.images)


def make_batches(records: list, images: dict, texts: dict,
                 batch_size: int, seed: int) -> list:
    """Shuffle pairs and emit full batches with no repeated image per batch.

    The shuffle is deterministic per seed. Any trailing pairs that do
    not fill a whole batch are dropped (the loss needs a full square
    matrix with a clean diagonal).
    """
    if batch_size < 2:
        raise DataError("batch_size must be >= 2")
    if len(records) < 2:
        raise DataError("need at least 2 pairs to batch")
    rng = np.random.default_rng(seed)
    order = list(records)
    rng.shuffle(order)
    batches = []
    pending = order
    while len(pending) >= batch_size:
        batch_recs = []
        used_images = set()
        rest = []
        for rec in pending:
            if len(batch_recs) < batch_size and rec.image_id not in used_images:
                batch_recs.append(rec)
                used_images.add(rec.image_id)
            else:
                rest.append(rec)
        if len(batch_recs) < batch_size:
            break  # remaining pairs all collide on images
        missing = [r for r in batch_recs
                   if r.image_id not in images or r.caption_id not in texts]
        if missing:
            raise DataError(
                f"manifest references unknown ids: {missing[0].image_id}, "
                f"{missing[0].caption_id}")
        batches.append(Batch(
            images=[images[r.image_id] for r in batch_recs],
            texts=[texts[r.caption_id] for r in batch_recs],
        ))
        pending = rest
    return batches

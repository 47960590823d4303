"""Writer for the binary embedding format consumed by the matching engine.

Layout (all integers little-endian):
  magic b"LILE" | u16 version (1) | u8 modality (0 image, 1 text)
  | u32 d_raw | u32 count, then per instance:
  u16 id length | UTF-8 id | u32 t | t * d_raw float32, row-major.
"""

from __future__ import annotations

import os
import struct

import numpy as np

MAGIC = b"LILE"
VERSION = 1
MODALITY_CODES = {"image": 0, "text": 1}


class ExportError(ValueError):
    """Invalid input listing, caption file, or inconsistent features."""


def write_embedding_file(path, instances: list, modality: str) -> None:
    """Write (instance_id, tokens) pairs atomically.

    The file appears under its final name only after a complete write
    (tmp file plus rename), so a crashed export never leaves a partial
    file behind.
    """
    if modality not in MODALITY_CODES:
        raise ExportError(f"unknown modality {modality!r}")
    if not instances:
        raise ExportError("nothing to export")
    d_raw = int(instances[0][1].shape[1])
    seen = set()
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", VERSION))
        fh.write(struct.pack("<B", MODALITY_CODES[modality]))
        fh.write(struct.pack("<I", d_raw))
        fh.write(struct.pack("<I", len(instances)))
        for instance_id, tokens in instances:
            tokens = np.asarray(tokens)
            if tokens.ndim != 2 or tokens.shape[0] < 1:
                raise ExportError(f"{instance_id}: need a (t, d_raw) matrix "
                                  f"with t >= 1, got {tokens.shape}")
            if tokens.shape[1] != d_raw:
                raise ExportError(f"{instance_id}: width {tokens.shape[1]} "
                                  f"does not match file d_raw {d_raw}")
            if not np.isfinite(tokens).all():
                raise ExportError(f"{instance_id}: non-finite features")
            if instance_id in seen:
                raise ExportError(f"duplicate instance id {instance_id!r}")
            seen.add(instance_id)
            idb = instance_id.encode("utf-8")
            fh.write(struct.pack("<H", len(idb)))
            fh.write(idb)
            fh.write(struct.pack("<I", tokens.shape[0]))
            fh.write(tokens.astype("<f4").tobytes(order="C"))
    os.replace(tmp, path)


def write_manifest_fragment(path, records: list) -> None:
    """Write (image_id, caption_id, split) lines, atomically."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        for image_id, caption_id, split in records:
            fh.write(f"{image_id}\t{caption_id}\t{split}\n")
    os.replace(tmp, path)

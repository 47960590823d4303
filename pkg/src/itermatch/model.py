"""Trainable parameter bundle, initialization, and checkpoint files."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .attention import SelfAttentionParams
from .autodiff import Tensor
from .errors import DataError
from .matching import GateParams

CHECKPOINT_MAGIC = b"LILC"
CHECKPOINT_VERSION = 1


@dataclass
class ModelParams:
    """All trainable weights of the matching pipeline."""

    proj_img: Tensor       # (d_raw_img, d)
    proj_txt: Tensor       # (d_raw_txt, d)
    sa_img: SelfAttentionParams
    sa_txt: SelfAttentionParams
    gate_img: GateParams
    gate_txt: GateParams
    alpha_logit: Tensor    # scalar; balance weight is its sigmoid

    def named(self) -> dict:
        return {
            "proj_img": self.proj_img,
            "proj_txt": self.proj_txt,
            "sa_img.w1": self.sa_img.w1,
            "sa_img.w2": self.sa_img.w2,
            "sa_txt.w1": self.sa_txt.w1,
            "sa_txt.w2": self.sa_txt.w2,
            "gate_img.wx": self.gate_img.wx,
            "gate_img.wa": self.gate_img.wa,
            "gate_img.b": self.gate_img.b,
            "gate_txt.wx": self.gate_txt.wx,
            "gate_txt.wa": self.gate_txt.wa,
            "gate_txt.b": self.gate_txt.b,
            "alpha_logit": self.alpha_logit,
        }


def init_params(rng: np.random.Generator, d_raw_img: int, d_raw_txt: int,
                d: int, m: int, hidden: int | None = None,
                tie_projections: bool = True) -> ModelParams:
    """Random initialization.

    With `tie_projections` (default) and equal raw widths, both
    modalities start from one shared projection matrix plus a small
    per-modality jitter: near-identical inputs land near each other in
    the shared space from step zero, while the jitter keeps the initial
    loss informative.
    """
    h = hidden or d

    def mat(rows, cols, scale):
        return Tensor(rng.normal(0.0, scale, size=(rows, cols)),
                      requires_grad=True)

    proj_img = mat(d_raw_img, d, 1.0 / np.sqrt(d_raw_img))
    if tie_projections and d_raw_txt == d_raw_img:
        jitter = rng.normal(0.0, 0.8 / np.sqrt(d_raw_txt),
                            size=(d_raw_txt, d))
        proj_txt = Tensor(proj_img.data + jitter, requires_grad=True)
    else:
        proj_txt = mat(d_raw_txt, d, 1.0 / np.sqrt(d_raw_txt))

    def sa():
        return SelfAttentionParams(
            w1=mat(d, h, 1.0 / np.sqrt(d)),
            w2=mat(h, m, 0.1 / np.sqrt(h)),
        )

    def gate():
        return GateParams(
            wx=mat(d, d, 0.1 / np.sqrt(d)),
            wa=mat(d, d, 0.1 / np.sqrt(d)),
            b=Tensor(np.zeros(d), requires_grad=True),
        )

    return ModelParams(
        proj_img=proj_img, proj_txt=proj_txt,
        sa_img=sa(), sa_txt=sa(),
        gate_img=gate(), gate_txt=gate(),
        alpha_logit=Tensor(np.zeros(()), requires_grad=True),
    )


def params_from_arrays(arrays: dict) -> ModelParams:
    """Rebuild a ModelParams from the dict layout of `ModelParams.named`."""
    t = {k: Tensor(v, requires_grad=True) for k, v in arrays.items()}
    try:
        return ModelParams(
            proj_img=t["proj_img"], proj_txt=t["proj_txt"],
            sa_img=SelfAttentionParams(t["sa_img.w1"], t["sa_img.w2"]),
            sa_txt=SelfAttentionParams(t["sa_txt.w1"], t["sa_txt.w2"]),
            gate_img=GateParams(t["gate_img.wx"], t["gate_img.wa"], t["gate_img.b"]),
            gate_txt=GateParams(t["gate_txt.wx"], t["gate_txt.wa"], t["gate_txt.b"]),
            alpha_logit=t["alpha_logit"],
        )
    except KeyError as exc:
        raise DataError(f"checkpoint missing tensor {exc}") from exc


def save_checkpoint(path, params: ModelParams, config_hash: str) -> None:
    """Write all named tensors as little-endian float64 with shapes."""
    named = params.named()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<H", CHECKPOINT_VERSION))
        hash_bytes = config_hash.encode("utf-8")
        fh.write(struct.pack("<H", len(hash_bytes)))
        fh.write(hash_bytes)
        fh.write(struct.pack("<I", len(named)))
        for name, tensor in named.items():
            nb = name.encode("utf-8")
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
            shape = tensor.data.shape
            fh.write(struct.pack("<B", len(shape)))
            for dim in shape:
                fh.write(struct.pack("<I", dim))
            fh.write(tensor.data.astype("<f8").tobytes(order="C"))


def load_checkpoint(path):
    """Read a checkpoint; returns (arrays dict, config hash)."""
    with open(path, "rb") as fh:
        data = fh.read()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise DataError("truncated checkpoint")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    if take(4) != CHECKPOINT_MAGIC:
        raise DataError("bad checkpoint magic")
    (version,) = struct.unpack("<H", take(2))
    if version != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    (hash_len,) = struct.unpack("<H", take(2))
    config_hash = take(hash_len).decode("utf-8")
    (count,) = struct.unpack("<I", take(4))
    arrays = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        shape = tuple(struct.unpack("<I", take(4))[0] for _ in range(ndim))
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(take(8 * n), dtype="<f8").reshape(shape).copy()
        if not np.isfinite(arr).all():
            raise DataError(f"non-finite values in checkpoint tensor {name}")
        arrays[name] = arr
    return arrays, config_hash

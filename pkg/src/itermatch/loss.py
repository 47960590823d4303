"""Batch similarity matrix and the bidirectional triplet loss."""

from __future__ import annotations

import numpy as np

from .attention import self_attend
from .autodiff import Tensor, stack
from .data import Batch, project
from .errors import DataError
from .matching import pair_scores, total_similarity


def enhance_instances(embeddings: list, proj: Tensor, sa_params) -> Tensor:
    """Project and self-attend each instance; stack bundles to (n, m, d).

    Token counts may differ across instances; the self-attention output
    always has m rows, so the stack is well-formed.
    """
    bundles = []
    for emb in embeddings:
        tokens = project(Tensor(emb.tokens), proj)
        bundles.append(self_attend(tokens, sa_params))
    return stack(bundles, axis=0)


def score_matrix(images: list, texts: list, params, steps: int, lam: float,
                 normalize_over: str = "queries",
                 frozen_attention: bool = False) -> Tensor:
    """All-pairs similarity: S[i, j] = total similarity of image i, text j.

    Every pair is scored in one broadcast pass: image bundles expand to
    (n_img, 1, m, d) against text bundles (1, n_txt, m, d).
    """
    x = enhance_instances(images, params.proj_img, params.sa_img)
    y = enhance_instances(texts, params.proj_txt, params.sa_txt)
    n_img, m, d = x.shape
    n_txt = y.shape[0]
    xb = x.reshape(n_img, 1, m, d)
    yb = y.reshape(1, n_txt, m, d)
    total, _ = pair_scores(xb, yb, params, steps, lam,
                           normalize_over, frozen_attention)
    return total  # (n_img, n_txt)


def batch_similarity(batch: Batch, params, steps: int, lam: float,
                     normalize_over: str = "queries",
                     frozen_attention: bool = False) -> Tensor:
    """n x n similarity matrix for a paired batch; diagonal = ground truth."""
    if len(batch) < 2:
        raise DataError("batch must contain at least 2 pairs")
    return score_matrix(batch.images, batch.texts, params, steps, lam,
                        normalize_over, frozen_attention)


def pair_similarity(image, text, params, steps: int, lam: float,
                    normalize_over: str = "queries",
                    frozen_attention: bool = False) -> Tensor:
    """Single-pair score through the same ops as the batched path."""
    img_tokens = project(Tensor(image.tokens), params.proj_img)
    txt_tokens = project(Tensor(text.tokens), params.proj_txt)
    return total_similarity(img_tokens, txt_tokens, params, steps, lam,
                            normalize_over, frozen_attention)


def triplet_loss(similarities: Tensor, margin: float = 0.2,
                 hardest_negative: bool = False) -> Tensor:
    """Sum of both hinge terms over every in-batch negative.

    For each query i and every j != i:
    [margin - S_ii + S_ij]_+ (wrong text) and [margin - S_ii + S_ji]_+
    (wrong image). `hardest_negative` keeps only the largest violation
    per query per direction instead of the sum.
    """
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    n_rows, n_cols = similarities.shape
    if n_rows != n_cols:
        raise ValueError(f"similarity matrix must be square, got "
                         f"{similarities.shape}")
    if n_rows < 2:
        raise ValueError("need at least 2 pairs")
    eye = Tensor(np.eye(n_rows))
    off = Tensor(1.0 - np.eye(n_rows))
    diag = (similarities * eye).sum(axis=-1, keepdims=True)  # (n, 1)
    # difference first: a constant shift of S then cancels before the
    # margin is added, keeping shift invariance exact
    wrong_text = (similarities - diag + margin).relu() * off
    wrong_image = (similarities.t() - diag + margin).relu() * off
    if hardest_negative:
        return wrong_text.max(axis=-1).sum() + wrong_image.max(axis=-1).sum()
    return wrong_text.sum() + wrong_image.sum()

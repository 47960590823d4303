"""Self-attention feature enhancement and the cross-attention core.

All functions accept arbitrary leading batch dimensions; the documented
shapes are for a single instance.
"""

from __future__ import annotations

from dataclasses import dataclass

from .autodiff import NORM_EPS, Tensor, l2_normalize


@dataclass
class SelfAttentionParams:
    """Two-layer head-attention weights: w1 (d, h) and w2 (h, m)."""

    w1: Tensor
    w2: Tensor


def self_attend(tokens: Tensor, params: SelfAttentionParams) -> Tensor:
    """Condense a (t, d) token sequence into m enhanced (unit-norm) features.

    Head weights are a softmax over token positions of
    tanh(tokens @ w1) @ w2, transposed to (m, t); the output rows are the
    weighted token combinations, L2-normalized.
    """
    logits = (tokens @ params.w1).tanh() @ params.w2  # (t, m)
    heads = logits.t().softmax(axis=-1)               # (m, t)
    return l2_normalize(heads @ tokens, axis=-1)      # (m, d)


def cosine_matrix(x: Tensor, y: Tensor) -> Tensor:
    """Pairwise cosine similarities between rows of x and rows of y."""
    xn = l2_normalize(x, axis=-1)
    yn = l2_normalize(y, axis=-1)
    return xn @ yn.t()


def clamp_normalize(s: Tensor, over: str = "queries") -> Tensor:
    """Clamp similarities at zero, then L2-normalize the clamped matrix.

    s has shape (m_query, m_context). `over="queries"` divides each
    context column by its norm over query rows (the printed formula);
    `over="context"` normalizes each query row instead. All-nonpositive
    slices come out all-zero thanks to the epsilon guard.
    """
    if over not in ("queries", "context"):
        raise ValueError(f"unknown normalization axis {over!r}")
    axis = -2 if over == "queries" else -1
    c = s.relu()
    ss = (c * c).sum(axis=axis, keepdims=True)
    return c / (ss + NORM_EPS * NORM_EPS).sqrt()


def attend(context: Tensor, s_bar: Tensor, lam: float):
    """Dot-product attention over context rows with inverse temperature lam.

    Returns (attended, weights): weights row i is softmax_j(lam * s_bar[i, j]),
    attended row i is the weights-weighted combination of context rows.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    weights = (s_bar * lam).softmax(axis=-1)
    return weights @ context, weights

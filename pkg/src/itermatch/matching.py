"""Gated-memory refinement, the K-step matching loop, and similarity scoring."""

from __future__ import annotations

from dataclasses import dataclass

from .attention import attend, clamp_normalize, cosine_matrix, self_attend
from .autodiff import Tensor, l2_normalize


@dataclass
class GateParams:
    """Gate weights for one refinement direction: wx, wa (d, d) and b (d,)."""

    wx: Tensor
    wa: Tensor
    b: Tensor


@dataclass
class IterationState:
    """Refined query features and their attended context after step k."""

    step: int
    features: Tensor   # (m, d), unit rows
    attended: Tensor   # (m, d)


def gated_memory(x: Tensor, a: Tensor, params: GateParams) -> Tensor:
    """Blend each feature row with its attended context through a sigmoid gate.

    g = sigmoid(x @ wx + a @ wa + b); output rows are
    normalize(g * x + (1 - g) * a).
    """
    g = (x @ params.wx + a @ params.wa + params.b).sigmoid()
    return l2_normalize(g * x + (1.0 - g) * a, axis=-1)


def refine(query0: Tensor, context0: Tensor, gate: GateParams, steps: int,
           lam: float, normalize_over: str = "queries",
           frozen_attention: bool = False) -> list:
    """Run `steps` rounds of attend-then-refine for one direction.

    Each round recomputes cross-attention from the current refined
    queries against the fixed step-0 context, then applies the gated
    memory. With `frozen_attention` the attended context from step 1 is
    reused for every later step.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    states = []
    q = query0
    attended_frozen = None
    for k in range(1, steps + 1):
        if frozen_attention and attended_frozen is not None:
            attended = attended_frozen
        else:
            s_bar = clamp_normalize(cosine_matrix(q, context0), normalize_over)
            attended, _ = attend(context0, s_bar, lam)
            if frozen_attention:
                attended_frozen = attended
        q = gated_memory(q, attended, gate)
        states.append(IterationState(step=k, features=q, attended=attended))
    return states


def iterate(x0: Tensor, y0: Tensor, steps: int, gate_x: GateParams,
            gate_y: GateParams, lam: float, normalize_over: str = "queries",
            frozen_attention: bool = False):
    """Refine both directions: x against y's step-0 bundle and vice versa."""
    x_states = refine(x0, y0, gate_x, steps, lam, normalize_over, frozen_attention)
    y_states = refine(y0, x0, gate_y, steps, lam, normalize_over, frozen_attention)
    return x_states, y_states


def pool(bundle: Tensor) -> Tensor:
    """Whole-instance summary: unit-normalized mean of the feature rows.

    Keeps the row axis (shape (1, d)) so it broadcasts against bundles.
    """
    return l2_normalize(bundle.mean(axis=-2, keepdims=True), axis=-1)


def _mean_row_cosine(a: Tensor, b: Tensor) -> Tensor:
    """Mean over rows of the cosine between corresponding rows of a and b."""
    an = l2_normalize(a, axis=-1)
    bn = l2_normalize(b, axis=-1)
    return (an * bn).sum(axis=-1).mean(axis=-1)


def step_similarity(img: IterationState, txt: IterationState,
                    pooled_img: Tensor, pooled_txt: Tensor,
                    alpha: Tensor) -> Tensor:
    """Per-step score: alpha-weighted attended terms plus direct pooled terms.

    alpha is the sigmoid of the learnable balance logit. The attended
    terms compare each refined feature with its attended context; the
    direct terms compare it with the other instance's pooled vector.
    """
    if img.step != txt.step:
        raise ValueError(f"step mismatch: {img.step} vs {txt.step}")
    attended_terms = (_mean_row_cosine(img.features, img.attended)
                      + _mean_row_cosine(txt.attended, txt.features))
    direct_terms = (_mean_row_cosine(img.features, pooled_txt)
                    + _mean_row_cosine(txt.features, pooled_img))
    return alpha * attended_terms + (1.0 - alpha) * direct_terms


def pair_scores(img_bundle: Tensor, txt_bundle: Tensor, params, steps: int,
                lam: float, normalize_over: str = "queries",
                frozen_attention: bool = False):
    """Total and per-step similarity between two enhanced feature bundles.

    `params` needs gate_img, gate_txt, and alpha_logit attributes.
    Returns (total, [S_1 .. S_K]).
    """
    img_states, txt_states = iterate(
        img_bundle, txt_bundle, steps, params.gate_img, params.gate_txt,
        lam, normalize_over, frozen_attention)
    pooled_img = pool(img_bundle)
    pooled_txt = pool(txt_bundle)
    alpha = params.alpha_logit.sigmoid()
    step_vals = [
        step_similarity(i_st, t_st, pooled_img, pooled_txt, alpha)
        for i_st, t_st in zip(img_states, txt_states)
    ]
    total = step_vals[0]
    for s in step_vals[1:]:
        total = total + s
    return total, step_vals


def total_similarity(img_tokens: Tensor, txt_tokens: Tensor, params,
                     steps: int, lam: float, normalize_over: str = "queries",
                     frozen_attention: bool = False) -> Tensor:
    """Full pipeline score for one (image, text) pair from projected tokens.

    Runs self-attention on both token sequences, then the K-step
    matching loop, and sums the per-step scores.
    """
    img_bundle = self_attend(img_tokens, params.sa_img)
    txt_bundle = self_attend(txt_tokens, params.sa_txt)
    total, _ = pair_scores(img_bundle, txt_bundle, params, steps, lam,
                           normalize_over, frozen_attention)
    return total

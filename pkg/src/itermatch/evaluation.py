"""Retrieval ranking, Recall@K, R@sum, and report formatting."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

DIRECTIONS = ("text_retrieval", "image_retrieval")
REPORT_KS = (1, 5, 10)


@dataclass
class RetrievalMetrics:
    direction: str
    r_at: dict = field(default_factory=dict)   # K -> percentage

    def r_sum_part(self) -> float:
        return sum(self.r_at[k] for k in REPORT_KS)


def rank_ground_truth(similarities: np.ndarray, direction: str) -> list:
    """1-based rank of the diagonal entry for each query.

    `text_retrieval` treats rows as queries (image -> text);
    `image_retrieval` treats columns as queries. Ties rank the lower
    candidate index first, so an equal-scoring earlier candidate pushes
    the ground truth down.
    """
    S = np.asarray(similarities, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"similarity matrix must be square, got {S.shape}")
    if direction == "image_retrieval":
        S = S.T
    elif direction != "text_retrieval":
        raise ValueError(f"unknown direction {direction!r}")
    ranks = []
    for i in range(S.shape[0]):
        row = S[i]
        gt = row[i]
        better = int(np.sum(row > gt))
        tied_earlier = int(np.sum(row[:i] == gt))
        ranks.append(1 + better + tied_earlier)
    return ranks


def recall_at_k(ranks: list, k: int) -> float:
    """Percentage of queries whose ground truth ranks in the top k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not ranks:
        raise ValueError("empty rank list")
    hits = sum(1 for r in ranks if r <= k)
    return 100.0 * hits / len(ranks)


def r_sum(text_metrics: RetrievalMetrics,
          image_metrics: RetrievalMetrics) -> float:
    """Sum of R@1 + R@5 + R@10 over both retrieval directions."""
    for metrics in (text_metrics, image_metrics):
        missing = [k for k in REPORT_KS if k not in metrics.r_at]
        if missing:
            raise ValueError(f"{metrics.direction} missing R@{missing[0]}")
    return text_metrics.r_sum_part() + image_metrics.r_sum_part()


def metrics_from_matrix(similarities: np.ndarray, ks=REPORT_KS) -> dict:
    """Both-direction metrics plus r_sum for one similarity matrix."""
    out = {}
    for direction in DIRECTIONS:
        ranks = rank_ground_truth(similarities, direction)
        out[direction] = RetrievalMetrics(
            direction=direction,
            r_at={k: recall_at_k(ranks, k) for k in ks},
        )
    out["r_sum"] = r_sum(out["text_retrieval"], out["image_retrieval"])
    return out


def format_report(metrics: dict, config_hash: str) -> str:
    lines = [f"config_hash {config_hash}"]
    for direction in DIRECTIONS:
        m = metrics[direction]
        for k in sorted(m.r_at):
            lines.append(f"{direction} R@{k} {m.r_at[k]:.2f}")
    lines.append(f"r_sum {metrics['r_sum']:.2f}")
    return "\n".join(lines) + "\n"


def report_records(metrics: dict, config_hash: str) -> list:
    """Flat key/value records for the machine-readable report."""
    records = []
    for direction in DIRECTIONS:
        m = metrics[direction]
        for k in sorted(m.r_at):
            records.append({
                "direction": direction,
                "K": k,
                "value": m.r_at[k],
                "r_sum": metrics["r_sum"],
                "config_hash": config_hash,
            })
    return records


def write_report(path_txt, path_json, metrics: dict, config_hash: str) -> None:
    with open(path_txt, "w", encoding="utf-8") as fh:
        fh.write(format_report(metrics, config_hash))
    with open(path_json, "w", encoding="utf-8") as fh:
        json.dump(report_records(metrics, config_hash), fh, indent=2,
                  sort_keys=True)
        fh.write("\n")

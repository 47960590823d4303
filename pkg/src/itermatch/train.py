"""Training loop, evaluation runs, and the K-sweep harness."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, replace

import numpy as np

from .autodiff import Adam
from .config import RunConfig
from .data import load_embeddings, load_manifest, make_batches
from .errors import DataError, NumericalError
from .evaluation import metrics_from_matrix, write_report
from .loss import batch_similarity, score_matrix, triplet_loss
from .model import (ModelParams, init_params, load_checkpoint,
                    params_from_arrays, save_checkpoint)

log = logging.getLogger("itermatch")

PLATEAU_FACTOR = 0.1
PLATEAU_PATIENCE = 5


@dataclass
class TrainResult:
    checkpoint_path: str
    log_path: str
    history: list          # one dict per epoch
    params: ModelParams


def _load_dataset(cfg: RunConfig):
    for name in ("img_embeddings", "txt_embeddings", "manifest"):
        path = getattr(cfg, name)
        if not path or not os.path.exists(path):
            raise DataError(f"{name} path missing or not found: {path!r}")
    images = load_embeddings(cfg.img_embeddings)
    texts = load_embeddings(cfg.txt_embeddings)
    records = load_manifest(cfg.manifest)
    return images, texts, records


def _split_records(records, split):
    return [r for r in records if r.split == split]


def _split_matrix(records, images, texts, params, cfg: RunConfig) -> np.ndarray:
    imgs = [images[r.image_id] for r in records]
    txts = [texts[r.caption_id] for r in records]
    S = score_matrix(imgs, txts, params, cfg.k_steps, cfg.lam,
                     cfg.normalize_over, cfg.frozen_attention)
    return S.data


def run_train(cfg: RunConfig) -> TrainResult:
    """Deterministic end-to-end training; writes checkpoint, snapshot, log.

    The learning rate drops by PLATEAU_FACTOR whenever the monitored
    metric (validation r_sum if a val split exists, else training loss)
    fails to improve for PLATEAU_PATIENCE epochs.
    """
    cfg.validate()
    images, texts, records = _load_dataset(cfg)
    train_records = _split_records(records, "train")
    if len(train_records) < 2:
        raise DataError("need at least 2 training pairs")
    val_records = _split_records(records, "val")

    d_raw_img = next(iter(images.values())).tokens.shape[1]
    d_raw_txt = next(iter(texts.values())).tokens.shape[1]
    rng = np.random.default_rng(cfg.seed)
    params = init_params(rng, d_raw_img, d_raw_txt, cfg.d, cfg.m,
                         cfg.hidden_width)
    optimizer = Adam(params.named(), lr=cfg.lr)

    os.makedirs(cfg.out_dir, exist_ok=True)
    with open(os.path.join(cfg.out_dir, "config.txt"), "w",
              encoding="utf-8") as fh:
        fh.write(cfg.snapshot())

    history = []
    best_metric = None
    stale_epochs = 0
    steps_done = 0
    stop = False
    for epoch in range(cfg.epochs):
        if stop:
            break
        batches = make_batches(train_records, images, texts,
                               cfg.batch_size, cfg.seed + epoch)
        epoch_loss = 0.0
        for batch in batches:
            S = batch_similarity(batch, params, cfg.k_steps, cfg.lam,
                                 cfg.normalize_over, cfg.frozen_attention)
            loss = triplet_loss(S, cfg.margin, cfg.hardest_negative)
            value = loss.item()
            if not np.isfinite(value):
                raise NumericalError(f"non-finite loss at step {steps_done}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_loss += value / len(batch)   # per-pair for logging
            steps_done += 1
            if cfg.max_steps and steps_done >= cfg.max_steps:
                stop = True
                break
        entry = {"epoch": epoch, "loss": epoch_loss / max(1, len(batches)),
                 "lr": optimizer.lr, "steps": steps_done}
        if val_records:
            S_val = _split_matrix(val_records, images, texts, params, cfg)
            val_metrics = metrics_from_matrix(S_val)
            entry["val_r_sum"] = val_metrics["r_sum"]
            for direction in ("text_retrieval", "image_retrieval"):
                for k, v in val_metrics[direction].r_at.items():
                    entry[f"val_{direction}_r@{k}"] = v
            monitored = val_metrics["r_sum"]
            improved = best_metric is None or monitored > best_metric
        else:
            monitored = entry["loss"]
            improved = best_metric is None or monitored < best_metric
        if improved:
            best_metric = monitored
            stale_epochs = 0
        else:
            stale_epochs += 1
            if stale_epochs >= PLATEAU_PATIENCE:
                optimizer.lr *= PLATEAU_FACTOR
                stale_epochs = 0
                log.info("epoch %d: plateau, lr -> %.3g", epoch, optimizer.lr)
        history.append(entry)
        log.info("epoch %d loss %.6f", epoch, entry["loss"])

    checkpoint_path = os.path.join(cfg.out_dir, "checkpoint.bin")
    save_checkpoint(checkpoint_path, params, cfg.config_hash())
    log_path = os.path.join(cfg.out_dir, "train_log.jsonl")
    with open(log_path, "w", encoding="utf-8") as fh:
        for entry in history:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    return TrainResult(checkpoint_path, log_path, history, params)


def run_eval(cfg: RunConfig, checkpoint_path: str) -> dict:
    """Score the configured split with a checkpoint and write both reports."""
    cfg.validate()
    images, texts, records = _load_dataset(cfg)
    arrays, saved_hash = load_checkpoint(checkpoint_path)
    if saved_hash != cfg.config_hash():
        raise DataError(
            f"checkpoint config hash {saved_hash} does not match current "
            f"config {cfg.config_hash()}")
    params = params_from_arrays(arrays)
    d_raw_img = next(iter(images.values())).tokens.shape[1]
    if params.proj_img.shape[0] != d_raw_img:
        raise DataError(
            f"checkpoint expects image d_raw {params.proj_img.shape[0]}, "
            f"data has {d_raw_img}")
    eval_records = _split_records(records, cfg.eval_split)
    if not eval_records:
        raise DataError(f"no records in split {cfg.eval_split!r}")
    S = _split_matrix(eval_records, images, texts, params, cfg)
    metrics = metrics_from_matrix(S)
    os.makedirs(cfg.out_dir, exist_ok=True)
    write_report(os.path.join(cfg.out_dir, "metrics.txt"),
                 os.path.join(cfg.out_dir, "metrics.json"),
                 metrics, cfg.config_hash())
    return metrics


def k_sweep(cfg: RunConfig, k_values: list) -> list:
    """Train and evaluate one model per K with identical seed and data.

    Returns one row per K: (K, metrics dict).
    """
    if not k_values:
        raise ValueError("k_values must be non-empty")
    rows = []
    for k in k_values:
        sub = replace(cfg, k_steps=k,
                      out_dir=os.path.join(cfg.out_dir, f"k{k}"))
        result = run_train(sub)
        eval_cfg = replace(sub)
        metrics = run_eval(eval_cfg, result.checkpoint_path)
        rows.append((k, metrics))
    return rows


def format_sweep_table(rows: list) -> str:
    header = (f"{'K':>2}  {'T-R@1':>6} {'T-R@5':>6} {'T-R@10':>6}  "
              f"{'I-R@1':>6} {'I-R@5':>6} {'I-R@10':>6}  {'R@sum':>7}")
    lines = [header]
    for k, metrics in rows:
        t = metrics["text_retrieval"].r_at
        i = metrics["image_retrieval"].r_at
        lines.append(
            f"{k:>2}  {t[1]:6.1f} {t[5]:6.1f} {t[10]:6.1f}  "
            f"{i[1]:6.1f} {i[5]:6.1f} {i[10]:6.1f}  {metrics['r_sum']:7.1f}")
    return "\n".join(lines) + "\n"

"""Loss functions and their gradients.

Covers plain cross-entropy against a (frozen or learnable) classifier and
the cross-entropy form of InfoNCE with emulated multi-shard batch
gathering. Gather emulation is sequential and deterministic: shards are
evaluated in index order and gradients are mean-reduced in that order; no
actual transport is involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .classifiers import ClassifierMatrix
from .errors import DimensionError, LabelError, NormalizationError

DEFAULT_LOG_SCALE = math.log(1.0 / 0.07)  # contrastive-lineage init
DEFAULT_CLAMP_MAX = 100.0
UNIT_NORM_TOL = 1e-4


@dataclass(frozen=True)
class Batch:
    """Video embeddings with labels; text pairs present in contrastive mode."""

    video_embeddings: np.ndarray  # (b, d)
    labels: np.ndarray  # (b,)
    paired_text_embeddings: Optional[np.ndarray] = None

    def __post_init__(self):
        z = np.ascontiguousarray(self.video_embeddings, dtype=np.float64)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if z.ndim != 2:
            raise DimensionError(f"embeddings must be (b, d), got {z.shape}")
        if labels.shape != (z.shape[0],):
            raise DimensionError(f"{labels.shape[0]} labels for {z.shape[0]} embeddings")
        object.__setattr__(self, "video_embeddings", z)
        object.__setattr__(self, "labels", labels)
        if self.paired_text_embeddings is not None:
            t = np.ascontiguousarray(self.paired_text_embeddings, dtype=np.float64)
            if t.shape != z.shape:
                raise DimensionError(f"text shape {t.shape} != video shape {z.shape}")
            object.__setattr__(self, "paired_text_embeddings", t)

    @property
    def size(self) -> int:
        return self.video_embeddings.shape[0]


@dataclass(frozen=True)
class GatherTopology:
    """M shards x N samples each; emulates data-parallel workers."""

    shards: int = 1
    local_batch: int = 1

    def __post_init__(self):
        if self.shards < 1 or self.local_batch < 1:
            raise DimensionError(
                f"need shards >= 1 and local_batch >= 1, got {self.shards}, {self.local_batch}"
            )


@dataclass
class LogitScale:
    """Trainable log temperature with the standard contrastive clamp."""

    log_scale: float = DEFAULT_LOG_SCALE
    clamp_max: float = DEFAULT_CLAMP_MAX

    @property
    def scale(self) -> float:
        return min(math.exp(self.log_scale), self.clamp_max)

    @property
    def clamped(self) -> bool:
        return math.exp(self.log_scale) > self.clamp_max

    def clamp(self) -> None:
        self.log_scale = min(self.log_scale, math.log(self.clamp_max))


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def ce_loss(logits, label: int) -> Tuple[float, np.ndarray]:
    """Max-shifted softmax cross-entropy for one sample.

    Returns (-log softmax(logits)[label], softmax(logits) - onehot(label)).
    """
    logits = np.asarray(logits, dtype=np.float64)
    c = logits.shape[0]
    if not 0 <= label < c:
        raise LabelError(f"label {label} out of range for {c} classes")
    m = logits.max()
    shifted = logits - m
    lse = m + math.log(np.exp(shifted).sum())
    grad = np.exp(shifted)
    grad /= grad.sum()
    loss = lse - float(logits[label])
    grad[label] -= 1.0
    return loss, grad


@dataclass(frozen=True)
class ClassifyResult:
    loss: float
    grad_embeddings: np.ndarray  # (b, d), of the mean loss
    grad_weights: Optional[np.ndarray]  # (c, d) or None when frozen


def classify_batch(
    W: ClassifierMatrix, batch: Batch, temperature: float = 1.0
) -> ClassifyResult:
    """Mean cross-entropy of temperature * W z over a batch.

    The weight-gradient block is absent whenever the classifier is frozen.
    """
    z = batch.video_embeddings
    if z.shape[1] != W.d:
        raise DimensionError(f"embeddings dim {z.shape[1]} != classifier dim {W.d}")
    if batch.labels.size and batch.labels.max() >= W.c:
        raise LabelError(f"label {batch.labels.max()} out of range for {W.c} classes")
    b = batch.size
    logits = temperature * (z @ W.weights.T)
    rows = np.arange(b)
    m = logits.max(axis=-1)
    lse = m + np.log(np.exp(logits - m[:, None]).sum(axis=-1))
    losses = lse - logits[rows, batch.labels]
    delta = _softmax_rows(logits)
    delta[rows, batch.labels] -= 1.0
    delta /= b
    grad_z = temperature * (delta @ W.weights)
    grad_w = None if W.frozen else temperature * (delta.T @ z)
    return ClassifyResult(float(losses.mean()), grad_z, grad_w)


@dataclass(frozen=True)
class ShardGrad:
    """One shard's gradient blocks over the *concatenated* (M*N, d) batch."""

    video: np.ndarray
    text: np.ndarray
    log_scale: float


def _validate_pairs(local_batches: Sequence[Batch]) -> Tuple[np.ndarray, np.ndarray, int]:
    if not local_batches:
        raise DimensionError("need at least one shard")
    n = local_batches[0].size
    for i, lb in enumerate(local_batches):
        if lb.paired_text_embeddings is None:
            raise NormalizationError(f"shard {i} has no paired text embeddings")
        if lb.size != n:
            raise DimensionError(f"shard {i} has {lb.size} rows, expected {n}")
    all_v = np.concatenate([lb.video_embeddings for lb in local_batches])
    all_t = np.concatenate([lb.paired_text_embeddings for lb in local_batches])
    for name, m in (("video", all_v), ("text", all_t)):
        norms = np.linalg.norm(m, axis=1)
        worst = float(np.abs(norms - 1.0).max())
        if worst > UNIT_NORM_TOL:
            raise NormalizationError(
                f"{name} rows must be unit-norm within {UNIT_NORM_TOL}, worst |norm-1| = {worst:.2e}"
            )
    return all_v, all_t, n


def _shard_ce(logits: np.ndarray, targets: np.ndarray):
    """Row-mean CE and d(mean CE)/d(logits) for one direction of one shard."""
    n = logits.shape[0]
    rows = np.arange(n)
    m = logits.max(axis=-1)
    lse = m + np.log(np.exp(logits - m[:, None]).sum(axis=-1))
    loss = float((lse - logits[rows, targets]).mean())
    dlogits = _softmax_rows(logits)
    dlogits[rows, targets] -= 1.0
    dlogits /= n
    return loss, dlogits


def infonce_gathered(
    local_batches: Sequence[Batch], scale: LogitScale
) -> Tuple[List[float], List[ShardGrad]]:
    """Symmetric InfoNCE where every shard sees all M*N gathered negatives.

    Shard i's positives sit at global indices i*N + row. Each ShardGrad
    holds d(shard loss)/d(all embeddings); the data-parallel result is the
    fixed-order mean over shards (``reduce_shard_grads``), which equals the
    single-process gradient on the concatenated batch.
    """
    all_v, all_t, n = _validate_pairs(local_batches)
    s = scale.scale
    ds_dlog = 0.0 if scale.clamped else s
    losses: List[float] = []
    grads: List[ShardGrad] = []
    for i, lb in enumerate(local_batches):
        targets = i * n + np.arange(n)
        zv, zt = lb.video_embeddings, lb.paired_text_embeddings
        sim_v = zv @ all_t.T
        sim_t = zt @ all_v.T
        loss_v, dlog_v = _shard_ce(s * sim_v, targets)
        loss_t, dlog_t = _shard_ce(s * sim_t, targets)
        dlog_v *= 0.5
        dlog_t *= 0.5
        gv = np.zeros_like(all_v)
        gt = np.zeros_like(all_t)
        gv[targets] = s * (dlog_v @ all_t)
        gt += s * dlog_v.T @ zv
        gt[targets] += s * (dlog_t @ all_v)
        gv += s * dlog_t.T @ zt
        dscale = float((dlog_v * sim_v).sum() + (dlog_t * sim_t).sum())
        losses.append(0.5 * (loss_v + loss_t))
        grads.append(ShardGrad(gv, gt, dscale * ds_dlog))
    return losses, grads


def infonce_local_only(
    local_batches: Sequence[Batch], scale: LogitScale
) -> Tuple[List[float], List[ShardGrad]]:
    """InfoNCE without gathering: each shard only sees its own N x N block."""
    all_v, all_t, n = _validate_pairs(local_batches)
    s = scale.scale
    ds_dlog = 0.0 if scale.clamped else s
    losses: List[float] = []
    grads: List[ShardGrad] = []
    targets = np.arange(n)
    for i, lb in enumerate(local_batches):
        rows = slice(i * n, (i + 1) * n)
        zv, zt = lb.video_embeddings, lb.paired_text_embeddings
        sim_v = zv @ zt.T
        sim_t = zt @ zv.T
        loss_v, dlog_v = _shard_ce(s * sim_v, targets)
        loss_t, dlog_t = _shard_ce(s * sim_t, targets)
        dlog_v *= 0.5
        dlog_t *= 0.5
        gv = np.zeros_like(all_v)
        gt = np.zeros_like(all_t)
        gv[rows] = s * (dlog_v @ zt + dlog_t.T @ zt)
        gt[rows] = s * (dlog_v.T @ zv + dlog_t @ zv)
        dscale = float((dlog_v * sim_v).sum() + (dlog_t * sim_t).sum())
        losses.append(0.5 * (loss_v + loss_t))
        grads.append(ShardGrad(gv, gt, dscale * ds_dlog))
    return losses, grads


def reduce_shard_grads(grads: Sequence[ShardGrad]) -> ShardGrad:
    """Fixed-order mean over shards (the data-parallel reduction)."""
    m = len(grads)
    gv = grads[0].video.copy()
    gt = grads[0].text.copy()
    gs = grads[0].log_scale
    for g in grads[1:]:
        gv += g.video
        gt += g.text
        gs += g.log_scale
    return ShardGrad(gv / m, gt / m, gs / m)


def split_into_shards(
    video: np.ndarray, text: np.ndarray, labels: np.ndarray, topology: GatherTopology
) -> List[Batch]:
    """Slice a (M*N, d) pair batch into M local batches of N, in order."""
    m, n = topology.shards, topology.local_batch
    if video.shape[0] != m * n:
        raise DimensionError(f"batch of {video.shape[0]} rows does not tile {m}x{n}")
    return [
        Batch(video[i * n : (i + 1) * n], labels[i * n : (i + 1) * n], text[i * n : (i + 1) * n])
        for i in range(m)
    ]

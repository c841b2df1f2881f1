"""Optimization loop: AdamW with linear warmup + cosine decay.

Defaults follow the standard video-recognition recipe (30 epochs, AdamW
with betas (0.9, 0.98), weight decay 0.2, base/min lr 5e-5/5e-6, 5 warmup
epochs, batch 256). Desk-scale runs override batch size and learning rate;
the schedule shape and the frozen-classifier contract are what the tests
pin down. Pixel-space augmentations have no meaning on pre-extracted
features; an optional Gaussian feature jitter stands in for them.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import _kernels, heads
from .classifiers import ClassifierMatrix
from .datastore import FeatureStore, stratified_fraction
from .errors import (
    DimensionError,
    InsufficientDataError,
    NanAbortError,
    SamplerError,
    UsageError,
)
from .heads import HeadParams, HeadSpec
from .numkit import RngState
from .objectives import (
    Batch,
    GatherTopology,
    LogitScale,
    classify_batch,
    infonce_gathered,
    infonce_local_only,
    reduce_shard_grads,
    split_into_shards,
)

ADAM_EPS = 1e-8


class Objective(Enum):
    FROZEN_CE = "frozen-ce"
    LEARNABLE_CE = "learnable-ce"
    CONTRASTIVE_GATHERED = "contrastive-gathered"
    CONTRASTIVE_LOCAL = "contrastive-local"


CONTRASTIVE = {Objective.CONTRASTIVE_GATHERED, Objective.CONTRASTIVE_LOCAL}


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    warmup_epochs: int = 5
    base_lr: float = 5e-5
    min_lr: float = 5e-6
    schedule: str = "cosine"
    weight_decay: float = 0.2
    beta1: float = 0.9
    beta2: float = 0.98
    batch_size: int = 256
    objective: Objective = Objective.FROZEN_CE
    seed: int = 0
    label_fraction: float = 1.0
    shots: Optional[int] = None
    gather: GatherTopology = field(default_factory=GatherTopology)
    temperature: float = 1.0
    classifier_lr_scale: float = 1.0
    feature_jitter_std: float = 0.0

    def __post_init__(self):
        if self.min_lr > self.base_lr:
            raise UsageError(f"min_lr {self.min_lr} exceeds base_lr {self.base_lr}")
        if self.epochs > 0 and not 0 <= self.warmup_epochs < self.epochs:
            raise UsageError(
                f"need 0 <= warmup_epochs < epochs, got {self.warmup_epochs}, {self.epochs}"
            )
        if not 0.0 < self.label_fraction <= 1.0:
            raise UsageError(f"label_fraction must be in (0, 1], got {self.label_fraction}")
        if self.schedule != "cosine":
            raise UsageError(f"unknown schedule {self.schedule!r}")

    def snapshot(self) -> dict:
        d = asdict(self)
        d["objective"] = self.objective.value
        return d


@dataclass
class OptimState:
    """Per-tensor first/second moments and the shared step counter."""

    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: Dict[str, np.ndarray]) -> "OptimState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    lr: float
    wall_time: float


@dataclass
class RunLog:
    config: dict
    epochs: List[EpochRecord] = field(default_factory=list)
    evals: List[dict] = field(default_factory=list)
    classifier_digest_before: str = ""
    classifier_digest_after: str = ""
    final_log_scale: Optional[float] = None


def lr_at(config: TrainConfig, step: float, steps_per_epoch: int) -> float:
    """Schedule position ``step`` in [0, epochs*steps_per_epoch].

    Linear ramp 0 -> base_lr over the warmup epochs, then cosine decay from
    base_lr to min_lr over the remaining steps.
    """
    if steps_per_epoch < 1:
        raise UsageError(f"steps_per_epoch must be >= 1, got {steps_per_epoch}")
    total = config.epochs * steps_per_epoch
    warm = config.warmup_epochs * steps_per_epoch
    if warm > 0 and step <= warm:
        return config.base_lr * step / warm
    if total <= warm:
        return config.base_lr
    progress = (step - warm) / (total - warm)
    return config.min_lr + 0.5 * (config.base_lr - config.min_lr) * (
        1.0 + math.cos(math.pi * progress)
    )


def adamw_step(
    params: Dict[str, np.ndarray],
    grads: Dict[str, np.ndarray],
    opt: OptimState,
    lr: float,
    config: TrainConfig,
) -> None:
    """One in-place AdamW update over every tensor in ``params``.

    Bias-corrected moments; weight decay is decoupled (p -= lr*wd*p). A
    non-finite gradient aborts with the offending tensor named.
    """
    opt.step += 1
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise DimensionError(f"gradient shape {g.shape} != param shape {p.shape} for {name}")
        if not np.all(np.isfinite(g)):
            raise NanAbortError(f"non-finite gradient in tensor {name!r} at step {opt.step}")
        _kernels.adamw_update(
            p.reshape(-1),
            np.ascontiguousarray(g, dtype=np.float64).reshape(-1),
            opt.m[name].reshape(-1),
            opt.v[name].reshape(-1),
            opt.step,
            lr,
            config.beta1,
            config.beta2,
            ADAM_EPS,
            config.weight_decay,
        )


def fewshot_repeat_plan(
    n_samples: int, target_iters: int, batch: int, rng: RngState
) -> np.ndarray:
    """Sample indices for one epoch, cycling so iterations match a full run.

    Each cycle is an independent reshuffle under the seed; the plan is
    truncated to exactly target_iters * batch entries.
    """
    if n_samples < 1:
        raise SamplerError("cannot build a repeat plan over zero samples")
    need = target_iters * batch
    gen = rng.generator()
    cycles = []
    have = 0
    while have < need:
        cycles.append(gen.permutation(n_samples))
        have += n_samples
    return np.concatenate(cycles)[:need]


def stratified_kshot(store: FeatureStore, k: int, rng: RngState) -> FeatureStore:
    """Exactly k samples per class, deterministic under the seed."""
    if k < 1:
        raise SamplerError(f"need k >= 1 for a k-shot subset, got {k}")
    gen = rng.generator()
    keep = []
    for c in range(len(store.class_names)):
        idx = np.flatnonzero(store.labels == c)
        if idx.size < k:
            raise InsufficientDataError(
                f"class {store.class_names[c]!r} has {idx.size} samples, need {k}"
            )
        keep.append(gen.choice(idx, size=k, replace=False))
    return store.take(np.sort(np.concatenate(keep)))


def _check_coverage(store: FeatureStore) -> None:
    counts = np.bincount(store.labels, minlength=len(store.class_names))
    missing = [store.class_names[i] for i in np.flatnonzero(counts == 0)]
    if missing:
        raise SamplerError(f"classes left without samples: {missing}")


def run(
    features: FeatureStore,
    W: ClassifierMatrix,
    spec: HeadSpec,
    config: TrainConfig,
) -> Tuple[HeadParams, RunLog, ClassifierMatrix]:
    """Train a head (and the classifier, when learnable) on ``features``.

    Returns the trained head parameters, the run log, and the classifier
    as it stands after training (identical object content when frozen).
    Deterministic under config.seed.
    """
    if features.dim != W.d:
        raise DimensionError(f"feature dim {features.dim} != classifier dim {W.d}")
    if spec.dim != features.dim or spec.frames != features.frames:
        raise DimensionError(
            f"head spec ({spec.frames}, {spec.dim}) != store ({features.frames}, {features.dim})"
        )
    learnable = config.objective is Objective.LEARNABLE_CE
    contrastive = config.objective in CONTRASTIVE
    if learnable and W.frozen:
        raise UsageError("learnable-ce requires an unfrozen classifier")
    if config.objective is Objective.FROZEN_CE and not W.frozen:
        raise UsageError("frozen-ce requires a frozen classifier")

    rng = RngState(config.seed)
    params = heads.init_params(spec, rng.child(1))
    opt = OptimState.for_params(params)
    log = RunLog(config=config.snapshot(), classifier_digest_before=W.digest())

    store = features
    if config.label_fraction < 1.0:
        store = stratified_fraction(store, config.label_fraction, rng.child(2))
    if config.shots is not None:
        store = stratified_kshot(store, config.shots, rng.child(3))
    _check_coverage(store)

    if contrastive:
        batch = config.gather.shards * config.gather.local_batch
        if store.n < batch:
            raise UsageError(
                f"contrastive mode needs at least shards*local_batch={batch} samples, "
                f"store has {store.n}"
            )
        text_rows = W.weights / np.linalg.norm(W.weights, axis=1, keepdims=True)
        scale = LogitScale()
        scale_params = {"log_scale": np.array([scale.log_scale])}
        scale_opt = OptimState.for_params(scale_params)
        loss_fn = (
            infonce_gathered
            if config.objective is Objective.CONTRASTIVE_GATHERED
            else infonce_local_only
        )
    else:
        batch = config.batch_size
        scale = None

    if config.shots is not None:
        steps_per_epoch = max(1, math.ceil(features.n / batch))
    else:
        steps_per_epoch = max(1, math.ceil(store.n / batch))

    w_cur = None
    w_opt = None
    if learnable:
        w_cur = {"weights": W.weights.copy()}
        w_opt = OptimState.for_params(w_cur)
    w_matrix = W

    global_step = 0
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        if config.shots is not None:
            order = fewshot_repeat_plan(store.n, steps_per_epoch, batch, rng.child(100 + epoch))
        else:
            order = rng.child(100 + epoch).generator().permutation(store.n)
        jitter_gen = (
            rng.child(10_000 + epoch).generator() if config.feature_jitter_std > 0 else None
        )

        losses = []
        lr = 0.0
        for start in range(0, len(order), batch):
            idx = order[start : start + batch]
            if contrastive and idx.size < batch:
                break  # contrastive shards need full M x N tiles
            frames = store.features[idx]
            if jitter_gen is not None:
                frames = frames + config.feature_jitter_std * jitter_gen.standard_normal(
                    frames.shape
                )
            labels = store.labels[idx]
            z = heads.forward_batch(spec, params, frames)
            global_step += 1
            lr = lr_at(config, global_step, steps_per_epoch)

            if contrastive:
                norms = np.linalg.norm(z, axis=1, keepdims=True)
                zn = z / norms
                shards = split_into_shards(zn, text_rows[labels], labels, config.gather)
                shard_losses, shard_grads = loss_fn(shards, scale)
                reduced = reduce_shard_grads(shard_grads)
                # chain through the row normalization z -> z/|z|
                gzn = reduced.video
                dz = (gzn - (gzn * zn).sum(axis=1, keepdims=True) * zn) / norms
                losses.append(float(np.mean(shard_losses)))
                pgrads, _ = heads.backward_batch(spec, params, frames, dz)
                if params:
                    adamw_step(params, pgrads, opt, lr, config)
                adamw_step(
                    scale_params, {"log_scale": np.array([reduced.log_scale])},
                    scale_opt, lr, config,
                )
                scale.log_scale = float(scale_params["log_scale"][0])
                scale.clamp()
                scale_params["log_scale"][0] = scale.log_scale
            else:
                res = classify_batch(w_matrix, Batch(z, labels), config.temperature)
                losses.append(res.loss)
                pgrads, _ = heads.backward_batch(spec, params, frames, res.grad_embeddings)
                if params:
                    adamw_step(params, pgrads, opt, lr, config)
                if learnable:
                    adamw_step(
                        w_cur, {"weights": res.grad_weights}, w_opt,
                        lr * config.classifier_lr_scale, config,
                    )
                    w_matrix = W.with_weights(w_cur["weights"])

        log.epochs.append(
            EpochRecord(epoch, float(np.mean(losses)) if losses else math.nan, lr,
                        time.perf_counter() - t0)
        )

    log.classifier_digest_after = w_matrix.digest()
    if scale is not None:
        log.final_log_scale = scale.log_scale
    return params, log, w_matrix

"""Evaluation metrics and the three recognition protocols.

Metrics: top-k accuracy and mean average precision, both with documented
lowest-index-first tie-breaking so every protocol is deterministic.
Protocols: general (full test split), zero-shot (full classes, or a random
half repeated and averaged), and K-shot all-way few-shot splits.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import heads
from .classifiers import ClassifierMatrix
from .datastore import FeatureStore
from .errors import DimensionError, InsufficientDataError, LabelError, ManifestError
from .heads import HeadParams, HeadSpec
from .numkit import RngState

log = logging.getLogger(__name__)


class Protocol(Enum):
    GENERAL = "general"
    ZERO_SHOT_HALF = "zero-shot-half"
    ZERO_SHOT_FULL = "zero-shot-full"
    FEW_SHOT = "few-shot"


def worker_count() -> int:
    """Worker bound from T4V_THREADS, defaulting to machine parallelism."""
    env = os.environ.get("T4V_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class EvalReport:
    protocol: Protocol
    repeats: int
    top1: float
    top5: Optional[float]
    map: Optional[float]
    per_class: Dict[str, float]
    top1_std: Optional[float] = None
    top5_std: Optional[float] = None
    map_excluded: int = 0
    notes: str = ""

    def __post_init__(self):
        for name, value in (("top1", self.top1), ("top5", self.top5), ("map", self.map)):
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if (self.repeats > 1) != (self.top1_std is not None):
            raise ValueError("std must be present exactly when repeats > 1")

    def to_json(self) -> dict:
        return {
            "protocol": self.protocol.value,
            "repeats": self.repeats,
            "top1": self.top1,
            "top1_std": self.top1_std,
            "top5": self.top5,
            "top5_std": self.top5_std,
            "map": self.map,
            "map_excluded": self.map_excluded,
            "per_class": self.per_class,
            "notes": self.notes,
        }


@dataclass(frozen=True)
class ViewSet:
    """clips x crops views of one video, each a (T, d) frame matrix."""

    clips: int
    crops: int
    features: List[np.ndarray]

    def __post_init__(self):
        if self.clips * self.crops < 1:
            raise DimensionError("need at least one view")
        if len(self.features) != self.clips * self.crops:
            raise DimensionError(
                f"{len(self.features)} views for clips*crops = {self.clips * self.crops}"
            )


def topk_accuracy(scores, labels, k: int) -> float:
    """Fraction of rows whose label is among the k best scores.

    Ties go to the lower class index (stable sort on descending score).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, c = scores.shape
    if k > c:
        raise DimensionError(f"k={k} exceeds class count {c}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise LabelError(f"labels out of range for {c} classes")
    if n == 0:
        return 0.0
    order = np.argsort(-scores, axis=1, kind="stable")
    hits = (order[:, :k] == labels[:, None]).any(axis=1)
    return float(hits.mean())


def average_precisions(scores, labels) -> Tuple[Dict[int, float], List[int]]:
    """Per-class AP plus the classes excluded for having no positives.

    Samples are ranked by descending class score, ties to the lower sample
    index; AP averages precision-at-hit over the class's positives.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, c = scores.shape
    aps: Dict[int, float] = {}
    excluded: List[int] = []
    for k in range(c):
        order = np.argsort(-scores[:, k], kind="stable")
        rel = labels[order] == k
        positives = int(rel.sum())
        if positives == 0:
            excluded.append(k)
            continue
        hits = np.cumsum(rel)
        ranks = np.arange(1, n + 1)
        aps[k] = float((hits[rel] / ranks[rel]).mean())
    if excluded:
        log.warning("mAP excluded %d class(es) with no positives: %s", len(excluded), excluded)
    return aps, excluded


def mean_average_precision(scores, labels) -> float:
    aps, _ = average_precisions(scores, labels)
    if not aps:
        raise InsufficientDataError("no class has a positive sample")
    return float(np.mean(list(aps.values())))


def multiview_scores(views: ViewSet, spec: HeadSpec, params: HeadParams,
                     W: ClassifierMatrix) -> np.ndarray:
    """Softmax scores averaged over all views of one video."""
    frames = np.stack(views.features)
    z = heads.forward_batch(spec, params, frames)
    logits = z @ W.weights.T
    shifted = logits - logits.max(axis=1, keepdims=True)
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)
    return probs.mean(axis=0)


def _scores_for_store(store: FeatureStore, spec: HeadSpec, params: HeadParams,
                      weights: np.ndarray) -> np.ndarray:
    z = heads.forward_batch(spec, params, store.features)
    return z @ weights.T


def evaluate_store(
    store: FeatureStore,
    W: ClassifierMatrix,
    spec: HeadSpec,
    params: HeadParams,
    protocol: Protocol = Protocol.GENERAL,
    with_map: bool = True,
) -> EvalReport:
    """Single-pass evaluation of head+classifier on a store."""
    scores = _scores_for_store(store, spec, params, W.weights)
    labels = store.labels
    c = W.c
    top1 = topk_accuracy(scores, labels, 1)
    top5 = topk_accuracy(scores, labels, min(5, c))
    map_value = None
    excluded = 0
    if with_map:
        aps, excluded_list = average_precisions(scores, labels)
        excluded = len(excluded_list)
        map_value = float(np.mean(list(aps.values()))) if aps else None
    order = np.argsort(-scores, axis=1, kind="stable")
    per_class = {}
    for k in range(c):
        idx = labels == k
        if idx.any():
            per_class[store.class_names[k]] = float((order[idx, 0] == k).mean())
    return EvalReport(
        protocol=protocol,
        repeats=1,
        top1=top1,
        top5=top5,
        map=map_value,
        per_class=per_class,
        map_excluded=excluded,
    )


def zero_shot(
    half: bool,
    target: FeatureStore,
    text_W: ClassifierMatrix,
    spec: HeadSpec,
    params: HeadParams,
    repeats: int = 10,
    rng: Optional[RngState] = None,
    subset_size: Optional[int] = None,
    exclude: Sequence[str] = (),
) -> EvalReport:
    """Evaluate without training, full-class or repeated half-class.

    Half mode samples ``subset_size`` classes (default floor(c/2)) uniformly
    without replacement, restricts both the test rows and the classifier
    rows, and averages the ``repeats`` runs. ``exclude`` drops classes by
    name before sampling (the cross-dataset split protocol).
    """
    if text_W.class_names != target.class_names:
        raise ManifestError("classifier class names do not match the target store")
    eligible = [i for i, n in enumerate(target.class_names) if n not in set(exclude)]
    if not eligible:
        raise ManifestError("class exclusion removed every class")

    if not half:
        if exclude:
            return _zero_shot_subset(target, text_W, spec, params, np.array(eligible),
                                     Protocol.ZERO_SHOT_FULL)
        report = evaluate_store(target, text_W, spec, params, Protocol.ZERO_SHOT_FULL,
                                with_map=False)
        return report

    if rng is None:
        raise ValueError("half mode needs an RngState")
    size = subset_size if subset_size is not None else len(eligible) // 2
    if size < 1 or size > len(eligible):
        raise ManifestError(f"half-mode subset size {size} infeasible for {len(eligible)} classes")

    gen = rng.generator()
    subsets = [
        np.sort(gen.choice(eligible, size=size, replace=False)) for _ in range(repeats)
    ]

    def one(subset: np.ndarray) -> EvalReport:
        return _zero_shot_subset(target, text_W, spec, params, subset, Protocol.ZERO_SHOT_HALF)

    if repeats > 1 and worker_count() > 1:
        with ThreadPoolExecutor(max_workers=min(worker_count(), repeats)) as pool:
            reports = list(pool.map(one, subsets))  # merged in repeat order
    else:
        reports = [one(s) for s in subsets]

    top1s = np.array([r.top1 for r in reports])
    top5s = np.array([r.top5 for r in reports])
    per_class: Dict[str, list] = {}
    for r in reports:
        for name, acc in r.per_class.items():
            per_class.setdefault(name, []).append(acc)
    return EvalReport(
        protocol=Protocol.ZERO_SHOT_HALF,
        repeats=repeats,
        top1=float(top1s.mean()),
        top5=float(top5s.mean()),
        map=None,
        per_class={k: float(np.mean(v)) for k, v in per_class.items()},
        top1_std=float(top1s.std()) if repeats > 1 else None,
        top5_std=float(top5s.std()) if repeats > 1 else None,
        notes=f"subset_size={size}",
    )


def _zero_shot_subset(
    target: FeatureStore,
    text_W: ClassifierMatrix,
    spec: HeadSpec,
    params: HeadParams,
    subset: np.ndarray,
    protocol: Protocol,
) -> EvalReport:
    remap = {int(old): new for new, old in enumerate(subset)}
    mask = np.isin(target.labels, subset)
    sub_store = FeatureStore(
        target.features[mask],
        np.array([remap[int(l)] for l in target.labels[mask]], dtype=np.int64),
        [target.class_names[i] for i in subset],
        target.split,
    )
    sub_W = ClassifierMatrix(
        text_W.weights[subset], text_W.init_kind, text_W.frozen, sub_store.class_names
    )
    return evaluate_store(sub_store, sub_W, spec, params, protocol, with_map=False)


def fewshot_split(store: FeatureStore, k: int, rng: RngState) -> FeatureStore:
    """K samples per class (K-shot all-way); K=0 returns an empty subset.

    The caller routes K=0 to the zero-shot protocol. K equal to the full
    per-class count reproduces the store unchanged.
    """
    if k < 0:
        raise InsufficientDataError(f"negative shot count {k}")
    if k == 0:
        return store.take(np.empty(0, dtype=np.int64))
    from .training import stratified_kshot

    return stratified_kshot(store, k, rng)

"""Frozen projection-matrix builders and prompt-template expansion.

Four ways to fill the c x d classifier: random normal rows, random
orthogonal rows, multi-class Fisher LDA coefficients, and external text
embeddings. A learnable variant of the random-normal matrix serves as the
trainable baseline.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .datastore import FeatureStore, tap_pool
from .errors import (
    DimensionError,
    InsufficientDataError,
    ManifestError,
    NotPositiveDefiniteError,
    UsageError,
)
from .numkit import (
    RngState,
    as_matrix,
    gaussian_matrix,
    l2_normalize_rows,
    qr_row_orthogonalize,
    solve_spd,
)

log = logging.getLogger(__name__)

LDA_RIDGE_SCALE = 1e-6
DEFAULT_LDA_CAP = 60  # videos sampled per class when building the LDA rows


class InitKind(Enum):
    RANDOM_NORMAL = "random-normal"
    RANDOM_ORTHOGONAL = "random-orthogonal"
    LDA = "lda"
    TEXTUAL = "textual"
    LEARNABLE_BASELINE = "learnable-baseline"


@dataclass(frozen=True)
class ClassifierMatrix:
    """c x d row matrix with init tag and frozen flag; immutable weights."""

    weights: np.ndarray
    init_kind: InitKind
    frozen: bool
    class_names: list[str]

    def __post_init__(self):
        # Private copy so freezing never flips flags on caller-owned arrays.
        w = as_matrix(self.weights, "classifier weights").copy()
        if w.shape[0] != len(self.class_names):
            raise DimensionError(
                f"{w.shape[0]} weight rows for {len(self.class_names)} class names"
            )
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @property
    def c(self) -> int:
        return self.weights.shape[0]

    @property
    def d(self) -> int:
        return self.weights.shape[1]

    def digest(self) -> str:
        return hashlib.sha256(self.weights.tobytes()).hexdigest()

    def with_weights(self, weights: np.ndarray) -> "ClassifierMatrix":
        return ClassifierMatrix(weights, self.init_kind, self.frozen, list(self.class_names))


def _check_dims(d: int, c: int) -> None:
    if c < 2:
        raise DimensionError(f"need at least 2 classes, got c={c}")
    if d < c:
        raise DimensionError(f"need d >= c for {c} classifier rows in R^{d}")


def build_random_normal(d: int, c: int, rng: RngState, class_names=None) -> ClassifierMatrix:
    """Rows drawn i.i.d. from the standard normal; frozen."""
    _check_dims(d, c)
    w = gaussian_matrix(c, d, rng)
    names = list(class_names) if class_names is not None else _names(c)
    return ClassifierMatrix(w, InitKind.RANDOM_NORMAL, True, names)


def build_random_orthogonal(d: int, c: int, rng: RngState, class_names=None) -> ClassifierMatrix:
    """First c rows of the orthogonal factor of a d x d Gaussian QR; frozen."""
    _check_dims(d, c)
    q = qr_row_orthogonalize(gaussian_matrix(d, d, rng))
    names = list(class_names) if class_names is not None else _names(c)
    return ClassifierMatrix(q[:c], InitKind.RANDOM_ORTHOGONAL, True, names)


def build_learnable_baseline(d: int, c: int, rng: RngState, class_names=None) -> ClassifierMatrix:
    """Random-normal rows left unfrozen: the jointly-trained baseline."""
    _check_dims(d, c)
    w = gaussian_matrix(c, d, rng)
    names = list(class_names) if class_names is not None else _names(c)
    return ClassifierMatrix(w, InitKind.LEARNABLE_BASELINE, False, names)


def build_lda(features: FeatureStore, per_class_cap: int = DEFAULT_LDA_CAP) -> ClassifierMatrix:
    """Multi-class Fisher discriminant rows from video-level embeddings.

    Row k is inv(pooled within-class covariance) @ class-k mean, with the
    covariance denominator (n - c). Frames are TAP-pooled first, and at
    most ``per_class_cap`` videos per class (first in store order) enter
    the estimate. A singular covariance falls back to a ridge of
    1e-6 * trace/d, reported through the module logger.
    """
    if per_class_cap < 2:
        raise UsageError(f"per_class_cap must be >= 2, got {per_class_cap}")
    c = len(features.class_names)
    x = tap_pool(features)
    d = x.shape[1]

    means = np.empty((c, d))
    scatter = np.zeros((d, d))
    n_used = 0
    for k in range(c):
        idx = np.flatnonzero(features.labels == k)[:per_class_cap]
        if idx.size < 2:
            raise InsufficientDataError(
                f"class {features.class_names[k]!r} has {idx.size} samples, need >= 2"
            )
        xk = x[idx]
        means[k] = xk.mean(axis=0)
        centered = xk - means[k]
        scatter += centered.T @ centered
        n_used += idx.size

    cov = scatter / (n_used - c)
    try:
        rows = solve_spd(cov, means.T).T
    except NotPositiveDefiniteError:
        ridge = LDA_RIDGE_SCALE * np.trace(cov) / d
        log.warning(
            "within-class covariance is singular; retrying with ridge %.3e", ridge
        )
        rows = solve_spd(cov + ridge * np.eye(d), means.T).T
    return ClassifierMatrix(rows, InitKind.LDA, True, list(features.class_names))


def build_textual(embeddings, class_names) -> ClassifierMatrix:
    """Rows are externally produced text embeddings, L2-normalized; frozen."""
    emb = as_matrix(embeddings, "text embeddings")
    if emb.shape[0] != len(class_names):
        raise ManifestError(
            f"{emb.shape[0]} embedding rows for {len(class_names)} class names"
        )
    return ClassifierMatrix(
        l2_normalize_rows(emb), InitKind.TEXTUAL, True, list(class_names)
    )


def _names(c: int) -> list[str]:
    return [f"class_{i}" for i in range(c)]


PLACEHOLDER = "{}"


@dataclass(frozen=True)
class PromptSet:
    """Templates with exactly one ``{}`` placeholder each, plus class names."""

    templates: list[str]
    class_names: list[str]

    def __post_init__(self):
        for t in self.templates:
            if t.count(PLACEHOLDER) != 1:
                raise UsageError(
                    f"template {t!r} must contain exactly one {PLACEHOLDER!r} placeholder"
                )


def expand_prompts(prompts: PromptSet) -> list[str]:
    """All template x class combinations, template-major order."""
    return [
        t.replace(PLACEHOLDER, name)
        for t in prompts.templates
        for name in prompts.class_names
    ]

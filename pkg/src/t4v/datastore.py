"""Feature/label persistence, manifests, and the synthetic generator.

T4V1 file layout (all integers little-endian):

    bytes 0..3    magic ``T4V1``
    bytes 4..7    version  (u32, currently 1)
    bytes 8..11   n        (u32, number of videos)
    bytes 12..15  T        (u32, frames per video)
    bytes 16..19  d        (u32, embedding dimension)
    then          labels   (n x u32)
    then          payload  (n*T*d x f32, row-major [video][frame][dim])
    then          crc32    (u32 over the payload bytes only)

Features are float32 on disk and widened to float64 in memory. A
text-embedding file is the T=1 special case with n = class count and
labels 0..n-1.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import FormatError, LabelError, ManifestError, SpecError
from .numkit import RngState, gaussian_matrix, qr_row_orthogonalize

MAGIC = b"T4V1"
VERSION = 1


class Split(Enum):
    TRAIN = "train"
    TEST = "test"


def default_class_names(c: int) -> list[str]:
    return [f"class_{i}" for i in range(c)]


@dataclass(frozen=True)
class FeatureStore:
    """n videos x T frames x d dims of embeddings, with labels and names."""

    features: np.ndarray  # (n, T, d) float64, read-only
    labels: np.ndarray  # (n,) int64, read-only
    class_names: list[str]
    split: Split = Split.TRAIN

    def __post_init__(self):
        feats = np.ascontiguousarray(self.features, dtype=np.float64)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if feats.ndim != 3:
            raise FormatError(f"features must be (n, T, d), got shape {feats.shape}")
        if feats.shape[1] < 1:
            raise FormatError("frame count T must be >= 1")
        if labels.shape != (feats.shape[0],):
            raise FormatError(
                f"labels shape {labels.shape} does not match n={feats.shape[0]}"
            )
        if labels.size and (labels.min() < 0 or labels.max() >= len(self.class_names)):
            raise LabelError(
                f"labels must lie in [0, {len(self.class_names)}), "
                f"got range [{labels.min()}, {labels.max()}]"
            )
        feats.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def frames(self) -> int:
        return self.features.shape[1]

    @property
    def dim(self) -> int:
        return self.features.shape[2]

    def take(self, indices: np.ndarray) -> "FeatureStore":
        """Row subset in the given index order."""
        return FeatureStore(
            self.features[indices], self.labels[indices], list(self.class_names), self.split
        )


def write_store(store: FeatureStore, path) -> None:
    """Serialize to the T4V1 binary format (features narrowed to f32)."""
    payload = np.ascontiguousarray(store.features, dtype="<f4").tobytes()
    labels = np.ascontiguousarray(store.labels, dtype="<u4").tobytes()
    header = MAGIC + struct.pack(
        "<IIII", VERSION, store.n, store.frames, store.dim
    )
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(labels)
        fh.write(payload)
        fh.write(struct.pack("<I", crc))


def read_store(
    path,
    class_names: Optional[Sequence[str]] = None,
    split: Split = Split.TRAIN,
) -> FeatureStore:
    """Load a T4V1 file; class names default to generated placeholders."""
    raw = Path(path).read_bytes()
    if len(raw) < 20:
        raise FormatError("file shorter than the T4V1 header", offset=len(raw))
    if raw[:4] != MAGIC:
        raise FormatError(f"bad magic {raw[:4]!r}, expected {MAGIC!r}", offset=0)
    version, n, frames, dim = struct.unpack("<IIII", raw[4:20])
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    labels_end = 20 + 4 * n
    payload_end = labels_end + 4 * n * frames * dim
    if len(raw) != payload_end + 4:
        raise FormatError(
            f"file length {len(raw)} does not match header (expected {payload_end + 4})",
            offset=min(len(raw), payload_end),
        )
    payload = raw[labels_end:payload_end]
    crc_stored = struct.unpack("<I", raw[payload_end:])[0]
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    if crc != crc_stored:
        raise FormatError(
            f"payload CRC mismatch: stored {crc_stored:08x}, computed {crc:08x}",
            offset=payload_end,
        )
    labels = np.frombuffer(raw[20:labels_end], dtype="<u4").astype(np.int64)
    feats = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    feats = feats.reshape(n, frames, dim) if n else feats.reshape(0, frames, dim)
    if class_names is None:
        c = int(labels.max()) + 1 if labels.size else 1
        class_names = default_class_names(c)
    return FeatureStore(feats, labels, list(class_names), split)


def inspect_store(path) -> dict:
    """Header/shape/CRC summary for the ``inspect`` subcommand."""
    store = read_store(path)
    return {
        "format": "T4V1",
        "version": VERSION,
        "n": store.n,
        "frames": store.frames,
        "dim": store.dim,
        "classes": int(store.labels.max()) + 1 if store.n else 0,
        "crc": "ok",
    }


@dataclass(frozen=True)
class Manifest:
    """Dataset manifest; all paths are relative to the manifest file."""

    dataset: str
    class_names: list[str]
    train_features: str
    test_features: str
    text_embeddings: str
    zero_shot_classes: Optional[int] = None
    zero_shot_exclude: list[str] = field(default_factory=list)
    notes: str = ""

    def to_json(self) -> dict:
        return {
            "dataset": self.dataset,
            "class_names": self.class_names,
            "train_features": self.train_features,
            "test_features": self.test_features,
            "text_embeddings": self.text_embeddings,
            "zero_shot_classes": self.zero_shot_classes,
            "zero_shot_exclude": self.zero_shot_exclude,
            "notes": self.notes,
        }


def write_manifest(manifest: Manifest, path) -> None:
    Path(path).write_text(json.dumps(manifest.to_json(), indent=2) + "\n")


def load_manifest(path, validate: bool = True) -> Manifest:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    try:
        manifest = Manifest(
            dataset=data["dataset"],
            class_names=list(data["class_names"]),
            train_features=data["train_features"],
            test_features=data["test_features"],
            text_embeddings=data["text_embeddings"],
            zero_shot_classes=data.get("zero_shot_classes"),
            zero_shot_exclude=list(data.get("zero_shot_exclude", [])),
            notes=data.get("notes", ""),
        )
    except KeyError as exc:
        raise ManifestError(f"manifest {path} is missing field {exc}") from exc
    if validate:
        for rel in (manifest.train_features, manifest.test_features, manifest.text_embeddings):
            fpath = path.parent / rel
            if not fpath.exists():
                raise ManifestError(f"manifest references missing file {fpath}")
            head = fpath.read_bytes()[:20]
            if len(head) < 20 or head[:4] != MAGIC:
                raise ManifestError(f"{fpath} failed T4V1 header validation")
    return manifest


def manifest_store(manifest: Manifest, manifest_path, which: str) -> FeatureStore:
    """Load one of the manifest's stores ('train', 'test' or 'text')."""
    base = Path(manifest_path).parent
    if which == "train":
        return read_store(base / manifest.train_features, manifest.class_names, Split.TRAIN)
    if which == "test":
        return read_store(base / manifest.test_features, manifest.class_names, Split.TEST)
    if which == "text":
        store = read_store(base / manifest.text_embeddings, manifest.class_names, Split.TRAIN)
        if store.n != len(manifest.class_names) or store.frames != 1:
            raise ManifestError(
                f"text-embedding store must be ({len(manifest.class_names)}, 1, d), "
                f"got ({store.n}, {store.frames}, {store.dim})"
            )
        return store
    raise ValueError(f"unknown store selector {which!r}")


@dataclass(frozen=True)
class SyntheticSpec:
    """Correlated-prototype generator spec.

    Classes are partitioned into groups (sizes in ``groups``); prototype
    cosines are ``rho_in`` inside a group and ``rho_out`` across groups.
    """

    classes: int
    groups: Sequence[int]
    rho_in: float
    rho_out: float
    samples_per_class: int
    noise_std: float
    frames: int
    dim: int
    seed: int
    test_samples_per_class: Optional[int] = None

    def __post_init__(self):
        if sum(self.groups) != self.classes:
            raise SpecError(f"group sizes {list(self.groups)} do not sum to {self.classes}")
        if not (0.0 <= self.rho_out <= self.rho_in < 1.0):
            raise SpecError(f"need 0 <= rho_out <= rho_in < 1, got {self.rho_out}, {self.rho_in}")
        if self.dim < self.classes:
            raise SpecError(f"need dim >= classes, got d={self.dim} c={self.classes}")


def _prototype_gram(spec: SyntheticSpec) -> np.ndarray:
    gram = np.full((spec.classes, spec.classes), spec.rho_out)
    start = 0
    for size in spec.groups:
        gram[start : start + size, start : start + size] = spec.rho_in
        start += size
    np.fill_diagonal(gram, 1.0)
    return gram


def generate_synthetic(spec: SyntheticSpec):
    """Build (train, test, prototypes) with exact pairwise prototype cosines.

    Prototypes are the Cholesky rows of the target Gram matrix, carried into
    R^d by a random orthonormal basis; each sample frame is its class
    prototype plus i.i.d. Gaussian noise.
    """
    rng = RngState(spec.seed)
    gram = _prototype_gram(spec)
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as exc:
        raise SpecError(f"cosine structure is not PSD: {exc}") from exc
    # Orthonormal basis rows (c x d); prototypes = chol @ basis keep the Gram.
    basis = qr_row_orthogonalize(gaussian_matrix(spec.classes, spec.dim, rng.child(0)))
    prototypes = chol @ basis

    def make_split(per_class: int, split: Split, stream: int) -> FeatureStore:
        gen = rng.child(stream).generator()
        n = per_class * spec.classes
        feats = np.empty((n, spec.frames, spec.dim))
        labels = np.empty(n, dtype=np.int64)
        row = 0
        for k in range(spec.classes):
            for _ in range(per_class):
                noise = gen.standard_normal((spec.frames, spec.dim)) * spec.noise_std
                feats[row] = prototypes[k] + noise
                labels[row] = k
                row += 1
        return FeatureStore(feats, labels, default_class_names(spec.classes), split)

    test_per_class = (
        spec.test_samples_per_class
        if spec.test_samples_per_class is not None
        else spec.samples_per_class
    )
    train = make_split(spec.samples_per_class, Split.TRAIN, 1)
    test = make_split(test_per_class, Split.TEST, 2)
    return train, test, prototypes


def stratified_fraction(store: FeatureStore, fraction: float, rng: RngState) -> FeatureStore:
    """Per-class ceil(fraction * n_k) subset, deterministic under ``rng``."""
    if not (0.0 < fraction <= 1.0):
        raise SpecError(f"fraction must be in (0, 1], got {fraction}")
    gen = rng.generator()
    keep: list[np.ndarray] = []
    for k in range(len(store.class_names)):
        idx = np.flatnonzero(store.labels == k)
        if idx.size == 0:
            continue
        take = int(np.ceil(fraction * idx.size))
        keep.append(gen.choice(idx, size=take, replace=False))
    selected = np.sort(np.concatenate(keep)) if keep else np.empty(0, dtype=np.int64)
    return store.take(selected)


def tap_pool(store: FeatureStore) -> np.ndarray:
    """Video-level embeddings: mean over the frame axis (n x d)."""
    return store.features.mean(axis=1)

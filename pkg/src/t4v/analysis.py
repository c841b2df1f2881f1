"""Inter-class correlation maps and convergence-curve exports.

Outputs are dependency-free: CSV (UTF-8, comma-separated, header row of
class names, floats printed with ``repr`` so they round-trip exactly) and
binary PPM (P6) images with a documented blue-white-red ramp.

Ramp, per byte: a clipped value v is mapped to x = (v - lo) / (hi - lo).
For x < 0.5 the pixel is (round(510x), round(510x), 255) — blue to white;
for x >= 0.5 it is (255, round(510(1-x)), round(510(1-x))) — white to red.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence

import numpy as np

from .classifiers import ClassifierMatrix, InitKind
from .errors import AlignmentError, UsageError
from .numkit import cosine_rows
from .training import RunLog


@dataclass(frozen=True)
class CorrelationMap:
    class_names: List[str]
    matrix: np.ndarray  # (c, c) cosine similarities
    source: InitKind


def correlation_map(W: ClassifierMatrix) -> CorrelationMap:
    """Pairwise cosine similarities between classifier rows."""
    return CorrelationMap(list(W.class_names), cosine_rows(W.weights, W.weights), W.init_kind)


def _ramp_bytes(x: np.ndarray) -> np.ndarray:
    rgb = np.empty(x.shape + (3,), dtype=np.uint8)
    low = x < 0.5
    ramp_up = np.rint(510.0 * x).clip(0, 255).astype(np.uint8)
    ramp_down = np.rint(510.0 * (1.0 - x)).clip(0, 255).astype(np.uint8)
    rgb[..., 0] = np.where(low, ramp_up, 255)
    rgb[..., 1] = np.where(low, ramp_up, ramp_down)
    rgb[..., 2] = np.where(low, 255, ramp_down)
    return rgb


def export_map(m: CorrelationMap, clip_lo: float, clip_hi: float, csv_path, ppm_path) -> None:
    """Write the map as a CSV table and a P6 heat image clipped to [lo, hi]."""
    if clip_lo >= clip_hi:
        raise UsageError(f"need clip_lo < clip_hi, got {clip_lo}, {clip_hi}")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(m.class_names)
        for row in m.matrix:
            writer.writerow([repr(float(v)) for v in row])

    clipped = np.clip(m.matrix, clip_lo, clip_hi)
    x = (clipped - clip_lo) / (clip_hi - clip_lo)
    rgb = _ramp_bytes(x)
    c = m.matrix.shape[0]
    header = f"P6\n{c} {c}\n255\n".encode("ascii")
    Path(ppm_path).write_bytes(header + rgb.tobytes())


def read_map_csv(path) -> tuple[List[str], np.ndarray]:
    """Read back a map CSV written by export_map."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        names = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    return names, np.array(rows)


def convergence_curves(logs: Sequence[RunLog], path, names: Sequence[str] | None = None) -> None:
    """Per-epoch train-loss columns, one per run, aligned on the epoch axis."""
    if not logs:
        raise UsageError("need at least one run log")
    n_epochs = len(logs[0].epochs)
    for i, lg in enumerate(logs):
        if len(lg.epochs) != n_epochs:
            raise AlignmentError(
                f"run {i} has {len(lg.epochs)} epochs, expected {n_epochs}"
            )
    if names is None:
        names = [f"run_{i}" for i in range(len(logs))]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", *names])
        for e in range(n_epochs):
            writer.writerow([e, *[repr(lg.epochs[e].train_loss) for lg in logs]])


def epochs_to_reach(log: RunLog, threshold: float) -> float:
    """First epoch whose train loss is <= threshold, or inf if never."""
    for rec in log.epochs:
        if rec.train_loss <= threshold:
            return rec.epoch
    return float("inf")

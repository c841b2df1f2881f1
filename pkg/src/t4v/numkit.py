"""Deterministic dense linear algebra and random sampling.

All matrices are 2-D float64 ``numpy.ndarray`` objects, row-major. Random
streams come from numpy's Philox bit generator, a 64-bit counter-based
generator whose streams are platform-stable for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateRowError,
    DimensionError,
    NanAbortError,
    NotPositiveDefiniteError,
    RankError,
)

RNG_ALGORITHM = "philox4x64"

# Pivot magnitude below which a QR factor is treated as rank deficient.
QR_RANK_TOL = 1e-12


@dataclass(frozen=True)
class RngState:
    """Seed plus algorithm id; identical state yields identical streams."""

    seed: int
    algorithm: str = RNG_ALGORITHM

    def generator(self) -> np.random.Generator:
        if self.algorithm != RNG_ALGORITHM:
            raise ValueError(f"unknown rng algorithm: {self.algorithm}")
        return np.random.Generator(np.random.Philox(key=self.seed))

    def child(self, stream: int) -> "RngState":
        """Derived state for an independent sub-stream (epoch, shard, ...)."""
        mixed = np.random.SeedSequence([self.seed, stream]).generate_state(1)[0]
        return RngState(int(mixed), self.algorithm)


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and return a C-contiguous float64 2-D view/copy of ``a``."""
    m = np.ascontiguousarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise NanAbortError(f"{name} contains NaN/Inf entries")
    return m


def gaussian_matrix(rows: int, cols: int, rng: RngState) -> np.ndarray:
    """i.i.d. standard-normal matrix, deterministic under ``rng``."""
    if rows < 1 or cols < 1:
        raise DimensionError(f"dimensions must be >= 1, got {rows}x{cols}")
    return rng.generator().standard_normal((rows, cols), dtype=np.float64)


def qr_row_orthogonalize(m) -> np.ndarray:
    """Orthonormalize the rows of ``m`` (rows x cols, cols >= rows).

    Householder QR of the transpose, with the sign convention that the
    diagonal of R is non-negative, then transposed back. Raises RankError
    when a pivot magnitude falls below ``QR_RANK_TOL``.
    """
    m = as_matrix(m)
    r, c = m.shape
    if c < r:
        raise DimensionError(f"need cols >= rows to orthogonalize rows, got {r}x{c}")

    # Column-orthogonalize a = m^T (c x r) in place.
    a = m.T.copy()
    vs = []  # Householder vectors, one per column
    for j in range(r):
        x = a[j:, j].copy()
        alpha = np.linalg.norm(x)
        if alpha < QR_RANK_TOL:
            raise RankError(f"rank-deficient input: pivot {alpha:.3e} at column {j}")
        # Reflect x onto -sign(x0)*alpha*e1; the final sign flip below makes
        # the R diagonal non-negative regardless.
        if x[0] >= 0:
            x[0] += alpha
        else:
            x[0] -= alpha
        v = x / np.linalg.norm(x)
        a[j:, j:] -= 2.0 * np.outer(v, v @ a[j:, j:])
        vs.append(v)
        if abs(a[j, j]) < QR_RANK_TOL:
            raise RankError(f"rank-deficient input: pivot {abs(a[j, j]):.3e} at column {j}")

    signs = np.sign(np.diag(a)[:r])
    signs[signs == 0.0] = 1.0

    # Accumulate q = H_0 ... H_{r-1} applied to the first r identity columns.
    q = np.zeros((c, r))
    q[:r, :r] = np.eye(r)
    for j in range(r - 1, -1, -1):
        v = vs[j]
        q[j:, :] -= 2.0 * np.outer(v, v @ q[j:, :])
    q *= signs  # flip columns so diag(R) >= 0
    return np.ascontiguousarray(q.T)


def solve_spd(a, b) -> np.ndarray:
    """Solve a @ x = b for symmetric positive-definite ``a`` via Cholesky."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    n = a.shape[0]
    if a.shape[1] != n:
        raise DimensionError(f"a must be square, got {a.shape}")
    if b.shape[0] != n:
        raise DimensionError(f"b has {b.shape[0]} rows, expected {n}")
    scale = max(1.0, float(np.abs(a).max()))
    if float(np.abs(a - a.T).max()) > 1e-10 * scale:
        raise NotPositiveDefiniteError("matrix is not symmetric within 1e-10")
    try:
        chol = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"matrix is not positive definite: {exc}") from exc
    y = np.linalg.solve(chol, b)
    return np.linalg.solve(chol.T, y)


def cosine_rows(a, b) -> np.ndarray:
    """Pairwise cosine similarity between the rows of ``a`` and ``b``."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"column mismatch: {a.shape[1]} vs {b.shape[1]}")
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    if np.any(na == 0.0) or np.any(nb == 0.0):
        raise DegenerateRowError("cosine of a zero-norm row is undefined")
    out = (a / na[:, None]) @ (b / nb[:, None]).T
    return np.clip(out, -1.0, 1.0)


def l2_normalize_rows(m) -> np.ndarray:
    """Rows scaled to unit L2 norm; zero rows are an error."""
    m = as_matrix(m)
    norms = np.linalg.norm(m, axis=1)
    if np.any(norms == 0.0):
        raise DegenerateRowError("cannot normalize a zero-norm row")
    return m / norms[:, None]

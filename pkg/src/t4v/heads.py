"""Trainable temporal heads: frame features (T x d) -> video embedding (d).

Three head kinds:

* TAP    -- temporal average pooling (no parameters).
* T1D    -- depthwise 1-D convolution along time (zero padding, no bias),
            then temporal mean. Kernels start as the identity so the
            untrained head is exactly TAP.
* TTRANS -- pre-norm transformer encoder over the T frame tokens (softmax
            attention, GELU feed-forward, learned positional embeddings
            initialized to zero), then temporal mean.

``backward`` returns exact analytic gradients of ``upstream . forward``
with respect to every parameter tensor and the input frames; the test
suite checks them against central finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict

import numpy as np

from . import _kernels
from .errors import DimensionError
from .numkit import RngState

LN_EPS = 1e-5
_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


class HeadKind(Enum):
    TAP = "tap"
    T1D = "t1d"
    TTRANS = "ttrans"


@dataclass(frozen=True)
class HeadSpec:
    kind: HeadKind
    frames: int
    dim: int
    layers: int = 1
    heads: int = 4
    kernel: int = 3

    def __post_init__(self):
        if self.frames < 1 or self.dim < 1:
            raise DimensionError(f"need frames, dim >= 1, got {self.frames}, {self.dim}")
        if self.kind is HeadKind.T1D and (self.kernel < 1 or self.kernel % 2 == 0):
            raise DimensionError(f"T1D kernel must be odd and >= 1, got {self.kernel}")
        if self.kind is HeadKind.TTRANS:
            if self.layers < 1:
                raise DimensionError(f"TTrans needs layers >= 1, got {self.layers}")
            if self.dim % self.heads != 0:
                raise DimensionError(f"dim {self.dim} not divisible by heads {self.heads}")


HeadParams = Dict[str, np.ndarray]


@dataclass
class TapeGradients:
    """Parameter gradients (same named layout as HeadParams) + input block."""

    params: HeadParams
    frames: np.ndarray


def init_params(spec: HeadSpec, rng: RngState) -> HeadParams:
    """Deterministic initial parameters for a head."""
    if spec.kind is HeadKind.TAP:
        return {}
    if spec.kind is HeadKind.T1D:
        kernels = np.zeros((spec.kernel, spec.dim))
        kernels[spec.kernel // 2] = 1.0
        return {"kernels": kernels}
    gen = rng.generator()
    d, hidden = spec.dim, 4 * spec.dim
    params: HeadParams = {"pos": np.zeros((spec.frames, d))}
    for i in range(spec.layers):
        p = f"L{i}."
        params[p + "ln1.scale"] = np.ones(d)
        params[p + "ln1.shift"] = np.zeros(d)
        for name in ("wq", "wk", "wv", "wo"):
            params[p + "attn." + name] = 0.02 * gen.standard_normal((d, d))
        for name in ("bq", "bk", "bv", "bo"):
            params[p + "attn." + name] = np.zeros(d)
        params[p + "ln2.scale"] = np.ones(d)
        params[p + "ln2.shift"] = np.zeros(d)
        params[p + "ffn.w1"] = 0.02 * gen.standard_normal((d, hidden))
        params[p + "ffn.b1"] = np.zeros(hidden)
        params[p + "ffn.w2"] = 0.02 * gen.standard_normal((hidden, d))
        params[p + "ffn.b2"] = np.zeros(d)
    return params


def _check_frames(spec: HeadSpec, frames: np.ndarray, batched: bool) -> np.ndarray:
    frames = np.ascontiguousarray(frames, dtype=np.float64)
    want = (spec.frames, spec.dim)
    shape = frames.shape[1:] if batched else frames.shape
    if shape != want:
        raise DimensionError(f"frames shape {shape} does not match spec {want}")
    return frames


def _layer_norm(x, scale, shift):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + LN_EPS)
    xhat = xc * inv
    return scale * xhat + shift, xhat, inv


def _layer_norm_backward(dy, xhat, inv, scale):
    dscale = (dy * xhat).sum(axis=(0, 1))
    dshift = dy.sum(axis=(0, 1))
    dxhat = dy * scale
    dx = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dscale, dshift


def _gelu(x):
    inner = _GELU_C * (x + _GELU_A * x**3)
    return 0.5 * x * (1.0 + np.tanh(inner)), inner


def _gelu_grad(x, inner):
    t = np.tanh(inner)
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)


def _split_heads(x, h):
    b, t, d = x.shape
    return x.reshape(b, t, h, d // h).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, t, dk = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, h * dk)


def _ttrans_forward(spec: HeadSpec, params: HeadParams, frames: np.ndarray):
    """Run the encoder, returning the token stream and a backward tape."""
    h = spec.heads
    dk = spec.dim // h
    x = frames + params["pos"]
    tape = []
    for i in range(spec.layers):
        p = f"L{i}."
        u, xhat1, inv1 = _layer_norm(x, params[p + "ln1.scale"], params[p + "ln1.shift"])
        q = _split_heads(u @ params[p + "attn.wq"] + params[p + "attn.bq"], h)
        k = _split_heads(u @ params[p + "attn.wk"] + params[p + "attn.bk"], h)
        v = _split_heads(u @ params[p + "attn.wv"] + params[p + "attn.bv"], h)
        scores = q @ k.swapaxes(-1, -2) / math.sqrt(dk)
        scores -= scores.max(axis=-1, keepdims=True)
        att = np.exp(scores)
        att /= att.sum(axis=-1, keepdims=True)
        ctx = _merge_heads(att @ v)
        x_mid = x + ctx @ params[p + "attn.wo"] + params[p + "attn.bo"]

        w, xhat2, inv2 = _layer_norm(x_mid, params[p + "ln2.scale"], params[p + "ln2.shift"])
        hpre = w @ params[p + "ffn.w1"] + params[p + "ffn.b1"]
        hact, inner = _gelu(hpre)
        x_out = x_mid + hact @ params[p + "ffn.w2"] + params[p + "ffn.b2"]

        tape.append((x, u, xhat1, inv1, q, k, v, att, ctx, x_mid, w, xhat2, inv2, hpre, inner, hact))
        x = x_out
    return x, tape


def _flat(x):
    return x.reshape(-1, x.shape[-1])


def _ttrans_backward(spec: HeadSpec, params: HeadParams, tape, dx):
    h = spec.heads
    dk = spec.dim // h
    grads: HeadParams = {}
    for i in range(spec.layers - 1, -1, -1):
        p = f"L{i}."
        (x, u, xhat1, inv1, q, k, v, att, ctx, x_mid, w, xhat2, inv2, hpre, inner, hact) = tape[i]

        # FFN block: x_out = x_mid + gelu(LN2(x_mid) @ w1 + b1) @ w2 + b2
        dhact = dx @ params[p + "ffn.w2"].T
        grads[p + "ffn.w2"] = _flat(hact).T @ _flat(dx)
        grads[p + "ffn.b2"] = dx.sum(axis=(0, 1))
        dhpre = dhact * _gelu_grad(hpre, inner)
        grads[p + "ffn.w1"] = _flat(w).T @ _flat(dhpre)
        grads[p + "ffn.b1"] = dhpre.sum(axis=(0, 1))
        dw = dhpre @ params[p + "ffn.w1"].T
        dx_mid, dscale2, dshift2 = _layer_norm_backward(dw, xhat2, inv2, params[p + "ln2.scale"])
        grads[p + "ln2.scale"] = dscale2
        grads[p + "ln2.shift"] = dshift2
        dx_mid = dx_mid + dx  # residual

        # Attention block: x_mid = x + (att @ v merged) @ wo + bo
        do = dx_mid
        grads[p + "attn.wo"] = _flat(ctx).T @ _flat(do)
        grads[p + "attn.bo"] = do.sum(axis=(0, 1))
        dctx = _split_heads(do @ params[p + "attn.wo"].T, h)
        datt = dctx @ v.swapaxes(-1, -2)
        dv = att.swapaxes(-1, -2) @ dctx
        dscores = att * (datt - (datt * att).sum(axis=-1, keepdims=True))
        dq = dscores @ k / math.sqrt(dk)
        dk_ = dscores.swapaxes(-1, -2) @ q / math.sqrt(dk)
        du = np.zeros_like(u)
        for name, dproj in (("wq", dq), ("wk", dk_), ("wv", dv)):
            dmerged = _merge_heads(dproj)
            grads[p + "attn." + name] = _flat(u).T @ _flat(dmerged)
            grads[p + "attn.b" + name[1]] = dmerged.sum(axis=(0, 1))
            du += dmerged @ params[p + "attn." + name].T
        dx_in, dscale1, dshift1 = _layer_norm_backward(du, xhat1, inv1, params[p + "ln1.scale"])
        grads[p + "ln1.scale"] = dscale1
        grads[p + "ln1.shift"] = dshift1
        dx = dx_in + dx_mid  # residual
    grads["pos"] = dx.sum(axis=0)
    return grads, dx


def forward_batch(spec: HeadSpec, params: HeadParams, frames: np.ndarray) -> np.ndarray:
    """Batched forward: (b, T, d) -> (b, d)."""
    frames = _check_frames(spec, frames, batched=True)
    if spec.kind is HeadKind.TAP:
        return frames.mean(axis=1)
    if spec.kind is HeadKind.T1D:
        return _kernels.t1d_forward(frames, params["kernels"]).mean(axis=1)
    x, _ = _ttrans_forward(spec, params, frames)
    return x.mean(axis=1)


def backward_batch(spec: HeadSpec, params: HeadParams, frames: np.ndarray, upstream: np.ndarray):
    """Batched gradients of sum_b(upstream_b . forward(frames_b)).

    Returns (parameter gradients summed over the batch, per-sample frame
    gradients of shape (b, T, d)).
    """
    frames = _check_frames(spec, frames, batched=True)
    upstream = np.ascontiguousarray(upstream, dtype=np.float64)
    b = frames.shape[0]
    if upstream.shape != (b, spec.dim):
        raise DimensionError(f"upstream shape {upstream.shape} != ({b}, {spec.dim})")
    dtokens = np.broadcast_to(upstream[:, None, :] / spec.frames, frames.shape)
    if spec.kind is HeadKind.TAP:
        return {}, dtokens.copy()
    if spec.kind is HeadKind.T1D:
        grad_frames, grad_kernels = _kernels.t1d_backward(
            frames, params["kernels"], np.ascontiguousarray(dtokens)
        )
        return {"kernels": grad_kernels}, grad_frames
    _, tape = _ttrans_forward(spec, params, frames)
    grads, dframes = _ttrans_backward(spec, params, tape, dtokens.copy())
    return grads, dframes


def forward(spec: HeadSpec, params: HeadParams, frames: np.ndarray) -> np.ndarray:
    """Single-sample forward: (T, d) -> (d,)."""
    frames = _check_frames(spec, frames, batched=False)
    return forward_batch(spec, params, frames[None])[0]


def backward(spec: HeadSpec, params: HeadParams, frames: np.ndarray, upstream: np.ndarray) -> TapeGradients:
    """Single-sample gradients of (upstream . forward(frames))."""
    frames = _check_frames(spec, frames, batched=False)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (spec.dim,):
        raise DimensionError(f"upstream shape {upstream.shape} != ({spec.dim},)")
    grads, dframes = backward_batch(spec, params, frames[None], upstream[None])
    return TapeGradients(params=grads, frames=dframes[0])


def clone_params(params: HeadParams) -> HeadParams:
    return {k: v.copy() for k, v in params.items()}

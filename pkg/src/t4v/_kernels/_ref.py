"""Numpy reference implementations of the hot kernels.

These define the semantics; the compiled extension in ``_ck.pyx`` must
agree with them (the test suite checks parity).
"""

import numpy as np


def t1d_forward(frames, kernels):
    """Depthwise 1-D convolution along the frame axis, zero-padded.

    frames: (b, T, d), kernels: (K, d) with K odd.
    out[b, t, c] = sum_k kernels[k, c] * frames[b, t + k - K//2, c]
    """
    b, T, d = frames.shape
    K = kernels.shape[0]
    off = K // 2
    out = np.zeros_like(frames)
    for k in range(K):
        lo = max(0, off - k)
        hi = min(T, T + off - k)
        if lo >= hi:
            continue
        out[:, lo:hi, :] += kernels[k] * frames[:, lo + k - off : hi + k - off, :]
    return out


def t1d_backward(frames, kernels, upstream):
    """Gradients of sum(upstream * t1d_forward) w.r.t. frames and kernels."""
    b, T, d = frames.shape
    K = kernels.shape[0]
    off = K // 2
    grad_frames = np.zeros_like(frames)
    grad_kernels = np.zeros_like(kernels)
    for k in range(K):
        lo = max(0, off - k)
        hi = min(T, T + off - k)
        if lo >= hi:
            continue
        src = slice(lo + k - off, hi + k - off)
        dst = slice(lo, hi)
        grad_kernels[k] = (upstream[:, dst, :] * frames[:, src, :]).sum(axis=(0, 1))
        grad_frames[:, src, :] += kernels[k] * upstream[:, dst, :]
    return grad_frames, grad_kernels


def adamw_update(p, g, m, v, step, lr, beta1, beta2, eps, weight_decay):
    """One decoupled-weight-decay Adam step, in place on flat f64 arrays."""
    if weight_decay != 0.0:
        p *= 1.0 - lr * weight_decay
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    bc1 = 1.0 - beta1**step
    bc2 = 1.0 - beta2**step
    p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)

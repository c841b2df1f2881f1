"""Backend parity: the compiled kernels must agree with the numpy reference."""

import numpy as np
import pytest

from t4v import _kernels
from t4v._kernels import _ref
from t4v.numkit import RngState

cython_only = pytest.mark.skipif(
    _kernels.BACKEND != "cython", reason="compiled backend not built"
)


def _random_case(seed, b=3, T=6, d=5, K=3):
    gen = RngState(seed).generator()
    frames = gen.standard_normal((b, T, d))
    kernels = gen.standard_normal((K, d))
    upstream = gen.standard_normal((b, T, d))
    return frames, kernels, upstream


@cython_only
class TestParity:
    def test_t1d_forward_bit_identical(self):
        for seed in range(5):
            frames, kernels, _ = _random_case(seed, K=1 + 2 * (seed % 3))
            a = _kernels.t1d_forward(frames, kernels)
            b = _ref.t1d_forward(frames, kernels)
            np.testing.assert_array_equal(a, b)

    def test_t1d_backward_close(self):
        # reference reductions use numpy pairwise summation, so the kernel
        # gradient can differ from the sequential C loop in the last bits
        for seed in range(5):
            frames, kernels, upstream = _random_case(seed)
            gf_a, gk_a = _kernels.t1d_backward(frames, kernels, upstream)
            gf_b, gk_b = _ref.t1d_backward(frames, kernels, upstream)
            np.testing.assert_allclose(gf_a, gf_b, rtol=1e-13, atol=1e-13)
            np.testing.assert_allclose(gk_a, gk_b, rtol=1e-12, atol=1e-13)

    def test_adamw_bit_identical(self):
        gen = RngState(7).generator()
        p1 = gen.standard_normal(257)
        g = gen.standard_normal(257)
        m1 = np.zeros(257)
        v1 = np.zeros(257)
        p2, m2, v2 = p1.copy(), m1.copy(), v1.copy()
        for step in range(1, 6):
            _kernels.adamw_update(p1, g, m1, v1, step, 1e-3, 0.9, 0.98, 1e-8, 0.2)
            _ref.adamw_update(p2, g, m2, v2, step, 1e-3, 0.9, 0.98, 1e-8, 0.2)
        np.testing.assert_array_equal(p1, p2)
        np.testing.assert_array_equal(m1, m2)
        np.testing.assert_array_equal(v1, v2)


def test_reference_t1d_identity_kernel():
    frames, _, _ = _random_case(1)
    kernels = np.zeros((3, 5))
    kernels[1] = 1.0
    np.testing.assert_array_equal(_ref.t1d_forward(frames, kernels), frames)


def test_backend_reports_name():
    assert _kernels.BACKEND in {"cython", "python"}

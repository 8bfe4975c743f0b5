"""Numerical parity between the numpy reference kernels and the compiled
extension, plus the dispatch rules of the hybrid backend."""

import numpy as np
import pytest

from kinfuse.tensor import kernels
from kinfuse.tensor.kernels import _pykernels as pyk

ck = pytest.importorskip("kinfuse.tensor.kernels._ckernels",
                         reason="compiled kernels not built")


CONV_CASES = [
    (1, 1, 3, 1, 2, 1),
    (4, 2, 10, 3, 3, 1),
    (4, 2, 10, 3, 3, 2),
    (8, 16, 16, 16, 4, 2),
    (2, 32, 12, 32, 3, 1),
    (5, 3, 7, 2, 7, 1),  # kernel spans the whole input
]


@pytest.mark.parametrize("B,C,L,F,K,stride", CONV_CASES)
def test_conv1d_parity(B, C, L, F, K, stride):
    rng = np.random.default_rng(B * 100 + C)
    x = rng.normal(size=(B, C, L))
    w = rng.normal(size=(F, C, K))
    b = rng.normal(size=F)
    ref = pyk.conv1d_forward(x, w, b, stride)
    got = ck.conv1d_forward(x, w, b, stride)
    np.testing.assert_allclose(got, ref, atol=1e-12)
    gout = rng.normal(size=ref.shape)
    for r, g in zip(pyk.conv1d_backward(x, w, stride, gout),
                    ck.conv1d_backward(x, w, stride, gout)):
        np.testing.assert_allclose(g, r, atol=1e-12)


@pytest.mark.parametrize("B,H", [(1, 1), (6, 4), (32, 16), (3, 64)])
def test_lstm_gates_parity(B, H):
    rng = np.random.default_rng(B * 7 + H)
    z = rng.normal(scale=2.0, size=(B, 4 * H))
    c_prev = rng.normal(size=(B, H))
    h_py, c_py, cache_py = pyk.lstm_gates_forward(z, c_prev)
    h_ck, c_ck, cache_ck = ck.lstm_gates_forward(z, c_prev)
    np.testing.assert_allclose(h_ck, h_py, atol=1e-12)
    np.testing.assert_allclose(c_ck, c_py, atol=1e-12)
    gh = rng.normal(size=(B, H))
    gc = rng.normal(size=(B, H))
    for args in [(gh, gc), (gh, None), (None, gc)]:
        for r, g in zip(pyk.lstm_gates_backward(cache_py, *args),
                        ck.lstm_gates_backward(cache_ck, *args)):
            np.testing.assert_allclose(g, r, atol=1e-12)


def test_hybrid_dispatch_matches_reference():
    # whatever impl the dispatcher picks, values must match the reference
    rng = np.random.default_rng(0)
    for (C, K, F) in [(1, 2, 4), (8, 3, 32), (32, 3, 32)]:
        x = rng.normal(size=(6, C, 12))
        w = rng.normal(size=(F, C, K))
        b = rng.normal(size=F)
        np.testing.assert_allclose(kernels.conv1d_forward(x, w, b, 1),
                                   pyk.conv1d_forward(x, w, b, 1), atol=1e-12)


def test_backend_name():
    assert kernels.backend_name() in ("python", "compiled")

"""Kernel backend selection.

The compiled extension is preferred when importable; otherwise the numpy
fallback is used. ``KINFUSE_KERNELS=python`` forces the fallback and
``KINFUSE_KERNELS=compiled`` makes a missing extension a hard error
(useful in benchmarks and CI).

The compiled backend is a hybrid: convolution work above a size threshold
goes to the numpy path, whose BLAS contraction wins once the per-output
arithmetic dominates the per-call overhead (thresholds picked from
benchmarks/bench_kernels.py). Dispatch depends only on shapes, so runs
stay deterministic.
"""

import os

from . import _pykernels as _py

_requested = os.environ.get("KINFUSE_KERNELS", "").strip().lower()
if _requested not in ("", "python", "compiled"):
    raise ValueError(f"KINFUSE_KERNELS must be 'python' or 'compiled', got {_requested!r}")

_c = None
if _requested != "python":
    try:
        from . import _ckernels as _c  # type: ignore[attr-defined]
    except ImportError:
        if _requested == "compiled":
            raise

# compiled conv wins while C*K*F stays below the per-call overhead of the
# strided-view + BLAS path; above it dgemm throughput takes over
_CONV_FWD_MAX_WORK = 512
_CONV_BWD_MAX_WORK = 256

if _c is None:
    conv1d_forward = _py.conv1d_forward
    conv1d_backward = _py.conv1d_backward
    lstm_gates_forward = _py.lstm_gates_forward
    lstm_gates_backward = _py.lstm_gates_backward
else:
    def conv1d_forward(x, w, b, stride):
        f, c, k = w.shape
        if c * k * f <= _CONV_FWD_MAX_WORK:
            return _c.conv1d_forward(x, w, b, stride)
        return _py.conv1d_forward(x, w, b, stride)

    def conv1d_backward(x, w, stride, gout):
        f, c, k = w.shape
        if c * k * f <= _CONV_BWD_MAX_WORK:
            return _c.conv1d_backward(x, w, stride, gout)
        return _py.conv1d_backward(x, w, stride, gout)

    lstm_gates_forward = _c.lstm_gates_forward
    lstm_gates_backward = _c.lstm_gates_backward


def backend_name():
    return "python" if _c is None else "compiled"

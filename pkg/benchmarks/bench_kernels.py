#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure numpy fallback.

Runs the two hot kernels (valid 1-D convolution, LSTM gate math) forward
and backward on shapes representative of training, then times one full
training step of a default-size model under each backend.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from kinfuse.tensor.kernels import _pykernels as pyk

try:
    from kinfuse.tensor.kernels import _ckernels as ck
except ImportError:
    ck = None


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(repeats):
    rng = np.random.default_rng(0)
    cases = [
        ("conv1d B=256 C=8 L=8 F=32 K=3", (256, 8, 8), (32, 8, 3), 1),
        ("conv1d B=512 C=16 L=16 F=16 K=4", (512, 16, 16), (16, 16, 4), 1),
    ]
    rows = []
    for name, xs, ws, stride in cases:
        x = rng.normal(size=xs)
        w = rng.normal(size=ws)
        b = rng.normal(size=ws[0])
        g = pyk.conv1d_forward(x, w, b, stride)
        gout = rng.normal(size=g.shape)
        rows.append((name + " fwd",
                     timeit(lambda: pyk.conv1d_forward(x, w, b, stride), repeats),
                     timeit(lambda: ck.conv1d_forward(x, w, b, stride), repeats)
                     if ck else None))
        rows.append((name + " bwd",
                     timeit(lambda: pyk.conv1d_backward(x, w, stride, gout), repeats),
                     timeit(lambda: ck.conv1d_backward(x, w, stride, gout), repeats)
                     if ck else None))
    for B, H in ((256, 16), (512, 64)):
        z = rng.normal(size=(B, 4 * H))
        c = rng.normal(size=(B, H))
        _, _, cache_py = pyk.lstm_gates_forward(z, c)
        gh = rng.normal(size=(B, H))
        gc = rng.normal(size=(B, H))
        name = f"lstm gates B={B} H={H}"
        rows.append((name + " fwd",
                     timeit(lambda: pyk.lstm_gates_forward(z, c), repeats),
                     timeit(lambda: ck.lstm_gates_forward(z, c), repeats)
                     if ck else None))
        cache_c = ck.lstm_gates_forward(z, c)[2] if ck else None
        rows.append((name + " bwd",
                     timeit(lambda: pyk.lstm_gates_backward(cache_py, gh, gc), repeats),
                     timeit(lambda: ck.lstm_gates_backward(cache_c, gh, gc), repeats)
                     if ck else None))
    return rows


def bench_train_step(repeats):
    """One full forward/backward/update on a default-size model, compiled
    backend versus forced python fallback (fresh subprocess each)."""
    import subprocess
    import sys

    code = (
        "import time, numpy as np\n"
        "from kinfuse.model import ExtractorConfig, TransferableModel, cross_entropy\n"
        "from kinfuse.tensor import Adam, backend_name\n"
        "ext = ExtractorConfig(n_segments=4, conv_layers=((32,3,1),(32,3,1)), rnn_hidden=16)\n"
        "m = TransferableModel(8, 32, 4, ext, seed=0)\n"
        "rng = np.random.default_rng(0)\n"
        "X = rng.normal(size=(64, 8, 32)); y = rng.integers(0, 4, size=64)\n"
        "opt = Adam(m.parameters())\n"
        "best = float('inf')\n"
        f"for _ in range({repeats}):\n"
        "    t0 = time.perf_counter()\n"
        "    opt.zero_grad(); loss = cross_entropy(m, X, y); loss.backward(); opt.step()\n"
        "    best = min(best, time.perf_counter() - t0)\n"
        "print(backend_name(), best)\n"
    )
    out = {}
    for backend in ("compiled", "python"):
        proc = subprocess.run([sys.executable, "-c", code],
                              capture_output=True, text=True,
                              env={"KINFUSE_KERNELS": backend, "PATH": "/usr/bin:/bin:/usr/local/bin"})
        if proc.returncode == 0:
            name, secs = proc.stdout.split()
            out[name] = float(secs)
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args()

    print(f"{'kernel':<40}{'python':>12}{'compiled':>12}{'speedup':>9}")
    for name, t_py, t_c in bench_kernels(args.repeats):
        if t_c is None:
            print(f"{name:<40}{t_py * 1e6:>10.0f}us{'n/a':>12}{'':>9}")
        else:
            print(f"{name:<40}{t_py * 1e6:>10.0f}us{t_c * 1e6:>10.0f}us"
                  f"{t_py / t_c:>8.1f}x")

    step = bench_train_step(max(5, args.repeats // 2))
    if step:
        print()
        print("full training step (batch 64, default model):")
        for backend, secs in sorted(step.items()):
            print(f"  {backend:<10}{secs * 1e3:>10.2f} ms")
        if len(step) == 2:
            print(f"  speedup   {step['python'] / step['compiled']:>9.2f}x")


if __name__ == "__main__":
    main()

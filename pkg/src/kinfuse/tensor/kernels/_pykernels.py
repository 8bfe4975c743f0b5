"""Pure numpy implementations of the hot inner-loop kernels.

These are the reference semantics; the compiled backend in ``_ckernels.pyx``
must match them numerically. Shapes follow the convention used throughout
the autodiff layer:

conv1d    x: (B, C, L), w: (F, C, K), b: (F,)        -> (B, F, Lo)
lstm gate z: (B, 4H) in [input, forget, cell, output] block order,
          c_prev: (B, H)                             -> h, c: (B, H)
"""

import numpy as np


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def conv1d_forward(x, w, b, stride):
    B, C, L = x.shape
    F, C2, K = w.shape
    lo = (L - K) // stride + 1
    win = np.lib.stride_tricks.sliding_window_view(x, K, axis=2)[:, :, ::stride, :]
    out = np.tensordot(win, w, axes=([1, 3], [1, 2]))  # (B, Lo, F)
    out = np.ascontiguousarray(out.transpose(0, 2, 1))
    out += b[None, :, None]
    return out


def conv1d_backward(x, w, stride, gout):
    B, C, L = x.shape
    F, _, K = w.shape
    lo = gout.shape[2]
    win = np.lib.stride_tricks.sliding_window_view(x, K, axis=2)[:, :, ::stride, :]
    gb = gout.sum(axis=(0, 2))
    gw = np.tensordot(gout, win, axes=([0, 2], [0, 2]))  # (F, C, K)
    gx = np.zeros_like(x)
    for k in range(K):
        # every output position l reads x[:, :, l*stride + k]
        contrib = np.tensordot(gout, w[:, :, k], axes=([1], [0]))  # (B, Lo, C)
        gx[:, :, k : k + stride * lo : stride] += contrib.transpose(0, 2, 1)
    return gx, gw, gb


def lstm_gates_forward(z, c_prev):
    H = c_prev.shape[1]
    i = _sigmoid(z[:, 0:H])
    f = _sigmoid(z[:, H : 2 * H])
    g = np.tanh(z[:, 2 * H : 3 * H])
    o = _sigmoid(z[:, 3 * H : 4 * H])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (i, f, g, o, c_prev, tc)


def lstm_gates_backward(cache, grad_h, grad_c):
    """Gradients of the gate math; grad_h/grad_c may be None (treated as 0)."""
    i, f, g, o, c_prev, tc = cache
    B, H = i.shape
    gc = np.zeros((B, H)) if grad_c is None else grad_c.copy()
    if grad_h is not None:
        gc += grad_h * o * (1.0 - tc * tc)
    gz = np.empty((B, 4 * H))
    gz[:, 0:H] = gc * g * i * (1.0 - i)
    gz[:, H : 2 * H] = gc * c_prev * f * (1.0 - f)
    gz[:, 2 * H : 3 * H] = gc * i * (1.0 - g * g)
    if grad_h is not None:
        gz[:, 3 * H : 4 * H] = grad_h * tc * o * (1.0 - o)
    else:
        gz[:, 3 * H : 4 * H] = 0.0
    gc_prev = gc * f
    return gz, gc_prev

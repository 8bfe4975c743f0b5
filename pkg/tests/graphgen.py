"""Random composite graphs over the full primitive set, for gradient
checks. Each draw returns (f, point): a pure scalar-valued function of one
Tensor plus the point to check at. The differentiated variable is planted
in a randomly chosen role (input, conv weight, recurrent weight, dense
weight, bias, ...) so every primitive's backward gets exercised."""

import numpy as np

from kinfuse import tensor as tz


def _finish(t, rng):
    # collapse to a scalar through one of the reductions
    choice = rng.integers(3)
    if choice == 0:
        return tz.sum_(t)
    if choice == 1:
        return tz.mean(t)
    return tz.sum_(tz.mul(t, t))


def _elementwise_chain(rng):
    n = int(rng.integers(2, 8))
    c1 = rng.normal(size=n)
    c2 = rng.normal(size=n)

    def f(v):
        t = tz.tanh(v)
        t = tz.mul(t, tz.Tensor(c1))
        t = tz.add(t, tz.Tensor(c2))
        t = tz.sigmoid(t)
        return _finish(t, np.random.default_rng(0))

    return f, rng.normal(size=n)


def _softmax_pipe(rng):
    b, c = int(rng.integers(2, 5)), int(rng.integers(2, 6))
    temp = float(rng.choice([0.5, 1.0, 2.0]))
    w = rng.normal(size=(b, c))
    labels = rng.integers(0, c, size=b)
    use_log = bool(rng.integers(2))

    def f(v):
        if use_log:
            t = tz.log_softmax(v, temperature=temp)
            return tz.neg(tz.mean(tz.gather_rows(t, labels)))
        t = tz.softmax(v, temperature=temp)
        return tz.sum_(tz.mul(t, tz.Tensor(w)))

    return f, rng.normal(size=(b, c))


def _linear_stack(rng):
    b, n, m = int(rng.integers(2, 5)), int(rng.integers(2, 6)), int(rng.integers(2, 5))
    x = rng.normal(size=(b, n))
    w = rng.normal(size=(m, n)) / np.sqrt(n)
    bias = rng.normal(size=m)
    role = rng.choice(["x", "w", "b"])

    def f(v):
        xs = v if role == "x" else tz.Tensor(x)
        ws = v if role == "w" else tz.Tensor(w)
        bs = v if role == "b" else tz.Tensor(bias)
        t = tz.linear(xs, ws, bs)
        t = tz.relu(tz.add(t, 0.25))
        t = tz.matmul(t, tz.Tensor(rng.normal(size=(m, 3))))
        return _finish(t, np.random.default_rng(1))

    point = {"x": x, "w": w, "b": bias}[role]
    return f, point


def _conv_pipe(rng):
    b = int(rng.integers(1, 4))
    c = int(rng.integers(1, 4))
    L = int(rng.integers(5, 10))
    F = int(rng.integers(1, 4))
    K = int(rng.integers(2, 4))
    stride = int(rng.choice([1, 2]))
    x = rng.normal(size=(b, c, L))
    w = rng.normal(size=(F, c, K)) / np.sqrt(c * K)
    bias = rng.normal(size=F)
    role = rng.choice(["x", "w", "b"])

    def f(v):
        xs = v if role == "x" else tz.Tensor(x)
        ws = v if role == "w" else tz.Tensor(w)
        bs = v if role == "b" else tz.Tensor(bias)
        t = tz.conv1d(xs, ws, bs, stride=stride)
        t = tz.tanh(t)
        t = tz.mean(t, axis=2)
        return _finish(t, np.random.default_rng(2))

    point = {"x": x, "w": w, "b": bias}[role]
    return f, point


def _lstm_pipe(rng):
    b = int(rng.integers(1, 4))
    i = int(rng.integers(1, 4))
    h = int(rng.integers(1, 4))
    steps = int(rng.integers(1, 4))
    xs = [rng.normal(size=(b, i)) for _ in range(steps)]
    wx = rng.normal(size=(4 * h, i)) / np.sqrt(i)
    wh = rng.normal(size=(4 * h, h)) / np.sqrt(h)
    bias = rng.normal(size=4 * h)
    role = rng.choice(["x0", "wx", "wh", "b"])

    def f(v):
        wxs = v if role == "wx" else tz.Tensor(wx)
        whs = v if role == "wh" else tz.Tensor(wh)
        bs = v if role == "b" else tz.Tensor(bias)
        hs = tz.Tensor(np.zeros((b, h)))
        cs = tz.Tensor(np.zeros((b, h)))
        outs = []
        for m in range(steps):
            xm = v if (role == "x0" and m == 0) else tz.Tensor(xs[m])
            hs, cs = tz.lstm_cell(xm, hs, cs, wxs, whs, bs)
            outs.append(hs)
        t = tz.stack(outs, axis=1)
        return tz.sum_(tz.mul(t, t))

    point = {"x0": xs[0], "wx": wx, "wh": wh, "b": bias}[role]
    return f, point


def _shape_ops_pipe(rng):
    b, l, d = int(rng.integers(2, 4)), int(rng.integers(2, 5)), int(rng.integers(2, 5))
    a = rng.normal(size=(b, d))
    m = int(rng.integers(l))

    def f(v):
        t = tz.reshape(v, (b, l, d))
        row = tz.select(t, 1, m)
        comb = tz.sum_(tz.mul(t, tz.reshape(tz.Tensor(a), (b, 1, d))), axis=2)
        t2 = tz.transpose(comb, (1, 0))
        s = tz.div(tz.sum_(tz.mul(row, row)), tz.add(tz.sum_(tz.mul(t2, t2)), 3.0))
        return tz.add(s, tz.sum_(tz.sqrt(tz.add(tz.mul(comb, comb), 1.0))))

    return f, rng.normal(size=b * l * d)


def _exp_log_pipe(rng):
    n = int(rng.integers(2, 7))

    def f(v):
        t = tz.exp(tz.mul(v, 0.3))
        t = tz.log(tz.add(tz.mul(t, t), 1.0))
        return tz.mean(t)

    return f, rng.normal(size=n)


_BUILDERS = (
    _elementwise_chain,
    _softmax_pipe,
    _linear_stack,
    _conv_pipe,
    _lstm_pipe,
    _shape_ops_pipe,
    _exp_log_pipe,
)


def random_scalar_graph(rng):
    builder = _BUILDERS[int(rng.integers(len(_BUILDERS)))]
    return builder(rng)

"""The transferable classifier: segment-wise conv feature extraction, a
per-head feature scorer, and a dense + temperature-softmax aggregator.

A model splits a (channels, time) sample into ``l`` equal segments, runs a
shared conv stack with global mean pooling over each segment, threads an
LSTM across the segment embeddings (zero initial state) to produce the
feature matrix Q with ``l`` columns of dimension ``d``, scores the ``d``
feature dimensions with one head each, combines them as Q^T a, and maps
the combined vector through a dense layer and a temperature softmax.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as tz

CHECKPOINT_VERSION = 1

SCORER_MODES = ("raw-linear", "raw-tanh", "feature-attention")


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class ExtractorConfig:
    n_segments: int
    conv_layers: tuple  # ((n_filters, kernel_size, stride), ...)
    rnn_hidden: int

    def __post_init__(self):
        self.conv_layers = tuple(tuple(int(v) for v in layer) for layer in self.conv_layers)
        if self.n_segments < 1 or self.rnn_hidden < 1 or not self.conv_layers:
            raise ValueError("extractor config needs n_segments >= 1, rnn_hidden >= 1 "
                             "and at least one conv layer")

    def segment_len(self, seq_len):
        d = seq_len // self.n_segments
        if d < 1:
            raise ValueError(
                f"sequence length {seq_len} too short for {self.n_segments} segments")
        return d

    def conv_out_len(self, seq_len):
        """Length after the conv stack on one segment; validates the chain."""
        cur = self.segment_len(seq_len)
        for i, (_, kernel, stride) in enumerate(self.conv_layers):
            if kernel > cur:
                raise ValueError(
                    f"conv layer {i}: kernel {kernel} exceeds segment length {cur}")
            if stride < 1:
                raise ValueError(f"conv layer {i}: stride must be >= 1")
            cur = (cur - kernel) // stride + 1
        return cur

    def to_dict(self):
        return {"n_segments": self.n_segments,
                "conv_layers": [list(l) for l in self.conv_layers],
                "rnn_hidden": self.rnn_hidden}


@dataclass
class ScorerParams:
    mode: str
    weights: np.ndarray  # (d, n_in); raw modes score the flattened raw sample
    bias: np.ndarray  # (d,)

    def __post_init__(self):
        if self.mode not in SCORER_MODES:
            raise ValueError(f"unknown scorer mode {self.mode!r}")
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValueError("scorer weights must be (d, n_in) with bias (d,)")

    @property
    def n_heads(self):
        return self.weights.shape[0]


@dataclass
class AggregatorParams:
    weights: np.ndarray  # (n_classes, n_segments)
    bias: np.ndarray  # (n_classes,)
    temperature: float

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.temperature <= 0:
            raise ValueError(f"softmax temperature must be positive, got {self.temperature}")


@dataclass
class TrainConfig:
    lr: float = 0.001
    max_epochs: int = 200
    patience: int = 20
    batch_size: int = 64
    seed: int = 0


@dataclass
class FitResult:
    train_losses: list = field(default_factory=list)
    val_losses: list = field(default_factory=list)
    best_epoch: int = -1
    epochs_run: int = 0


def _uniform(rng, shape, fan_in):
    lim = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-lim, lim, size=shape)


class TransferableModel:
    """Classifier decomposed into extractor, scorer and aggregator parts."""

    def __init__(self, n_channels, seq_len, n_classes, extractor,
                 scorer_mode="raw-linear", temperature=1.0, seed=0):
        if n_channels < 1 or seq_len < 1:
            raise ValueError("input spec needs n_channels >= 1 and seq_len >= 1")
        if n_classes < 2:
            raise ValueError("need at least 2 classes")
        if scorer_mode not in SCORER_MODES:
            raise ValueError(f"unknown scorer mode {scorer_mode!r}")
        if temperature <= 0:
            raise ValueError("softmax temperature must be positive")
        extractor.conv_out_len(seq_len)  # validates segmenting and the conv chain
        self.n_channels = n_channels
        self.seq_len = seq_len
        self.n_classes = n_classes
        self.extractor = extractor
        self.scorer_mode = scorer_mode
        self.temperature = float(temperature)
        self.seed = seed
        self.fit_info = None

        rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
        d = extractor.rnn_hidden
        l = extractor.n_segments
        self.conv_w = []
        self.conv_b = []
        c_in = n_channels
        for (n_filt, kernel, _) in extractor.conv_layers:
            fan = c_in * kernel
            self.conv_w.append(tz.Tensor(_uniform(rng, (n_filt, c_in, kernel), fan),
                                         requires_grad=True))
            self.conv_b.append(tz.Tensor(_uniform(rng, (n_filt,), fan), requires_grad=True))
            c_in = n_filt
        rnn_in = c_in
        self.wx = tz.Tensor(_uniform(rng, (4 * d, rnn_in), rnn_in), requires_grad=True)
        self.wh = tz.Tensor(_uniform(rng, (4 * d, d), d), requires_grad=True)
        self.rb = tz.Tensor(_uniform(rng, (4 * d,), d), requires_grad=True)
        n_in = l if scorer_mode == "feature-attention" else n_channels * seq_len
        self.sw = tz.Tensor(_uniform(rng, (d, n_in), n_in), requires_grad=True)
        self.sb = tz.Tensor(_uniform(rng, (d,), n_in), requires_grad=True)
        self.dw = tz.Tensor(_uniform(rng, (n_classes, l), l), requires_grad=True)
        self.db = tz.Tensor(_uniform(rng, (n_classes,), l), requires_grad=True)

    # ------------------------------------------------------------------ params

    @property
    def d(self):
        return self.extractor.rnn_hidden

    @property
    def n_segments(self):
        return self.extractor.n_segments

    def extractor_parameters(self):
        return [*self.conv_w, *self.conv_b, self.wx, self.wh, self.rb]

    def scorer_parameters(self):
        return [self.sw, self.sb]

    def aggregator_parameters(self):
        return [self.dw, self.db]

    def parameters(self):
        """Checkpoint order: conv layers (weight then bias each), recurrent
        weights, scorer heads, dense weights, dense bias."""
        out = []
        for w, b in zip(self.conv_w, self.conv_b):
            out.extend([w, b])
        out.extend([self.wx, self.wh, self.rb, self.sw, self.sb, self.dw, self.db])
        return out

    def scorer_params(self):
        return ScorerParams(mode=self.scorer_mode, weights=self.sw.data.copy(),
                            bias=self.sb.data.copy())

    def set_scorer_params(self, sp):
        if sp.mode != self.scorer_mode:
            raise ValueError(f"scorer mode mismatch: model {self.scorer_mode}, got {sp.mode}")
        if sp.weights.shape != self.sw.data.shape:
            raise ValueError(f"scorer weight shape {sp.weights.shape} != {self.sw.data.shape}")
        self.sw.data = sp.weights.astype(np.float64).copy()
        self.sb.data = sp.bias.astype(np.float64).copy()

    def aggregator_params(self):
        return AggregatorParams(weights=self.dw.data.copy(), bias=self.db.data.copy(),
                                temperature=self.temperature)

    # ----------------------------------------------------------------- forward

    def _check_batch(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 3 or X.shape[1] != self.n_channels or X.shape[2] != self.seq_len:
            raise ValueError(
                f"batch shape {X.shape} does not match input spec "
                f"(channels={self.n_channels}, seq_len={self.seq_len})")
        return X

    def features_batch(self, X):
        """Feature matrices for a batch: Tensor of shape (N, l, d).

        Row m of a sample's matrix is the LSTM state after segment m; the
        state threads left to right from zero.
        """
        X = self._check_batch(X)
        N = X.shape[0]
        l = self.n_segments
        D = self.extractor.segment_len(self.seq_len)
        seg = X[:, :, : l * D].reshape(N, self.n_channels, l, D)
        seg = np.ascontiguousarray(seg.transpose(0, 2, 1, 3)).reshape(N * l, self.n_channels, D)
        h = tz.Tensor(seg)
        for (w, b, (_, _, stride)) in zip(self.conv_w, self.conv_b,
                                          self.extractor.conv_layers):
            h = tz.relu(tz.conv1d(h, w, b, stride=stride))
        h = tz.mean(h, axis=2)  # global average pool over remaining time
        grid = tz.reshape(h, (N, l, h.data.shape[1]))
        d = self.d
        hs = tz.Tensor(np.zeros((N, d)))
        cs = tz.Tensor(np.zeros((N, d)))
        states = []
        for m in range(l):
            hs, cs = tz.lstm_cell(tz.select(grid, 1, m), hs, cs, self.wx, self.wh, self.rb)
            states.append(hs)
        return tz.stack(states, axis=1)  # (N, l, d)

    def scores_batch(self, X, Q=None):
        """Importance scores, Tensor (N, d)."""
        X = self._check_batch(X)
        if self.scorer_mode in ("raw-linear", "raw-tanh"):
            flat = tz.Tensor(X.reshape(X.shape[0], -1))
            a = tz.linear(flat, self.sw, self.sb)
            return tz.tanh(a) if self.scorer_mode == "raw-tanh" else a
        if Q is None:
            Q = self.features_batch(X)
        # head i attends over the l positional values of feature track i
        weighted = tz.mul(tz.tanh(Q), tz.transpose(self.sw, (1, 0)))
        a = tz.sum_(weighted, axis=1)
        return tz.add(a, self.sb)

    def logits_batch(self, X, return_cache=False):
        X = self._check_batch(X)
        Q = self.features_batch(X)
        a = self.scores_batch(X, Q=Q)
        N = X.shape[0]
        combined = tz.sum_(tz.mul(Q, tz.reshape(a, (N, 1, self.d))), axis=2)  # (N, l)
        logits = tz.linear(combined, self.dw, self.db)
        if return_cache:
            return logits, {"Q": Q, "scores": a, "combined": combined}
        return logits

    def proba_batch(self, X):
        return tz.softmax(self.logits_batch(X), temperature=self.temperature).data

    # -------------------------------------------------------------- per sample

    def _one(self, sample):
        sample = np.asarray(sample, dtype=np.float64)
        if sample.ndim != 2:
            raise ValueError(f"sample must be (channels, time), got shape {sample.shape}")
        return sample[None, :, :]

    def extract_features(self, sample):
        """Feature matrix with l columns of dimension d, shape (d, l)."""
        Q = self.features_batch(self._one(sample)).data[0]  # (l, d)
        return np.ascontiguousarray(Q.T)

    def score_features(self, sample, Q=None):
        Qt = None if Q is None else tz.Tensor(np.asarray(Q).T[None, :, :])
        return self.scores_batch(self._one(sample), Q=Qt).data[0]

    def predict_proba(self, sample):
        return self.proba_batch(self._one(sample))[0]

    def predict(self, sample):
        """Argmax class; exact ties resolve to the lowest class index."""
        return int(np.argmax(self.predict_proba(sample)))

    def predict_batch(self, X):
        return np.argmax(self.proba_batch(X), axis=1)

    # ------------------------------------------------------------------ state

    def snapshot(self, params=None):
        return [p.data.copy() for p in (params or self.parameters())]

    def restore(self, blobs, params=None):
        for p, b in zip(params or self.parameters(), blobs):
            p.data = b.copy()


# ---------------------------------------------------------------------------
# losses and the shared fit loop


def cross_entropy(model, X, y):
    logits = model.logits_batch(X)
    logp = tz.log_softmax(logits, temperature=model.temperature)
    return tz.neg(tz.mean(tz.gather_rows(logp, y)))


def _chunked_value(fn, n, chunk=1024):
    """Sample-weighted mean of a per-chunk mean loss."""
    total = 0.0
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        total += float(fn(start, stop).data) * (stop - start)
    return total / n


def validation_cross_entropy(model, ds):
    return _chunked_value(
        lambda a, b: cross_entropy(model, ds.X[a:b], ds.y[a:b]), len(ds))


class BatchFeeder:
    """Seeded epoch shuffles; reshuffles whenever the permutation runs out."""

    def __init__(self, n, batch_size, rng):
        self.n = n
        self.batch_size = batch_size
        self.rng = rng
        self.perm = None
        self.pos = 0

    def next(self):
        if self.perm is None or self.pos >= self.n:
            self.perm = self.rng.permutation(self.n)
            self.pos = 0
        batch = self.perm[self.pos : self.pos + self.batch_size]
        self.pos += len(batch)
        return batch

    def steps_per_epoch(self):
        return max(1, math.ceil(self.n / self.batch_size))


def fit(model, params, epoch_losses, val_loss, cfg):
    """Generic trainer: Adam on ``params``, early stopping on ``val_loss``.

    ``epoch_losses`` is called once per epoch and must yield scalar loss
    Tensors (one per optimizer step). The best-validation parameters are
    restored before returning.
    """
    opt = tz.Adam(params, lr=cfg.lr)
    result = FitResult()
    best = model.snapshot(params)
    best_val = math.inf
    bad = 0
    for epoch in range(cfg.max_epochs):
        epoch_total, epoch_n = 0.0, 0
        for loss in epoch_losses():
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_total += float(loss.data)
            epoch_n += 1
        train_loss = epoch_total / max(1, epoch_n)
        if not math.isfinite(train_loss):
            raise TrainingDivergedError(f"training loss became {train_loss} at epoch {epoch}")
        v = val_loss()
        result.train_losses.append(train_loss)
        result.val_losses.append(v)
        result.epochs_run = epoch + 1
        if v < best_val:
            best_val = v
            best = model.snapshot(params)
            result.best_epoch = epoch
            bad = 0
        else:
            bad += 1
            if bad >= cfg.patience:
                break
    model.restore(best, params)
    return result


def train_supervised(train, val, n_classes, extractor, cfg,
                     scorer_mode="raw-linear", temperature=1.0):
    """Cross-entropy training of a fresh model; returns the best-validation
    checkpoint under the shared optimizer protocol."""
    if len(train) == 0:
        raise ValueError("training dataset is empty")
    if train.y.max() >= n_classes or train.y.min() < 0:
        raise ValueError(f"labels out of range [0, {n_classes})")
    model = TransferableModel(train.n_channels, train.seq_len, n_classes, extractor,
                              scorer_mode=scorer_mode, temperature=temperature,
                              seed=cfg.seed)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    feeder = BatchFeeder(len(train), cfg.batch_size, rng)

    def epoch_losses():
        for _ in range(feeder.steps_per_epoch()):
            idx = feeder.next()
            yield cross_entropy(model, train.X[idx], train.y[idx])

    model.fit_info = fit(model, model.parameters(), epoch_losses,
                         lambda: validation_cross_entropy(model, val), cfg)
    return model


# ---------------------------------------------------------------------------
# checkpoints


def save_model(model, path):
    """Write ``manifest.json`` plus ``params.bin`` (little-endian float64).

    Blob order: conv layers in order (weight then bias), recurrent input
    weight, recurrent hidden weight, recurrent bias, scorer heads 1..d
    (weight row then bias per head), dense weights, dense bias.
    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": CHECKPOINT_VERSION,
        "n_channels": model.n_channels,
        "seq_len": model.seq_len,
        "n_classes": model.n_classes,
        "extractor": model.extractor.to_dict(),
        "scorer_mode": model.scorer_mode,
        "temperature": model.temperature,
        "seed": model.seed,
    }
    with open(path / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    blobs = []
    for w, b in zip(model.conv_w, model.conv_b):
        blobs.extend([w.data, b.data])
    blobs.extend([model.wx.data, model.wh.data, model.rb.data])
    for i in range(model.d):  # head-wise: weights then bias per head
        blobs.append(model.sw.data[i])
        blobs.append(model.sb.data[i : i + 1])
    blobs.extend([model.dw.data, model.db.data])
    flat = np.concatenate([np.ascontiguousarray(b, dtype="<f8").ravel() for b in blobs])
    with open(path / "params.bin", "wb") as f:
        f.write(flat.tobytes())
    return path


def load_model(path):
    path = Path(path)
    with open(path / "manifest.json") as f:
        man = json.load(f)
    if man.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {man.get('format_version')}")
    extractor = ExtractorConfig(**man["extractor"])
    model = TransferableModel(man["n_channels"], man["seq_len"], man["n_classes"],
                              extractor, scorer_mode=man["scorer_mode"],
                              temperature=man["temperature"], seed=man["seed"])
    flat = np.frombuffer((path / "params.bin").read_bytes(), dtype="<f8")
    pos = 0

    def take(shape):
        nonlocal pos
        size = int(np.prod(shape))
        chunk = flat[pos : pos + size].reshape(shape).astype(np.float64)
        pos += size
        return chunk

    for w, b in zip(model.conv_w, model.conv_b):
        w.data = take(w.data.shape)
        b.data = take(b.data.shape)
    model.wx.data = take(model.wx.data.shape)
    model.wh.data = take(model.wh.data.shape)
    model.rb.data = take(model.rb.data.shape)
    sw = np.empty_like(model.sw.data)
    sb = np.empty_like(model.sb.data)
    for i in range(model.d):
        sw[i] = take((sw.shape[1],))
        sb[i] = take((1,))[0]
    model.sw.data, model.sb.data = sw, sb
    model.dw.data = take(model.dw.data.shape)
    model.db.data = take(model.db.data.shape)
    if pos != flat.size:
        raise ValueError(f"params.bin holds {flat.size} values, expected {pos}")
    return model

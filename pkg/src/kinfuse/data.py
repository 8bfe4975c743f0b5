"""Datasets: rich/poor/paired containers, a seeded synthetic generator,
lossless persistence, splitting and channel-selection utilities.

On disk a dataset is a directory holding ``manifest.json`` plus
``data.csv`` (columns sample_id,label,channel,time_index,value, sorted by
sample_id, channel, time_index, values printed with 17 significant digits)
and optionally ``data.bin`` (little-endian float64 in the same ordering).
A paired dataset is two such directories (``rich_view``, ``poor_view``)
plus ``pairs.json`` listing the shared sample ids.
"""

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
_N_BINS = 16  # histogram bins for entropy / mutual-information estimates

_PROTO_STREAM = 0xA1
_SAMPLE_STREAM = 0xB2


class DatasetFormatError(ValueError):
    """Raised when stored files disagree with their manifest."""


@dataclass
class TimeSeriesSample:
    values: np.ndarray  # (channels, time)
    label: int


@dataclass
class Dataset:
    X: np.ndarray  # (n, channels, time) float64
    y: np.ndarray  # (n,) int
    ids: np.ndarray  # (n,) int
    n_classes: int
    name: str = "dataset"
    role: str = "poor"
    seed: int = 0

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.ids = np.asarray(self.ids, dtype=np.int64)
        if self.X.ndim != 3:
            raise ValueError(f"dataset values must be (n, channels, time), got {self.X.shape}")
        if len(self.y) != len(self.X) or len(self.ids) != len(self.X):
            raise ValueError("dataset arrays disagree in length")
        if len(self.y) and (self.y.min() < 0 or self.y.max() >= self.n_classes):
            raise ValueError(f"labels must lie in [0, {self.n_classes})")

    def __len__(self):
        return len(self.X)

    @property
    def n_channels(self):
        return self.X.shape[1]

    @property
    def seq_len(self):
        return self.X.shape[2]

    def sample(self, i):
        return TimeSeriesSample(values=self.X[i], label=int(self.y[i]))

    def take(self, positions):
        return replace(self, X=self.X[positions], y=self.y[positions], ids=self.ids[positions])

    def manifest(self):
        return {
            "format_version": FORMAT_VERSION,
            "name": self.name,
            "role": self.role,
            "n_channels": int(self.n_channels),
            "seq_len": int(self.seq_len),
            "n_classes": int(self.n_classes),
            "n_samples": int(len(self)),
            "seed": int(self.seed),
        }


@dataclass
class PairedDataset:
    """Aligned rich/poor views of the same subjects, sharing ids and labels."""

    rich: Dataset
    poor: Dataset

    def __post_init__(self):
        if len(self.rich) != len(self.poor):
            raise ValueError("paired views differ in length")
        if not np.array_equal(self.rich.ids, self.poor.ids):
            raise ValueError("paired views disagree on sample ids")
        if not np.array_equal(self.rich.y, self.poor.y):
            raise ValueError("paired views disagree on labels")

    def __len__(self):
        return len(self.rich)

    @property
    def ids(self):
        return self.rich.ids

    @property
    def y(self):
        return self.rich.y

    def take(self, positions):
        return PairedDataset(rich=self.rich.take(positions), poor=self.poor.take(positions))


@dataclass
class SyntheticSpec:
    """Class-conditioned smooth latent prototypes, linearly mixed into
    channels with per-channel gain (informativeness) and additive noise."""

    n_classes: int = 4
    prototype_len: int = 32
    n_rich_channels: int = 8
    n_poor_channels: int = 2
    rich_gain: object = 1.0
    poor_gain: object = 0.25
    rich_noise: object = 0.3
    poor_noise: object = 1.1
    latent_jitter: float = 0.5
    class_separation: float = 0.4  # spacing of per-class levels
    class_blend: float = 0.5  # fraction of samples blended toward another class
    label_noise: float = 0.3  # fraction of labels resampled uniformly
    n_rich: int = 4000
    n_poor: int = 2000
    n_paired: int = 1000
    seed: int = 0
    prototype_seed: int = None  # fixes the distribution across fresh draws

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError("need at least 2 classes")
        if not (self.n_rich_channels >= self.n_poor_channels >= 1):
            raise ValueError("need rich channels >= poor channels >= 1")
        if min(self.n_rich, self.n_poor, self.n_paired) < 0:
            raise ValueError("dataset sizes must be non-negative")
        if self.prototype_len < 1:
            raise ValueError("prototype length must be positive")
        self.rich_gain = _per_channel(self.rich_gain, self.n_rich_channels, "rich_gain")
        self.poor_gain = _per_channel(self.poor_gain, self.n_poor_channels, "poor_gain")
        self.rich_noise = _per_channel(self.rich_noise, self.n_rich_channels, "rich_noise")
        self.poor_noise = _per_channel(self.poor_noise, self.n_poor_channels, "poor_noise")
        if (self.rich_noise < 0).any() or (self.poor_noise < 0).any():
            raise ValueError("noise levels must be non-negative")
        if self.latent_jitter < 0:
            raise ValueError("latent jitter must be non-negative")
        if not (0.0 <= self.class_blend <= 1.0 and 0.0 <= self.label_noise <= 1.0):
            raise ValueError("class_blend and label_noise must lie in [0, 1]")

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def to_dict(self):
        return {
            "n_classes": self.n_classes,
            "prototype_len": self.prototype_len,
            "n_rich_channels": self.n_rich_channels,
            "n_poor_channels": self.n_poor_channels,
            "rich_gain": list(map(float, self.rich_gain)),
            "poor_gain": list(map(float, self.poor_gain)),
            "rich_noise": list(map(float, self.rich_noise)),
            "poor_noise": list(map(float, self.poor_noise)),
            "latent_jitter": self.latent_jitter,
            "class_separation": self.class_separation,
            "class_blend": self.class_blend,
            "label_noise": self.label_noise,
            "n_rich": self.n_rich,
            "n_poor": self.n_poor,
            "n_paired": self.n_paired,
            "seed": self.seed,
            "prototype_seed": self.prototype_seed,
        }


def _per_channel(value, n, what):
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise ValueError(f"{what}: expected scalar or {n} values, got shape {arr.shape}")
    return arr


def _prototypes(spec):
    """One smooth curve per class: a class-specific level plus oscillation.

    Distinct base frequencies and evenly spread levels keep the classes
    separated for every seed; seeded phases and amplitudes add variety.
    The level term gives each class a distinct time-mean, which is what
    the channel-ranking statistics summarize.
    """
    proto_seed = spec.seed if spec.prototype_seed is None else spec.prototype_seed
    rng = np.random.default_rng(np.random.SeedSequence([proto_seed, _PROTO_STREAM]))
    T = spec.prototype_len
    t = np.arange(T) / T
    c = spec.n_classes
    protos = np.empty((c, T))
    for y in range(c):
        level = (y - (c - 1) / 2.0) * spec.class_separation * rng.uniform(0.9, 1.1)
        amp = rng.uniform(0.8, 1.2)
        phase = rng.uniform(0, 2 * np.pi)
        amp2 = rng.uniform(0.1, 0.3)
        phase2 = rng.uniform(0, 2 * np.pi)
        protos[y] = (level
                     + amp * np.sin(2 * np.pi * (y + 1) * t + phase)
                     + amp2 * np.sin(2 * np.pi * (y + 1) * 2 * t + phase2))
    return protos


def _smooth_noise(rng, T):
    w = max(3, T // 8)
    eps = rng.standard_normal(T + w - 1)
    box = np.ones(w) / w
    sm = np.convolve(eps, box, mode="valid")
    return sm * math.sqrt(w)


def _sample_views(spec, protos, idx, need_rich, need_poor):
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, _SAMPLE_STREAM, idx]))
    label = int(rng.integers(spec.n_classes))
    latent = protos[label]
    if spec.class_blend > 0 and rng.random() < spec.class_blend:
        # ambiguous sample: pull toward another class, true class dominant
        other = int(rng.integers(spec.n_classes - 1))
        other += other >= label
        u = rng.uniform(0.0, 0.5)
        latent = (1.0 - u) * latent + u * protos[other]
    if spec.latent_jitter > 0:
        latent = latent + spec.latent_jitter * _smooth_noise(rng, spec.prototype_len)
    if spec.label_noise > 0 and rng.random() < spec.label_noise:
        label = int(rng.integers(spec.n_classes))  # recorded label, not the latent
    T = spec.prototype_len
    rich = poor = None
    if need_rich:
        noise = rng.standard_normal((spec.n_rich_channels, T))
        rich = spec.rich_gain[:, None] * latent[None, :] + spec.rich_noise[:, None] * noise
    if need_poor:
        noise = rng.standard_normal((spec.n_poor_channels, T))
        poor = spec.poor_gain[:, None] * latent[None, :] + spec.poor_noise[:, None] * noise
    return label, rich, poor


def generate_synthetic(spec):
    """Draw (H_r, H_p, H_o): rich-only, poor-only and paired datasets.

    All samples are i.i.d.; paired samples carry both views of the same
    latent draw. Per-sample seeds derive from (seed, sample index), so the
    output is byte-identical for a given spec.
    """
    protos = _prototypes(spec)
    n, m, k = spec.n_rich, spec.n_poor, spec.n_paired
    T = spec.prototype_len

    Xr = np.empty((n, spec.n_rich_channels, T))
    yr = np.empty(n, dtype=np.int64)
    for i in range(n):
        yr[i], Xr[i], _ = _sample_views(spec, protos, i, True, False)
    h_r = Dataset(Xr, yr, np.arange(n), spec.n_classes,
                  name="synthetic-rich", role="rich", seed=spec.seed)

    Xp = np.empty((m, spec.n_poor_channels, T))
    yp = np.empty(m, dtype=np.int64)
    for i in range(m):
        yp[i], _, Xp[i] = _sample_views(spec, protos, n + i, False, True)
    h_p = Dataset(Xp, yp, np.arange(n, n + m), spec.n_classes,
                  name="synthetic-poor", role="poor", seed=spec.seed)

    Xor = np.empty((k, spec.n_rich_channels, T))
    Xop = np.empty((k, spec.n_poor_channels, T))
    yo = np.empty(k, dtype=np.int64)
    for i in range(k):
        yo[i], Xor[i], Xop[i] = _sample_views(spec, protos, n + m + i, True, True)
    ids_o = np.arange(n + m, n + m + k)
    h_o = PairedDataset(
        rich=Dataset(Xor, yo, ids_o, spec.n_classes,
                     name="synthetic-paired", role="paired-rich-view", seed=spec.seed),
        poor=Dataset(Xop, yo.copy(), ids_o.copy(), spec.n_classes,
                     name="synthetic-paired", role="paired-poor-view", seed=spec.seed),
    )
    return h_r, h_p, h_o


# ---------------------------------------------------------------------------
# persistence


def save_dataset(ds, path, binary=True):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    order = np.argsort(ds.ids, kind="stable")
    ids, y, X = ds.ids[order], ds.y[order], ds.X[order]
    with open(path / "manifest.json", "w") as f:
        json.dump(ds.manifest(), f, indent=2, sort_keys=True)
        f.write("\n")
    C, T = ds.n_channels, ds.seq_len
    with open(path / "data.csv", "w") as f:
        f.write("sample_id,label,channel,time_index,value\n")
        for i in range(len(ids)):
            sid, lab = ids[i], y[i]
            rows = []
            for c in range(C):
                vals = X[i, c]
                rows.extend(f"{sid},{lab},{c},{t},{vals[t]:.17g}" for t in range(T))
            f.write("\n".join(rows))
            f.write("\n")
    binpath = path / "data.bin"
    if binary:
        with open(binpath, "wb") as f:
            f.write(np.ascontiguousarray(X, dtype="<f8").tobytes())
    elif binpath.exists():
        binpath.unlink()
    return path


def load_dataset(path):
    path = Path(path)
    with open(path / "manifest.json") as f:
        man = json.load(f)
    if man.get("format_version") != FORMAT_VERSION:
        raise DatasetFormatError(f"unsupported format version {man.get('format_version')}")
    n, C, T = man["n_samples"], man["n_channels"], man["seq_len"]
    with open(path / "data.csv") as f:
        header = f.readline().strip()
        if header != "sample_id,label,channel,time_index,value":
            raise DatasetFormatError(f"unexpected csv header: {header}")
        lines = f.read().splitlines()
    if len(lines) != n * C * T:
        raise DatasetFormatError(
            f"manifest declares {n} samples ({n * C * T} rows) but csv has {len(lines)} rows")

    binpath = path / "data.bin"
    block = C * T
    if binpath.exists():
        raw = np.frombuffer(binpath.read_bytes(), dtype="<f8")
        if raw.size != n * block:
            raise DatasetFormatError(
                f"data.bin holds {raw.size} values, expected {n * block}")
        X = raw.reshape(n, C, T).astype(np.float64)
        ids = np.empty(n, dtype=np.int64)
        y = np.empty(n, dtype=np.int64)
        for i in range(n):
            parts = lines[i * block].split(",", 2)
            ids[i], y[i] = int(parts[0]), int(parts[1])
    else:
        ids = np.empty(n, dtype=np.int64)
        y = np.empty(n, dtype=np.int64)
        X = np.empty((n, C, T))
        parsed = [ln.split(",") for ln in lines]
        # restore canonical order in case rows were shuffled on disk
        parsed.sort(key=lambda p: (int(p[0]), int(p[2]), int(p[3])))
        for i in range(n):
            blockrows = parsed[i * block : (i + 1) * block]
            ids[i] = int(blockrows[0][0])
            y[i] = int(blockrows[0][1])
            for j, row in enumerate(blockrows):
                if int(row[0]) != ids[i]:
                    raise DatasetFormatError(f"sample {ids[i]} has an incomplete block")
                X[i, int(row[2]), int(row[3])] = float(row[4])
    if len(np.unique(ids)) != n:
        raise DatasetFormatError("duplicate sample ids")
    return Dataset(X, y, ids, man["n_classes"], name=man["name"],
                   role=man["role"], seed=man["seed"])


def save_paired(h_o, path, binary=True):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    save_dataset(h_o.rich, path / "rich_view", binary=binary)
    save_dataset(h_o.poor, path / "poor_view", binary=binary)
    order = np.argsort(h_o.ids, kind="stable")
    with open(path / "pairs.json", "w") as f:
        json.dump({"format_version": FORMAT_VERSION,
                   "ids": [int(i) for i in h_o.ids[order]]}, f)
        f.write("\n")
    return path


def load_paired(path):
    path = Path(path)
    rich = load_dataset(path / "rich_view")
    poor = load_dataset(path / "poor_view")
    with open(path / "pairs.json") as f:
        pairs = json.load(f)
    ids = np.asarray(pairs["ids"], dtype=np.int64)
    if not (np.array_equal(np.sort(ids), np.sort(rich.ids))
            and np.array_equal(np.sort(ids), np.sort(poor.ids))):
        raise DatasetFormatError("pairs.json ids disagree with the stored views")
    return PairedDataset(rich=rich, poor=poor)


# ---------------------------------------------------------------------------
# splitting / selection


def split(dataset, fractions, seed):
    """Disjoint partition by sample id with a seeded shuffle.

    Sizes are floor(fraction * n); leftover samples go to the first part.
    Works for both Dataset and PairedDataset (pairs move together).
    """
    fractions = [float(f) for f in fractions]
    if any(f < 0 or f > 1 for f in fractions):
        raise ValueError(f"fractions must lie in [0, 1], got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got sum {sum(fractions)}")
    n = len(dataset)
    perm = np.random.default_rng(seed).permutation(n)
    sizes = [int(math.floor(f * n)) for f in fractions]
    sizes[0] += n - sum(sizes)
    parts = []
    start = 0
    for s in sizes:
        chunk = np.sort(perm[start : start + s])
        parts.append(dataset.take(chunk))
        start += s
    return tuple(parts)


def subsample_pairs(h_o, ratio, seed):
    """Seeded uniform subsample of floor(ratio * k) pairs.

    Uses a prefix of one seeded permutation, so smaller ratios are nested
    inside larger ones under the same seed.
    """
    if not (0 < ratio <= 1):
        raise ValueError(f"ratio must lie in (0, 1], got {ratio}")
    k = len(h_o)
    keep = int(math.floor(ratio * k))
    perm = np.random.default_rng(seed).permutation(k)
    return h_o.take(np.sort(perm[:keep]))


def select_channels(dataset, channels):
    channels = list(channels)
    if len(set(channels)) != len(channels):
        raise ValueError(f"duplicate channel indices: {channels}")
    for c in channels:
        if not (0 <= c < dataset.n_channels):
            raise ValueError(f"channel {c} out of range [0, {dataset.n_channels})")
    return replace(dataset, X=dataset.X[:, channels, :])


# ---------------------------------------------------------------------------
# channel ranking


def _channel_summaries(dataset):
    """Per-sample per-channel time means, the quantity we discretize."""
    return dataset.X.mean(axis=2)  # (n, channels)


def _discretize(col):
    lo, hi = col.min(), col.max()
    if hi <= lo:
        return np.zeros(len(col), dtype=np.int64), 1
    bins = np.minimum(((col - lo) / (hi - lo) * _N_BINS).astype(np.int64), _N_BINS - 1)
    return bins, _N_BINS


def _entropy_bits(counts):
    tot = counts.sum()
    if tot == 0:
        return 0.0
    p = counts[counts > 0] / tot
    return float(-(p * np.log2(p)).sum())


def rank_by_entropy(dataset):
    """Channels ordered by decreasing class-averaged histogram entropy."""
    if len(dataset) == 0:
        raise ValueError("cannot rank channels of an empty dataset")
    summ = _channel_summaries(dataset)
    scores = np.empty(dataset.n_channels)
    for c in range(dataset.n_channels):
        bins, nb = _discretize(summ[:, c])
        ent = []
        for y in range(dataset.n_classes):
            sel = bins[dataset.y == y]
            if len(sel) == 0:
                continue
            ent.append(_entropy_bits(np.bincount(sel, minlength=nb)))
        scores[c] = float(np.mean(ent)) if ent else 0.0
    order = np.argsort(-scores, kind="stable")
    return order, scores


def rank_by_mutual_info(dataset):
    """Channels ordered by decreasing plug-in mutual information (bits)
    between the discretized channel summary and the class label."""
    if len(dataset) == 0:
        raise ValueError("cannot rank channels of an empty dataset")
    if len(np.unique(dataset.y)) < 2:
        raise ValueError("mutual-information ranking needs at least 2 classes present")
    summ = _channel_summaries(dataset)
    n = len(dataset)
    scores = np.empty(dataset.n_channels)
    for c in range(dataset.n_channels):
        bins, nb = _discretize(summ[:, c])
        joint = np.zeros((dataset.n_classes, nb))
        np.add.at(joint, (dataset.y, bins), 1.0)
        pj = joint / n
        py = pj.sum(axis=1, keepdims=True)
        pb = pj.sum(axis=0, keepdims=True)
        mask = pj > 0
        scores[c] = float((pj[mask] * np.log2(pj[mask] / (py @ pb)[mask])).sum())
    order = np.argsort(-scores, kind="stable")
    return order, scores

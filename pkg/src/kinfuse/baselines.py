"""Comparison trainers: knowledge distillation (tempered teacher soft
labels on paired data plus hard labels on poor data) and activation-based
attention transfer (L2-normalized score matching on paired data plus hard
labels). Both run under the same optimizer protocol as direct training so
comparisons stay fair.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as tz
from .data import split
from .model import BatchFeeder, TrainConfig, TransferableModel, cross_entropy, fit


@dataclass
class KDConfig:
    distill_temperature: float = 5.0
    soft_weight: float = 1.0
    hard_weight: float = 1.0

    def __post_init__(self):
        if self.distill_temperature <= 0:
            raise ValueError("distillation temperature must be positive")
        if self.soft_weight < 0 or self.hard_weight < 0:
            raise ValueError("loss weights must be non-negative")
        if self.soft_weight == 0 and self.hard_weight == 0:
            raise ValueError("at least one loss weight must be positive")


@dataclass
class ATConfig:
    beta: float = 1.0

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("attention transfer weight must be >= 0")


def soft_targets(rich, X_rich, distill_temperature):
    """Teacher distributions: softmax of the teacher's dense outputs
    divided by the distillation temperature (the teacher's own deployment
    temperature is not re-applied)."""
    logits = rich.logits_batch(X_rich).data
    z = logits / distill_temperature
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _internal_split(ds, seed):
    return split(ds, (0.9, 0.1), seed=seed)


def _build_student(h_p, n_classes, extractor, cfg, scorer_mode, temperature):
    return TransferableModel(h_p.n_channels, h_p.seq_len, n_classes, extractor,
                             scorer_mode=scorer_mode, temperature=temperature,
                             seed=cfg.seed)


def train_kd(rich, h_o, h_p, extractor, kd_cfg, cfg,
             scorer_mode="raw-linear", temperature=1.0,
             val_pairs=None, val_poor=None):
    """Distillation student over the paired soft labels and the poor hard
    labels. With soft_weight 0 this reduces exactly to direct training
    (identical batches, identical updates)."""
    if h_o is None or len(h_o) == 0:
        raise ValueError("paired dataset is empty; soft labels need paired inputs")
    if h_p is None or len(h_p) == 0:
        raise ValueError("poor dataset is empty")
    if val_poor is None:
        h_p, val_poor = _internal_split(h_p, cfg.seed)
    if val_pairs is None and len(h_o) >= 2:
        h_o, val_pairs = _internal_split(h_o, cfg.seed)
    n_classes = rich.n_classes
    model = _build_student(h_p, n_classes, extractor, cfg, scorer_mode, temperature)

    use_soft = kd_cfg.soft_weight > 0
    if use_soft:
        t_train = soft_targets(rich, h_o.rich.X, kd_cfg.distill_temperature)
        t_val = (soft_targets(rich, val_pairs.rich.X, kd_cfg.distill_temperature)
                 if val_pairs is not None else None)

    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    poor_feed = BatchFeeder(len(h_p), cfg.batch_size, rng)
    pair_feed = BatchFeeder(len(h_o), cfg.batch_size, rng) if use_soft else None

    def soft_ce(X_po, targets):
        logp = tz.log_softmax(model.logits_batch(X_po), temperature=model.temperature)
        return tz.neg(tz.mean(tz.sum_(tz.mul(tz.Tensor(targets), logp), axis=1)))

    def epoch_losses():
        steps = poor_feed.steps_per_epoch()
        if pair_feed is not None:
            steps = max(steps, pair_feed.steps_per_epoch())
        for _ in range(steps):
            p_idx = poor_feed.next()
            hard = cross_entropy(model, h_p.X[p_idx], h_p.y[p_idx])
            if kd_cfg.hard_weight != 1.0:
                hard = tz.mul(hard, kd_cfg.hard_weight)
            if pair_feed is None:
                yield hard
                continue
            o_idx = pair_feed.next()
            soft = soft_ce(h_o.poor.X[o_idx], t_train[o_idx])
            if kd_cfg.soft_weight != 1.0:
                soft = tz.mul(soft, kd_cfg.soft_weight)
            yield tz.add(soft, hard)

    def val_loss():
        total = kd_cfg.hard_weight * float(
            cross_entropy(model, val_poor.X, val_poor.y).data)
        if use_soft and t_val is not None:
            total += kd_cfg.soft_weight * float(
                soft_ce(val_pairs.poor.X, t_val).data)
        return total

    model.fit_info = fit(model, model.parameters(), epoch_losses, val_loss, cfg)
    return model


def _normalized_scores(model, X):
    """Scores scaled to unit L2 norm per sample; errors on a zero vector."""
    a = model.scores_batch(X)
    norms = np.sqrt((a.data ** 2).sum(axis=1))
    bad = np.nonzero(norms == 0.0)[0]
    if len(bad):
        raise ValueError(f"zero-norm attention vector for sample index {int(bad[0])}")
    sq = tz.sum_(tz.mul(a, a), axis=1, keepdims=True)
    return tz.div(a, tz.sqrt(sq))


def attention_match_term(student, rich_unit, X_poor):
    """Mean squared distance between unit-normalized student scores and the
    (precomputed, unit-normalized) teacher scores; in [0, 4] per sample."""
    na = _normalized_scores(student, X_poor)
    diff = tz.sub(na, tz.Tensor(rich_unit))
    return tz.mean(tz.sum_(tz.mul(diff, diff), axis=1))


def train_at(rich, h_o, h_p, extractor, at_cfg, cfg,
             scorer_mode="raw-linear", temperature=1.0,
             val_pairs=None, val_poor=None):
    """Attention-transfer student: hard-label cross-entropy on poor data
    plus beta times the normalized score-matching term on paired data.
    All student parameters train jointly. beta 0 reduces exactly to direct
    training."""
    if h_o is None or len(h_o) == 0:
        raise ValueError("paired dataset is empty; attention transfer needs paired inputs")
    if h_p is None or len(h_p) == 0:
        raise ValueError("poor dataset is empty")
    if rich.d != extractor.rnn_hidden:
        raise ValueError(f"teacher and student must share the score dimension "
                         f"(teacher {rich.d}, student {extractor.rnn_hidden})")
    if val_poor is None:
        h_p, val_poor = _internal_split(h_p, cfg.seed)
    if val_pairs is None and len(h_o) >= 2:
        h_o, val_pairs = _internal_split(h_o, cfg.seed)
    model = _build_student(h_p, rich.n_classes, extractor, cfg, scorer_mode, temperature)

    use_at = at_cfg.beta > 0
    if use_at:
        def teacher_unit(X):
            a = rich.scores_batch(X).data
            norms = np.sqrt((a ** 2).sum(axis=1, keepdims=True))
            bad = np.nonzero(norms[:, 0] == 0.0)[0]
            if len(bad):
                raise ValueError(
                    f"zero-norm attention vector for sample index {int(bad[0])}")
            return a / norms

        r_train = teacher_unit(h_o.rich.X)
        r_val = teacher_unit(val_pairs.rich.X) if val_pairs is not None else None

    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    poor_feed = BatchFeeder(len(h_p), cfg.batch_size, rng)
    pair_feed = BatchFeeder(len(h_o), cfg.batch_size, rng) if use_at else None

    def epoch_losses():
        steps = poor_feed.steps_per_epoch()
        if pair_feed is not None:
            steps = max(steps, pair_feed.steps_per_epoch())
        for _ in range(steps):
            p_idx = poor_feed.next()
            loss = cross_entropy(model, h_p.X[p_idx], h_p.y[p_idx])
            if pair_feed is not None:
                o_idx = pair_feed.next()
                term = attention_match_term(model, r_train[o_idx], h_o.poor.X[o_idx])
                if at_cfg.beta != 1.0:
                    term = tz.mul(term, at_cfg.beta)
                loss = tz.add(loss, term)
            yield loss

    def val_loss():
        total = float(cross_entropy(model, val_poor.X, val_poor.y).data)
        if use_at and r_val is not None:
            total += at_cfg.beta * float(
                attention_match_term(model, r_val, val_pairs.poor.X).data)
        return total

    model.fit_info = fit(model, model.parameters(), epoch_losses, val_loss, cfg)
    return model


def train_direct(h_p, n_classes, extractor, cfg, scorer_mode="raw-linear",
                 temperature=1.0, val_poor=None):
    """Plain supervised training on the poor data; the no-infusion
    reference. Uses the same internal holdout convention as the other
    trainers when no validation set is given."""
    from .model import train_supervised

    if h_p is None or len(h_p) == 0:
        raise ValueError("poor dataset is empty")
    if val_poor is None:
        h_p, val_poor = _internal_split(h_p, cfg.seed)
    return train_supervised(h_p, val_poor, n_classes, extractor, cfg,
                            scorer_mode=scorer_mode, temperature=temperature)

"""Two-stage knowledge infusion into a few-channel model.

Stage 1 (behavior infusion) fits every poor scorer head to the rich
model's corresponding head scores over the paired data, as a ridge
regression per head:

    minimize over w:  0.5 * sum_t (a_p(x_t; w) - a_r(x_t))^2 + lambda * |w|^2

Stage 2 (target infusion) freezes the fitted scorer and trains the poor
extractor and aggregator to match the rich model's predictive
distribution on paired data plus the ground truth on poor data:

    (1/k) sum_t sum_y (T(y) - S(y))^2 + (1/m) sum_t (1 - S(y_t))^2

Both stages follow the shared optimizer protocol (Adam, capped epochs,
patience on a validation loss).
"""

import json
import math
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as tz
from .data import split
from .model import (
    BatchFeeder,
    ScorerParams,
    TrainConfig,
    fit,
)

FALLBACK_RIDGE = 1e-3


class RankDeficiencyError(np.linalg.LinAlgError):
    """Unpenalized normal equations are singular (too few pairs for the
    head dimension); retry with a positive ridge coefficient."""


@dataclass
class BehaviorFitConfig:
    ridge: float = 0.0  # the lambda of the behavior fit objective
    solver: str = "analytic"  # analytic | gradient
    max_iters: int = 2000
    tol: float = 1e-10
    fit_intercept: bool = True

    def __post_init__(self):
        if self.ridge < 0:
            raise ValueError("ridge coefficient must be >= 0")
        if self.solver not in ("analytic", "gradient"):
            raise ValueError(f"unknown solver {self.solver!r}")


@dataclass
class AuxiliaryDataset:
    """Regression pairs for one head: poor views against the rich model's
    head scores on the matching rich views."""

    head_index: int
    inputs: np.ndarray  # (k, channels, time) poor views
    targets: np.ndarray  # (k,)

    def __len__(self):
        return len(self.inputs)


@dataclass
class CostInputs:
    """Operands of the two op-count proxies."""

    tau_iters: int
    k: int
    w: int
    d: int
    n_p: int
    m: int
    p: int
    c: int

    def __post_init__(self):
        for name in ("tau_iters", "k", "w", "d", "n_p", "m", "p", "c"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")


def estimate_costs(ci):
    """Predicted op counts: behavior fit tau*k*w*d, target fit
    tau*n_p*(m*p*c + k*c^2)."""
    behavior = ci.tau_iters * ci.k * ci.w * ci.d
    target = ci.tau_iters * ci.n_p * (ci.m * ci.p * ci.c + ci.k * ci.c * ci.c)
    return behavior, target


def build_auxiliary(h_o, rich, head_index):
    """Auxiliary regression set for one head (0-based index)."""
    if len(h_o) == 0:
        raise ValueError("paired dataset is empty")
    if not (0 <= head_index < rich.d):
        raise ValueError(f"head index {head_index} out of range [0, {rich.d})")
    targets = rich.scores_batch(h_o.rich.X).data[:, head_index].copy()
    return AuxiliaryDataset(head_index=head_index, inputs=h_o.poor.X.copy(),
                            targets=targets)


def _design(X_flat, fit_intercept):
    if fit_intercept:
        return np.concatenate([X_flat, np.ones((len(X_flat), 1))], axis=1)
    return X_flat


def _split_solution(W, fit_intercept):
    if fit_intercept:
        return W[:-1, :].T.copy(), W[-1, :].copy()
    return W.T.copy(), np.zeros(W.shape[1])


def _solve_analytic(X, Y, ridge):
    """Exact minimizer of the behavior fit objective via normal equations
    (X^T X + 2*lambda*I) w = X^T y, shared across heads."""
    gram = X.T @ X
    if ridge == 0.0 and np.linalg.matrix_rank(gram) < gram.shape[0]:
        raise RankDeficiencyError(
            f"normal equations are rank deficient at lambda=0 "
            f"({len(X)} pairs, {gram.shape[0]} coefficients); "
            f"use a positive ridge coefficient such as {FALLBACK_RIDGE}")
    A = gram + 2.0 * ridge * np.eye(gram.shape[0])
    try:
        return np.linalg.solve(A, X.T @ Y)
    except np.linalg.LinAlgError as exc:
        raise RankDeficiencyError(
            f"normal equations singular: {exc}; use a positive ridge coefficient") from exc


def _solve_quadratic_gd(X, Y, ridge, max_iters, tol):
    """Steepest descent with exact line search on the (quadratic) behavior
    fit objective; converges to the analytic minimizer when it exists."""
    W = np.zeros((X.shape[1], Y.shape[1]))
    for _ in range(max_iters):
        G = X.T @ (X @ W - Y) + 2.0 * ridge * W
        gnorm = np.abs(G).max()
        if gnorm <= tol:
            break
        HG = X.T @ (X @ G) + 2.0 * ridge * G
        denom = float((G * HG).sum())
        if denom <= 0:
            break
        alpha = float((G * G).sum()) / denom
        W = W - alpha * G
    return W


def _fit_tanh_heads(X_flat, Y, template, cfg):
    """Adam on the nonlinear per-head objectives; heads are disjoint, so
    one joint loss optimizes them all at once."""
    d = template.n_heads
    rng = np.random.default_rng(0)
    W = tz.Tensor(np.zeros((d, X_flat.shape[1])), requires_grad=True)
    b = tz.Tensor(np.zeros(d), requires_grad=True)
    Xt = tz.Tensor(X_flat)
    Yt = tz.Tensor(Y)
    opt = tz.Adam([W, b], lr=0.01)
    prev = math.inf
    for _ in range(cfg.max_iters):
        A = tz.tanh(tz.linear(Xt, W, b))
        diff = tz.sub(A, Yt)
        loss = tz.add(tz.mul(tz.sum_(tz.mul(diff, diff)), 0.5),
                      tz.mul(tz.add(tz.sum_(tz.mul(W, W)), tz.sum_(tz.mul(b, b))),
                             cfg.ridge))
        opt.zero_grad()
        loss.backward()
        opt.step()
        cur = float(loss.data)
        if abs(prev - cur) <= cfg.tol * max(1.0, abs(prev)):
            break
        prev = cur
    return ScorerParams(mode="raw-tanh", weights=W.data.copy(), bias=b.data.copy())


def behavior_infuse(rich, h_o, poor_scorer_template, cfg, poor_model=None):
    """Fit all d poor scorer heads to the rich head scores over H_o.

    ``poor_model`` is only needed in feature-attention mode, where head
    inputs are the (frozen) poor feature matrices rather than raw samples.
    """
    if len(h_o) == 0:
        raise ValueError("paired dataset is empty")
    d = poor_scorer_template.n_heads
    if rich.d != d:
        raise ValueError(f"rich model has {rich.d} heads but template has {d}")
    Y = rich.scores_batch(h_o.rich.X).data  # (k, d)
    mode = poor_scorer_template.mode
    if cfg.solver == "analytic" and mode != "raw-linear":
        raise ValueError("analytic solver requires the raw-linear scorer mode")

    if mode in ("raw-linear", "raw-tanh"):
        X_flat = h_o.poor.X.reshape(len(h_o), -1)
        if X_flat.shape[1] != poor_scorer_template.weights.shape[1]:
            raise ValueError(
                f"template expects inputs of dimension "
                f"{poor_scorer_template.weights.shape[1]}, got {X_flat.shape[1]}")
        if mode == "raw-tanh":
            return _fit_tanh_heads(X_flat, Y, poor_scorer_template, cfg)
        X = _design(X_flat, cfg.fit_intercept)
        if cfg.solver == "analytic":
            W = _solve_analytic(X, Y, cfg.ridge)
        else:
            W = _solve_quadratic_gd(X, Y, cfg.ridge, cfg.max_iters, cfg.tol)
        weights, bias = _split_solution(W, cfg.fit_intercept)
        return ScorerParams(mode="raw-linear", weights=weights, bias=bias)

    # feature-attention: per-head linear regression on tanh of the frozen
    # poor feature tracks
    if poor_model is None:
        raise ValueError("feature-attention behavior fit needs the poor model")
    Q = poor_model.features_batch(h_o.poor.X).data  # (k, l, d)
    l = Q.shape[1]
    weights = np.zeros((d, l))
    bias = np.zeros(d)
    for i in range(d):
        Xi = _design(np.tanh(Q[:, :, i]), cfg.fit_intercept)
        Wi = _solve_quadratic_gd(Xi, Y[:, i : i + 1], cfg.ridge, cfg.max_iters, cfg.tol)
        wi, bi = _split_solution(Wi, cfg.fit_intercept)
        weights[i] = wi[0]
        bias[i] = bi[0]
    return ScorerParams(mode="feature-attention", weights=weights, bias=bias)


def behavior_objective(scorer, h_o, rich, ridge, poor_model=None):
    """Per-head value of the behavior fit objective at the given scorer."""
    Y = rich.scores_batch(h_o.rich.X).data
    if scorer.mode in ("raw-linear", "raw-tanh"):
        X_flat = h_o.poor.X.reshape(len(h_o), -1)
        A = X_flat @ scorer.weights.T + scorer.bias
        if scorer.mode == "raw-tanh":
            A = np.tanh(A)
    else:
        Q = poor_model.features_batch(h_o.poor.X).data
        A = np.einsum("klD,Dl->kD", np.tanh(Q), scorer.weights) + scorer.bias
    resid = 0.5 * ((A - Y) ** 2).sum(axis=0)
    penalty = ridge * ((scorer.weights ** 2).sum(axis=1) + scorer.bias ** 2)
    return resid + penalty


# ---------------------------------------------------------------------------
# target infusion


def target_fit_terms(poor, rich, pairs, poor_ds):
    """The two terms of the target fit objective, evaluated (numpy only)."""
    term1 = 0.0
    if pairs is not None and len(pairs) > 0:
        T = rich.proba_batch(pairs.rich.X)
        S = poor.proba_batch(pairs.poor.X)
        term1 = float(((T - S) ** 2).sum(axis=1).mean())
    term2 = 0.0
    if poor_ds is not None and len(poor_ds) > 0:
        Sp = poor.proba_batch(poor_ds.X)
        picked = Sp[np.arange(len(poor_ds)), poor_ds.y]
        term2 = float(((1.0 - picked) ** 2).mean())
    return term1, term2


def target_fit_loss(poor, rich, pairs, poor_ds):
    t1, t2 = target_fit_terms(poor, rich, pairs, poor_ds)
    return t1 + t2


def target_infuse(poor, rich, h_o, h_p, cfg, val_pairs=None, val_poor=None):
    """Optimize the poor extractor and aggregator against the target fit
    objective; the scorer is left untouched (bit-identical).

    When no validation sets are supplied, 10 percent of H_o and of H_p is
    held out internally (seeded by the train config).
    """
    if h_p is None or len(h_p) == 0:
        raise ValueError("poor dataset is empty")
    if rich is None:
        raise ValueError("rich model is required for target infusion")
    if val_poor is None:
        h_p, val_poor = split(h_p, (0.9, 0.1), seed=cfg.seed)
    if val_pairs is None and h_o is not None and len(h_o) >= 2:
        h_o, val_pairs = split(h_o, (0.9, 0.1), seed=cfg.seed)

    k = 0 if h_o is None else len(h_o)
    temp = poor.temperature
    if k:
        t_train = rich.proba_batch(h_o.rich.X)
    t_val = (rich.proba_batch(val_pairs.rich.X)
             if val_pairs is not None and len(val_pairs) else None)

    params = poor.extractor_parameters() + poor.aggregator_parameters()
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2]))
    poor_feed = BatchFeeder(len(h_p), cfg.batch_size, rng)
    pair_feed = BatchFeeder(k, cfg.batch_size, rng) if k else None

    def paired_term(X_po, targets):
        S = tz.softmax(poor.logits_batch(X_po), temperature=temp)
        diff = tz.sub(S, tz.Tensor(targets))
        return tz.mean(tz.sum_(tz.mul(diff, diff), axis=1))

    def poor_term(X_p, y):
        S = tz.softmax(poor.logits_batch(X_p), temperature=temp)
        gap = tz.sub(tz.Tensor(1.0), tz.gather_rows(S, y))
        return tz.mean(tz.mul(gap, gap))

    def epoch_losses():
        steps = poor_feed.steps_per_epoch()
        if pair_feed is not None:
            steps = max(steps, pair_feed.steps_per_epoch())
        for _ in range(steps):
            p_idx = poor_feed.next()
            loss = poor_term(h_p.X[p_idx], h_p.y[p_idx])
            if pair_feed is not None:
                o_idx = pair_feed.next()
                loss = tz.add(paired_term(h_o.poor.X[o_idx], t_train[o_idx]), loss)
            yield loss

    def val_loss():
        total = 0.0
        if t_val is not None:
            S = poor.proba_batch(val_pairs.poor.X)
            total += float(((t_val - S) ** 2).sum(axis=1).mean())
        Sp = poor.proba_batch(val_poor.X)
        picked = Sp[np.arange(len(val_poor)), val_poor.y]
        total += float(((1.0 - picked) ** 2).mean())
        return total

    poor.fit_info = fit(poor, params, epoch_losses, val_loss, cfg)
    return poor


# ---------------------------------------------------------------------------
# the full pipeline


def cheer(h_p, rich, h_o, poor, behavior_cfg=None, train_cfg=None,
          val_pairs=None, val_poor=None, report_path=None):
    """Behavior infusion for every head, then target infusion.

    ``poor`` is a freshly initialized poor model supplying the
    architecture; its scorer is replaced by the fitted heads and then kept
    frozen through stage two. Writes a JSON infusion report when
    ``report_path`` is given.
    """
    behavior_cfg = behavior_cfg or BehaviorFitConfig()
    train_cfg = train_cfg or TrainConfig()
    if rich.d != poor.d:
        raise ValueError(f"rich and poor models must share the score dimension "
                         f"(rich {rich.d}, poor {poor.d})")
    t0 = time.perf_counter()
    ridge_used = behavior_cfg.ridge
    try:
        fitted = behavior_infuse(rich, h_o, poor.scorer_params(), behavior_cfg,
                                 poor_model=poor)
    except RankDeficiencyError as exc:
        if behavior_cfg.ridge != 0.0:
            raise
        warnings.warn(f"behavior fit rank deficient at lambda=0; retrying with "
                      f"lambda={FALLBACK_RIDGE} ({exc})")
        ridge_used = FALLBACK_RIDGE
        retry = BehaviorFitConfig(ridge=FALLBACK_RIDGE, solver=behavior_cfg.solver,
                                  max_iters=behavior_cfg.max_iters, tol=behavior_cfg.tol,
                                  fit_intercept=behavior_cfg.fit_intercept)
        fitted = behavior_infuse(rich, h_o, poor.scorer_params(), retry, poor_model=poor)
    poor.set_scorer_params(fitted)
    residuals = behavior_objective(fitted, h_o, rich, ridge_used, poor_model=poor)
    initial_loss = target_fit_loss(poor, rich, h_o, h_p)
    target_infuse(poor, rich, h_o, h_p, train_cfg, val_pairs=val_pairs, val_poor=val_poor)
    final_loss = target_fit_loss(poor, rich, h_o, h_p)

    if report_path is not None:
        info = poor.fit_info
        report = {
            "behavior": {
                "solver": behavior_cfg.solver,
                "ridge_requested": behavior_cfg.ridge,
                "ridge_used": ridge_used,
                "head_residuals": [float(r) for r in residuals],
            },
            "target": {
                "initial_loss": initial_loss,
                "final_loss": final_loss,
                "final_val_loss": info.val_losses[info.best_epoch] if info.val_losses else None,
                "epochs_run": info.epochs_run,
                "best_epoch": info.best_epoch,
            },
            "wall_time_s": time.perf_counter() - t0,
        }
        report_path = Path(report_path)
        report_path.parent.mkdir(parents=True, exist_ok=True)
        with open(report_path, "w") as f:
            json.dump(report, f, indent=2, sort_keys=True)
            f.write("\n")
    return poor

"""Evaluation measures: accuracy, macro-F1, macro one-vs-rest ROC-AUC and
PR-AUC, and the one-tailed Welch t-test used for significance reporting.

Conventions: AUC ties get half credit; PR area is the step sum of
(recall increment) * (precision at that threshold) over thresholds placed
at the observed scores; a class with zero predicted and zero actual
positives contributes F1 = 0; classes lacking both positives and
negatives are skipped from the AUC macro averages and flagged.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betainc


def _check_labels(preds, truth):
    preds = np.asarray(preds)
    truth = np.asarray(truth)
    if preds.shape != truth.shape or preds.ndim != 1 or len(preds) == 0:
        raise ValueError(f"need equal-length non-empty label vectors, "
                         f"got {preds.shape} and {truth.shape}")
    return preds, truth


def accuracy(preds, truth):
    preds, truth = _check_labels(preds, truth)
    return float((preds == truth).mean())


def f1_per_class(preds, truth, n_classes):
    preds, truth = _check_labels(preds, truth)
    out = np.zeros(n_classes)
    for c in range(n_classes):
        tp = int(((preds == c) & (truth == c)).sum())
        fp = int(((preds == c) & (truth != c)).sum())
        fn = int(((preds != c) & (truth == c)).sum())
        denom = 2 * tp + fp + fn
        out[c] = 2.0 * tp / denom if denom > 0 else 0.0
    return out


def macro_f1(preds, truth, n_classes):
    return float(f1_per_class(preds, truth, n_classes).mean())


def _binary_roc_auc(scores, positive):
    """Rank-based AUC with ties counted half (Mann-Whitney)."""
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    n_neg = len(positive) - n_pos
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average rank, 1-based
        i = j + 1
    rank_sum = ranks[positive].sum()
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def _check_scores(scores, truth, n_classes):
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth)
    if scores.ndim != 2 or scores.shape != (len(truth), n_classes) or len(truth) == 0:
        raise ValueError(f"need per-class score rows (n, {n_classes}), got {scores.shape}")
    return scores, truth


def roc_auc_per_class(scores, truth, n_classes):
    """One-vs-rest AUC per class; classes without both positives and
    negatives come back as NaN (skipped from the macro average)."""
    scores, truth = _check_scores(scores, truth, n_classes)
    out = np.full(n_classes, np.nan)
    for c in range(n_classes):
        pos = truth == c
        if 0 < pos.sum() < len(truth):
            out[c] = _binary_roc_auc(scores[:, c], pos)
    return out

def roc_auc_macro(scores, truth, n_classes):
    per = roc_auc_per_class(scores, truth, n_classes)
    valid = ~np.isnan(per)
    if not valid.any():
        raise ValueError("no class has both positive and negative examples")
    return float(per[valid].mean())


def _binary_pr_auc(scores, positive):
    """Step sum over thresholds at the observed scores (no interpolation)."""
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    p = positive[order]
    area = 0.0
    prev_recall = 0.0
    tp = fp = 0
    i = 0
    n = len(s)
    while i < n:
        j = i
        while j + 1 < n and s[j + 1] == s[i]:
            j += 1
        tp += int(p[i : j + 1].sum())
        fp += (j - i + 1) - int(p[i : j + 1].sum())
        precision = tp / (tp + fp)
        recall = tp / n_pos
        area += (recall - prev_recall) * precision
        prev_recall = recall
        i = j + 1
    return area


def pr_auc_per_class(scores, truth, n_classes):
    scores, truth = _check_scores(scores, truth, n_classes)
    out = np.full(n_classes, np.nan)
    for c in range(n_classes):
        pos = truth == c
        if 0 < pos.sum() < len(truth):
            out[c] = _binary_pr_auc(scores[:, c], pos)
    return out


def pr_auc_macro(scores, truth, n_classes):
    per = pr_auc_per_class(scores, truth, n_classes)
    valid = ~np.isnan(per)
    if not valid.any():
        raise ValueError("no class has both positive and negative examples")
    return float(per[valid].mean())


def t_test_one_tailed(sample_a, sample_b):
    """Welch two-sample t-test; p-value for the alternative mean(a) > mean(b).

    The t tail probability comes from the regularized incomplete beta.
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("both samples need at least 2 observations")
    va = a.var(ddof=1)
    vb = b.var(ddof=1)
    if va + vb <= 0:
        raise ValueError("zero variance in both samples; t statistic undefined")
    na, nb = len(a), len(b)
    se2 = va / na + vb / nb
    t = (a.mean() - b.mean()) / np.sqrt(se2)
    dof = se2 ** 2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
    x = dof / (dof + t * t)
    tail = 0.5 * betainc(dof / 2.0, 0.5, x)
    return float(tail if t >= 0 else 1.0 - tail)


@dataclass
class MetricsReport:
    accuracy: float
    macro_f1: float
    roc_auc: float
    pr_auc: float
    n_eval: int
    per_class_f1: list = field(default_factory=list)
    per_class_roc_auc: list = field(default_factory=list)
    per_class_pr_auc: list = field(default_factory=list)
    skipped_classes: list = field(default_factory=list)

    def to_dict(self):
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "roc_auc": self.roc_auc,
            "pr_auc": self.pr_auc,
            "n_eval": self.n_eval,
            "per_class_f1": self.per_class_f1,
            "per_class_roc_auc": self.per_class_roc_auc,
            "per_class_pr_auc": self.per_class_pr_auc,
            "skipped_classes": self.skipped_classes,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self):
        rows = [("accuracy", self.accuracy), ("macro_f1", self.macro_f1),
                ("roc_auc", self.roc_auc), ("pr_auc", self.pr_auc)]
        width = max(len(k) for k, _ in rows)
        lines = [f"{k.ljust(width)}  {v:.6f}" for k, v in rows]
        lines.append(f"{'n_eval'.ljust(width)}  {self.n_eval}")
        if self.skipped_classes:
            lines.append(f"skipped classes (no positives or no negatives): "
                         f"{self.skipped_classes}")
        return "\n".join(lines)


def compute_report(scores, truth, n_classes):
    """Full evaluation of per-class probability scores against labels."""
    scores, truth = _check_scores(scores, truth, n_classes)
    preds = np.argmax(scores, axis=1)
    roc = roc_auc_per_class(scores, truth, n_classes)
    pr = pr_auc_per_class(scores, truth, n_classes)
    skipped = [int(c) for c in range(n_classes) if np.isnan(roc[c])]
    valid = ~np.isnan(roc)
    if not valid.any():
        raise ValueError("no class has both positive and negative examples")
    return MetricsReport(
        accuracy=accuracy(preds, truth),
        macro_f1=macro_f1(preds, truth, n_classes),
        roc_auc=float(roc[valid].mean()),
        pr_auc=float(pr[valid].mean()),
        n_eval=len(truth),
        per_class_f1=[float(v) for v in f1_per_class(preds, truth, n_classes)],
        per_class_roc_auc=[None if np.isnan(v) else float(v) for v in roc],
        per_class_pr_auc=[None if np.isnan(v) else float(v) for v in pr],
        skipped_classes=skipped,
    )

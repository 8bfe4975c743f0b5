"""Executable agreement theory for the infused model.

The chain: the per-instance target fitting loss (squared probability gap
to the rich model plus the poor-data fit term) is bounded by c + 1; a
Hoeffding argument turns a paired-sample budget into an epsilon-accurate
empirical loss; whenever the per-instance loss is at most phi^2 (phi the
rich model's half-margin), the two models must agree on the instance; and
a Markov step converts the loss bound into a lower bound on the agreement
probability. ``verify_theorem1`` Monte-Carlos the whole chain on the
synthetic generator.
"""

import json
import math
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .data import SyntheticSpec, generate_synthetic, split
from .infusion import BehaviorFitConfig, cheer
from .model import ExtractorConfig, TrainConfig, TransferableModel, train_supervised

# sharp outputs keep rich margins (hence phi) large in theorem verification
THEOREM_TEMPERATURE = 0.25
_TRIAL_STREAM = 0x7E0


def _poor_fit_term(poor, h_p):
    """(1/m) sum_t (1 - S(y_t | x_t))^2; zero (with a warning) when m = 0."""
    if h_p is None or len(h_p) == 0:
        warnings.warn("empty poor dataset: poor-data fit term treated as 0")
        return 0.0
    S = poor.proba_batch(h_p.X)
    picked = S[np.arange(len(h_p)), h_p.y]
    return float(((1.0 - picked) ** 2).mean())


def particular_loss(poor, rich, x, h_p, poor_term=None):
    """Per-instance target fitting loss for a paired sample x = (rich view,
    poor view). Always lies in [0, c + 1].

    ``poor_term`` may carry the precomputed poor-data term, which does not
    depend on x.
    """
    x_rich, x_poor = x
    T = rich.predict_proba(x_rich)
    S = poor.predict_proba(x_poor)
    if poor_term is None:
        poor_term = _poor_fit_term(poor, h_p)
    return float(((T - S) ** 2).sum()) + poor_term


def paired_gaps(poor, rich, h_o):
    """Squared probability gaps summed over classes, one value per pair."""
    T = rich.proba_batch(h_o.rich.X)
    S = poor.proba_batch(h_o.poor.X)
    return ((T - S) ** 2).sum(axis=1)


def empirical_loss(poor, rich, h_o, h_p):
    """Mean particular loss over the paired dataset."""
    if h_o is None or len(h_o) == 0:
        raise ValueError("paired dataset is empty")
    return float(paired_gaps(poor, rich, h_o).mean()) + _poor_fit_term(poor, h_p)


def robustness_constant(rich, eval_inputs):
    """Half the minimum top-two probability margin of the rich model over
    ``eval_inputs`` (rich views, shape (n, channels, time))."""
    eval_inputs = np.asarray(eval_inputs, dtype=np.float64)
    if eval_inputs.ndim != 3 or len(eval_inputs) == 0:
        raise ValueError("need a non-empty batch of rich inputs")
    P = rich.proba_batch(eval_inputs)
    part = np.partition(P, P.shape[1] - 2, axis=1)
    margins = part[:, -1] - part[:, -2]
    return 0.5 * float(margins.min())


def required_pairs(n_classes, eps, delta):
    """Paired-sample budget ceil(((c+1)^2 / (2 eps^2)) * ln(2 / delta))."""
    if n_classes < 2:
        raise ValueError("need at least 2 classes")
    if not (0 < eps < 1) or not (0 < delta < 1):
        raise ValueError("eps and delta must lie in (0, 1)")
    return int(math.ceil((n_classes + 1) ** 2 / (2.0 * eps ** 2) * math.log(2.0 / delta)))


def check_lemma2(poor, rich, x, h_p, phi, poor_term=None):
    """Sufficient-condition check on one paired sample.

    condition_met: particular loss <= phi^2 (phi computed over a set
    containing x). agree: both models emit the same hard label. The theory
    asserts condition_met implies agree; callers test exactly that.
    """
    loss = particular_loss(poor, rich, x, h_p, poor_term=poor_term)
    x_rich, x_poor = x
    agree = poor.predict(x_poor) == rich.predict(x_rich)
    return {"condition_met": bool(loss <= phi * phi), "agree": bool(agree),
            "loss": loss, "phi": float(phi)}


def agreement_bound(alpha, eps, phi):
    """Lower bound 1 - (alpha + 2 eps) / phi^2 on the agreement probability.

    May be negative (vacuous); returned as-is so callers can flag it.
    """
    if phi <= 0:
        raise ValueError("phi must be positive; the bound is vacuous at phi = 0")
    return 1.0 - (alpha + 2.0 * eps) / (phi * phi)


@dataclass
class TheoryReport:
    """One Monte-Carlo trial of the agreement bound."""

    phi: float
    alpha_hat: float
    eps: float
    delta: float
    k_required: int
    bound: float
    empirical_agreement: float
    n_eval: int
    vacuous: bool
    satisfied: bool

    def to_dict(self):
        return asdict(self)


@dataclass
class TheoremCheck:
    trials: list = field(default_factory=list)
    n_satisfied: int = 0
    n_vacuous: int = 0
    fraction_satisfied: float = 0.0

    def to_dict(self):
        return {"trials": [t.to_dict() for t in self.trials],
                "n_trials": len(self.trials),
                "n_satisfied": self.n_satisfied,
                "n_vacuous": self.n_vacuous,
                "fraction_satisfied": self.fraction_satisfied}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def default_theorem_generator(seed=0):
    """Realizable setting: identical rich/poor views, cleanly separated
    classes, no label noise, sizes filled in per trial."""
    return SyntheticSpec(
        n_classes=2, prototype_len=16,
        n_rich_channels=1, n_poor_channels=1,
        rich_gain=1.0, poor_gain=1.0, rich_noise=0.0, poor_noise=0.0,
        latent_jitter=0.25, class_separation=1.0, class_blend=0.0,
        label_noise=0.0, n_rich=2000, n_poor=400, n_paired=0, seed=seed)


def verify_theorem1(generator=None, extractor=None, train_cfg=None,
                    behavior_cfg=None, eps=0.05, delta=0.05, trials=20,
                    n_eval=400, seed=0):
    """Monte-Carlo check of the agreement bound.

    One rich model is trained up front; each trial draws a fresh paired
    set of the required size, infuses a fresh poor model, measures the
    half-margin and the agreement rate on a fresh evaluation set, and
    compares the rate against the bound (alpha estimated by the trained
    model's empirical loss). Trials with a non-positive bound are counted
    as trivially satisfied but flagged as vacuous.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    generator = generator or default_theorem_generator(seed)
    extractor = extractor or ExtractorConfig(
        n_segments=4, conv_layers=((8, 3, 1),), rnn_hidden=8)
    train_cfg = train_cfg or TrainConfig(max_epochs=120, patience=15,
                                         batch_size=128, seed=seed)
    behavior_cfg = behavior_cfg or BehaviorFitConfig(ridge=1e-3)

    c = generator.n_classes
    k_req = required_pairs(c, eps, delta)

    base = replace(generator, n_paired=0, seed=seed)
    h_r, _, _ = generate_synthetic(base)
    tr, va, _te = split(h_r, (0.8, 0.1, 0.1), seed=seed)
    rich = train_supervised(tr, va, c, extractor, train_cfg,
                            temperature=THEOREM_TEMPERATURE)

    check = TheoremCheck()
    proto_seed = generator.prototype_seed if generator.prototype_seed is not None else seed
    trial_seeds = np.random.SeedSequence([seed, _TRIAL_STREAM]).generate_state(trials)
    for t in range(trials):
        # fresh i.i.d. draws from the SAME distribution: only the draw seed
        # varies, the prototypes (and the trained pipeline seeds) stay fixed
        tseed = int(trial_seeds[t])
        trial_spec = replace(generator, n_rich=0, n_poor=generator.n_poor,
                             n_paired=k_req + n_eval, seed=tseed,
                             prototype_seed=proto_seed)
        _, h_p, h_all = generate_synthetic(trial_spec)
        h_o = h_all.take(np.arange(k_req))
        h_eval = h_all.take(np.arange(k_req, k_req + n_eval))

        poor = TransferableModel(h_p.n_channels, h_p.seq_len, c, extractor,
                                 temperature=THEOREM_TEMPERATURE, seed=seed)
        poor = cheer(h_p, rich, h_o, poor, behavior_cfg, train_cfg)

        phi = robustness_constant(rich, h_eval.rich.X)
        alpha_hat = empirical_loss(poor, rich, h_o, h_p)
        agreement = float((poor.predict_batch(h_eval.poor.X)
                           == rich.predict_batch(h_eval.rich.X)).mean())
        if phi > 0:
            bound = agreement_bound(alpha_hat, eps, phi)
        else:
            bound = -math.inf
        vacuous = bound <= 0
        satisfied = agreement >= bound
        check.trials.append(TheoryReport(
            phi=phi, alpha_hat=alpha_hat, eps=eps, delta=delta,
            k_required=k_req, bound=bound, empirical_agreement=agreement,
            n_eval=n_eval, vacuous=vacuous, satisfied=satisfied))
    check.n_satisfied = sum(t.satisfied for t in check.trials)
    check.n_vacuous = sum(t.vacuous for t in check.trials)
    check.fraction_satisfied = check.n_satisfied / len(check.trials)
    return check

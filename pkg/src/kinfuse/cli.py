"""Batch experiment runner and command-line interface.

Subcommands: gen-data, train-rich, infuse, baseline, evaluate,
verify-theory, report. ``evaluate`` runs the full protocol from an
experiment config: per seed it splits the data 80/10/10, trains or reuses
the rich model, runs every requested method, and evaluates on the test
split; results land as per-seed JSON plus an aggregate table, with
optional paired-ratio and channel-count sweep series as CSV.

Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

import argparse
import json
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .baselines import ATConfig, KDConfig, train_at, train_direct, train_kd
from .data import (
    Dataset,
    PairedDataset,
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    load_paired,
    rank_by_entropy,
    rank_by_mutual_info,
    save_dataset,
    save_paired,
    select_channels,
    split,
    subsample_pairs,
)
from .infusion import BehaviorFitConfig, cheer
from .metrics import compute_report, t_test_one_tailed
from .model import (
    ExtractorConfig,
    TrainConfig,
    TransferableModel,
    load_model,
    save_model,
    train_supervised,
)
from .theory import verify_theorem1

METHODS = ("direct", "kd", "at", "cheer", "rich")
CHANNEL_POLICIES = ("all", "explicit", "top-mi", "bottom-mi",
                    "top-entropy", "middle-entropy", "bottom-entropy")


class ConfigError(ValueError):
    pass


def default_rich_arch():
    return ExtractorConfig(n_segments=4, conv_layers=((32, 3, 1), (32, 3, 1)),
                           rnn_hidden=16)


def default_poor_arch():
    return ExtractorConfig(n_segments=4, conv_layers=((8, 3, 1), (8, 3, 1)),
                           rnn_hidden=16)


@dataclass
class ExperimentConfig:
    synthetic: SyntheticSpec = None
    data_dir: str = None
    rich_arch: ExtractorConfig = field(default_factory=default_rich_arch)
    poor_arch: ExtractorConfig = field(default_factory=default_poor_arch)
    scorer_mode: str = "raw-linear"
    rich_temperature: float = 1.0
    poor_temperature: float = 1.0
    train: TrainConfig = field(default_factory=TrainConfig)
    kd: KDConfig = field(default_factory=KDConfig)
    at: ATConfig = field(default_factory=ATConfig)
    infusion: BehaviorFitConfig = field(default_factory=BehaviorFitConfig)
    paired_ratio: float = 0.5
    channel_policy: str = "all"
    channels: list = None
    n_poor_channels: int = None
    methods: tuple = ("direct", "kd", "at", "cheer", "rich")
    seeds: tuple = tuple(range(10))
    out_dir: str = "results"
    save_models: bool = False
    sweep_paired_ratio: tuple = ()
    sweep_n_channels: tuple = ()

    def __post_init__(self):
        if self.synthetic is None and self.data_dir is None:
            raise ConfigError("config needs a data source: 'synthetic' or 'data_dir'")
        if not self.methods:
            raise ConfigError("at least one method is required")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; choose from {METHODS}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if not (0 < self.paired_ratio <= 1):
            raise ConfigError(f"paired ratio must lie in (0, 1], got {self.paired_ratio}")
        if self.channel_policy not in CHANNEL_POLICIES:
            raise ConfigError(f"unknown channel policy {self.channel_policy!r}")
        if self.channel_policy == "explicit" and not self.channels:
            raise ConfigError("explicit channel policy needs 'channels'")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        try:
            if "synthetic" in d and d["synthetic"] is not None:
                d["synthetic"] = SyntheticSpec(**d["synthetic"])
            for key, klass in (("rich_arch", ExtractorConfig),
                               ("poor_arch", ExtractorConfig),
                               ("train", TrainConfig), ("kd", KDConfig),
                               ("at", ATConfig), ("infusion", BehaviorFitConfig)):
                if key in d and isinstance(d[key], dict):
                    d[key] = klass(**d[key])
            for key in ("methods", "seeds", "sweep_paired_ratio", "sweep_n_channels"):
                if key in d and d[key] is not None:
                    d[key] = tuple(d[key])
            return cls(**d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid experiment config: {exc}") from exc

    @classmethod
    def from_json(cls, path):
        try:
            with open(path) as f:
                return cls.from_dict(json.load(f))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc


def load_bundle(cfg):
    """(H_r, H_p, H_o) from the configured source."""
    if cfg.synthetic is not None:
        return generate_synthetic(cfg.synthetic)
    root = Path(cfg.data_dir)
    return (load_dataset(root / "h_r"), load_dataset(root / "h_p"),
            load_paired(root / "h_o"))


def choose_channels(h_p_train, policy, n_channels, explicit):
    """Poor-view channel subset under the configured selection policy."""
    total = h_p_train.n_channels
    if policy == "all":
        return list(range(total))
    if policy == "explicit":
        return list(explicit)
    n = n_channels or max(1, total // 2)
    if policy in ("top-mi", "bottom-mi"):
        order, _ = rank_by_mutual_info(h_p_train)
    else:
        order, _ = rank_by_entropy(h_p_train)
    if policy.startswith("top"):
        picked = order[:n]
    elif policy.startswith("bottom"):
        picked = order[-n:]
    else:  # middle
        start = max(0, (total - n) // 2)
        picked = order[start : start + n]
    return sorted(int(c) for c in picked)


def _restrict_poor(parts, channels):
    return tuple(select_channels(p, channels) for p in parts)


def _restrict_paired(parts, channels):
    return tuple(PairedDataset(rich=p.rich, poor=select_channels(p.poor, channels))
                 for p in parts)


def evaluate_model(model, test_X, test_y, n_classes):
    return compute_report(model.proba_batch(test_X), test_y, n_classes)


def _train_rich_for_seed(h_r_parts, cfg, seed):
    tr, va, _ = h_r_parts
    tc = replace(cfg.train, seed=seed)
    return train_supervised(tr, va, tr_n_classes(tr), cfg.rich_arch, tc,
                            scorer_mode=cfg.scorer_mode,
                            temperature=cfg.rich_temperature)


def tr_n_classes(ds):
    return ds.n_classes


def run_methods(cfg, seed, rich, h_p_parts, h_o_parts, paired_ratio, methods):
    """Train the requested poor-side methods and evaluate on the test split."""
    p_tr, p_va, p_te = h_p_parts
    o_tr, o_va, _ = h_o_parts
    o_sub = subsample_pairs(o_tr, paired_ratio, seed=seed)
    n_classes = p_tr.n_classes
    tc = replace(cfg.train, seed=seed)
    out = {}
    for method in methods:
        if method == "rich":
            continue
        if method == "direct":
            model = train_direct(p_tr, n_classes, cfg.poor_arch, tc,
                                 scorer_mode=cfg.scorer_mode,
                                 temperature=cfg.poor_temperature, val_poor=p_va)
        elif method == "kd":
            model = train_kd(rich, o_sub, p_tr, cfg.poor_arch, cfg.kd, tc,
                             scorer_mode=cfg.scorer_mode,
                             temperature=cfg.poor_temperature,
                             val_pairs=o_va, val_poor=p_va)
        elif method == "at":
            model = train_at(rich, o_sub, p_tr, cfg.poor_arch, cfg.at, tc,
                             scorer_mode=cfg.scorer_mode,
                             temperature=cfg.poor_temperature,
                             val_pairs=o_va, val_poor=p_va)
        elif method == "cheer":
            poor = TransferableModel(p_tr.n_channels, p_tr.seq_len, n_classes,
                                     cfg.poor_arch, scorer_mode=cfg.scorer_mode,
                                     temperature=cfg.poor_temperature, seed=seed)
            model = cheer(p_tr, rich, o_sub, poor, cfg.infusion, tc,
                          val_pairs=o_va, val_poor=p_va)
        else:
            raise ConfigError(f"unknown method {method!r}")
        out[method] = (model, evaluate_model(model, p_te.X, p_te.y, n_classes))
    return out


def run_seed(cfg, bundle, seed, out_root):
    """One protocol cell: split, train, evaluate, write per-seed files."""
    h_r, h_p, h_o = bundle
    r_parts = split(h_r, (0.8, 0.1, 0.1), seed=seed)
    p_parts = split(h_p, (0.8, 0.1, 0.1), seed=seed)
    o_parts = split(h_o, (0.8, 0.1, 0.1), seed=seed)

    channels = choose_channels(p_parts[0], cfg.channel_policy,
                               cfg.n_poor_channels, cfg.channels)
    if channels != list(range(h_p.n_channels)):
        p_parts = _restrict_poor(p_parts, channels)
        o_parts = _restrict_paired(o_parts, channels)

    seed_dir = Path(out_root) / f"seed_{seed}"
    results = {}
    rich = None
    if set(cfg.methods) - {"direct"}:
        rich = _train_rich_for_seed(r_parts, cfg, seed)
    if "rich" in cfg.methods:
        report = evaluate_model(rich, r_parts[2].X, r_parts[2].y, h_r.n_classes)
        results["rich"] = (rich, report)

    poor_methods = [m for m in cfg.methods if m != "rich"]
    results.update(run_methods(cfg, seed, rich, p_parts, o_parts,
                               cfg.paired_ratio, poor_methods))

    for method, (model, report) in results.items():
        mdir = seed_dir / method
        mdir.mkdir(parents=True, exist_ok=True)
        with open(mdir / "metrics.json", "w") as f:
            f.write(report.to_json())
            f.write("\n")
        if cfg.save_models:
            save_model(model, mdir / "model")

    sweep_rows = []
    for ratio in cfg.sweep_paired_ratio:
        cell = run_methods(cfg, seed, rich, p_parts, o_parts, ratio, poor_methods)
        for method, (_, rep) in cell.items():
            sweep_rows.append(("paired_ratio", float(ratio), method, seed,
                               rep.roc_auc))
    if cfg.sweep_n_channels:
        # channel counts are swept over the MI ranking of the full poor view
        base_p = split(h_p, (0.8, 0.1, 0.1), seed=seed)
        base_o = split(h_o, (0.8, 0.1, 0.1), seed=seed)
        ranked, _ = rank_by_mutual_info(base_p[0])
        for n_ch in cfg.sweep_n_channels:
            chosen = sorted(int(c) for c in ranked[:n_ch])
            cell = run_methods(cfg, seed, rich, _restrict_poor(base_p, chosen),
                               _restrict_paired(base_o, chosen),
                               cfg.paired_ratio, poor_methods)
            for method, (_, rep) in cell.items():
                sweep_rows.append(("n_channels", float(n_ch), method, seed,
                                   rep.roc_auc))
    return {m: rep.to_dict() for m, (_, rep) in results.items()}, sweep_rows


def run_experiment(cfg):
    """The full protocol over all configured seeds; returns the summary."""
    bundle = load_bundle(cfg)
    out_root = Path(cfg.out_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    with open(out_root / "experiment.json", "w") as f:
        json.dump(_config_dict(cfg), f, indent=2, sort_keys=True, default=str)
        f.write("\n")
    all_sweeps = []
    failures = []
    for seed in cfg.seeds:
        try:
            _, sweep_rows = run_seed(cfg, bundle, seed, out_root)
            all_sweeps.extend(sweep_rows)
        except Exception as exc:  # keep going; report the failed cell
            failures.append({"seed": seed, "error": f"{type(exc).__name__}: {exc}"})
    if all_sweeps:
        _write_sweeps(out_root, all_sweeps)
    summary = report(out_root)
    if failures:
        summary["failures"] = failures
        with open(out_root / "failures.json", "w") as f:
            json.dump(failures, f, indent=2, sort_keys=True)
            f.write("\n")
        _write_summary(out_root, summary)
    return summary


def _config_dict(cfg):
    d = {}
    for key, value in vars(cfg).items():
        if hasattr(value, "to_dict"):
            d[key] = value.to_dict()
        elif hasattr(value, "__dataclass_fields__"):
            d[key] = {k: getattr(value, k) for k in value.__dataclass_fields__}
        else:
            d[key] = value
    return d


def _write_sweeps(out_root, rows):
    for kind, fname in (("paired_ratio", "paired_ratio_sweep.csv"),
                        ("n_channels", "channel_sweep.csv")):
        subset = [r for r in rows if r[0] == kind]
        if not subset:
            continue
        cells = {}
        for _, value, method, seed, auc in subset:
            cells.setdefault((value, method), []).append(auc)
        lines = [f"{kind},method,roc_auc_mean,roc_auc_std,n_seeds"]
        for (value, method) in sorted(cells):
            aucs = np.asarray(cells[(value, method)])
            lines.append(f"{value:g},{method},{aucs.mean():.6f},"
                         f"{aucs.std(ddof=0):.6f},{len(aucs)}")
        with open(Path(out_root) / fname, "w") as f:
            f.write("\n".join(lines))
            f.write("\n")


METRIC_KEYS = ("roc_auc", "pr_auc", "accuracy", "macro_f1")


def report(results_dir):
    """Aggregate per-seed metric files: mean and std per method, plus
    one-tailed significance of cheer against each baseline on ROC-AUC.
    Re-running on unchanged results reproduces the outputs byte for byte."""
    root = Path(results_dir)
    per_method = {}
    sources = {}
    for mfile in sorted(root.glob("seed_*/*/metrics.json")):
        method = mfile.parent.name
        with open(mfile) as f:
            rec = json.load(f)
        per_method.setdefault(method, []).append(rec)
        sources.setdefault(method, []).append(str(mfile.relative_to(root)))
    if not per_method:
        raise FileNotFoundError(f"no seed_*/<method>/metrics.json under {results_dir}")

    methods = [m for m in METHODS if m in per_method]
    table = {}
    for m in methods:
        recs = per_method[m]
        table[m] = {"n_seeds": len(recs), "sources": sources[m]}
        for key in METRIC_KEYS:
            vals = np.asarray([r[key] for r in recs])
            table[m][key] = {"mean": float(vals.mean()),
                             "std": float(vals.std(ddof=0))}

    p_values = {}
    if "cheer" in per_method and len(per_method["cheer"]) >= 2:
        cheer_auc = [r["roc_auc"] for r in per_method["cheer"]]
        for m in methods:
            if m == "cheer" or len(per_method[m]) < 2:
                continue
            other = [r["roc_auc"] for r in per_method[m]]
            try:
                p = t_test_one_tailed(cheer_auc, other)
            except ValueError:
                # degenerate zero-variance case: equal means score 0.5
                diff = float(np.mean(cheer_auc) - np.mean(other))
                p = 0.5 if diff == 0 else (0.0 if diff > 0 else 1.0)
            p_values[m] = p

    summary = {"methods": table, "p_values_roc_auc_cheer_vs": p_values}
    _write_summary(root, summary)
    return summary


def _write_summary(root, summary):
    with open(Path(root) / "summary.json", "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    lines = []
    header = f"{'method':<8}" + "".join(f"{k:>22}" for k in METRIC_KEYS)
    lines.append(header)
    for m, row in summary["methods"].items():
        cells = "".join(
            f"{row[k]['mean']:>14.4f} +/- {row[k]['std']:.4f}" for k in METRIC_KEYS)
        lines.append(f"{m:<8}{cells}")
    if summary.get("p_values_roc_auc_cheer_vs"):
        lines.append("")
        lines.append("one-tailed p (cheer > baseline) on ROC-AUC:")
        for m, p in sorted(summary["p_values_roc_auc_cheer_vs"].items()):
            lines.append(f"  vs {m:<8} p = {p:.6f}")
    text = "\n".join(lines) + "\n"
    with open(Path(root) / "summary.txt", "w") as f:
        f.write(text)
    return text


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_data(args):
    if args.config:
        with open(args.config) as f:
            spec = SyntheticSpec(**json.load(f))
    else:
        spec = SyntheticSpec()
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    h_r, h_p, h_o = generate_synthetic(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "spec.json", "w") as f:
        json.dump(spec.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    save_dataset(h_r, out / "h_r")
    save_dataset(h_p, out / "h_p")
    save_paired(h_o, out / "h_o")
    print(f"wrote {len(h_r)} rich, {len(h_p)} poor, {len(h_o)} paired samples to {out}")
    return 0


def _load_train_cfg(args):
    if args.config:
        cfg = ExperimentConfig.from_json(args.config)
    else:
        cfg = ExperimentConfig(data_dir=args.data)
    if args.data:
        cfg = replace(cfg, data_dir=args.data, synthetic=None)
    if args.seed is not None:
        cfg = replace(cfg, train=replace(cfg.train, seed=args.seed))
    return cfg


def cmd_train_rich(args):
    cfg = _load_train_cfg(args)
    h_r, _, _ = load_bundle(cfg)
    tr, va, te = split(h_r, (0.8, 0.1, 0.1), seed=cfg.train.seed)
    model = train_supervised(tr, va, h_r.n_classes, cfg.rich_arch, cfg.train,
                             scorer_mode=cfg.scorer_mode,
                             temperature=cfg.rich_temperature)
    save_model(model, args.out)
    rep = evaluate_model(model, te.X, te.y, h_r.n_classes)
    print(rep.to_text())
    print(f"saved rich checkpoint to {args.out}")
    return 0


def cmd_infuse(args):
    cfg = _load_train_cfg(args)
    if args.paired_ratio is not None:
        cfg = replace(cfg, paired_ratio=args.paired_ratio)
    _, h_p, h_o = load_bundle(cfg)
    rich = load_model(args.rich)
    seed = cfg.train.seed
    p_tr, p_va, p_te = split(h_p, (0.8, 0.1, 0.1), seed=seed)
    o_tr, o_va, _ = split(h_o, (0.8, 0.1, 0.1), seed=seed)
    o_sub = subsample_pairs(o_tr, cfg.paired_ratio, seed=seed)
    poor = TransferableModel(h_p.n_channels, h_p.seq_len, h_p.n_classes,
                             cfg.poor_arch, scorer_mode=cfg.scorer_mode,
                             temperature=cfg.poor_temperature, seed=seed)
    out = Path(args.out)
    model = cheer(p_tr, rich, o_sub, poor, cfg.infusion, cfg.train,
                  val_pairs=o_va, val_poor=p_va,
                  report_path=out / "infusion_report.json")
    save_model(model, out / "model")
    rep = evaluate_model(model, p_te.X, p_te.y, h_p.n_classes)
    with open(out / "metrics.json", "w") as f:
        f.write(rep.to_json())
        f.write("\n")
    print(rep.to_text())
    return 0


def cmd_baseline(args):
    cfg = _load_train_cfg(args)
    _, h_p, h_o = load_bundle(cfg)
    seed = cfg.train.seed
    p_tr, p_va, p_te = split(h_p, (0.8, 0.1, 0.1), seed=seed)
    o_tr, o_va, _ = split(h_o, (0.8, 0.1, 0.1), seed=seed)
    o_sub = subsample_pairs(o_tr, cfg.paired_ratio, seed=seed)
    if args.method == "direct":
        model = train_direct(p_tr, h_p.n_classes, cfg.poor_arch, cfg.train,
                             scorer_mode=cfg.scorer_mode,
                             temperature=cfg.poor_temperature, val_poor=p_va)
    else:
        rich = load_model(args.rich) if args.rich else None
        if rich is None:
            raise ConfigError(f"method {args.method!r} needs --rich")
        trainer = train_kd if args.method == "kd" else train_at
        extra = cfg.kd if args.method == "kd" else cfg.at
        model = trainer(rich, o_sub, p_tr, cfg.poor_arch, extra, cfg.train,
                        scorer_mode=cfg.scorer_mode,
                        temperature=cfg.poor_temperature,
                        val_pairs=o_va, val_poor=p_va)
    out = Path(args.out)
    save_model(model, out / "model")
    rep = evaluate_model(model, p_te.X, p_te.y, h_p.n_classes)
    with open(out / "metrics.json", "w") as f:
        f.write(rep.to_json())
        f.write("\n")
    print(rep.to_text())
    return 0


def cmd_evaluate(args):
    cfg = ExperimentConfig.from_json(args.config)
    if args.out:
        cfg = replace(cfg, out_dir=args.out)
    if args.seed is not None:
        cfg = replace(cfg, seeds=(args.seed,))
    if args.paired_ratio is not None:
        cfg = replace(cfg, paired_ratio=args.paired_ratio)
    if args.method:
        cfg = replace(cfg, methods=tuple(args.method))
    if args.channels:
        cfg = replace(cfg, channel_policy="explicit",
                      channels=[int(c) for c in args.channels.split(",")])
    summary = run_experiment(cfg)
    print((Path(cfg.out_dir) / "summary.txt").read_text())
    return 0 if "failures" not in summary else 2


def cmd_verify_theory(args):
    kwargs = {}
    if args.config:
        with open(args.config) as f:
            raw = json.load(f)
        if "generator" in raw:
            kwargs["generator"] = SyntheticSpec(**raw["generator"])
        if "extractor" in raw:
            kwargs["extractor"] = ExtractorConfig(**raw["extractor"])
        if "train" in raw:
            kwargs["train_cfg"] = TrainConfig(**raw["train"])
        for key in ("eps", "delta", "n_eval"):
            if key in raw:
                kwargs[key] = raw[key]
    check = verify_theorem1(trials=args.trials, seed=args.seed or 0, **kwargs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "theory_report.json", "w") as f:
        f.write(check.to_json())
        f.write("\n")
    print(f"trials={len(check.trials)} satisfied={check.n_satisfied} "
          f"vacuous={check.n_vacuous}")
    return 0


def cmd_report(args):
    summary = report(args.results)
    print((Path(args.results) / "summary.txt").read_text())
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; spec says 1
        self.print_usage(sys.stderr)
        raise SystemExit(1)


def build_parser():
    p = _Parser(prog="kinfuse", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate synthetic datasets")
    g.add_argument("--config", help="JSON file with generator fields")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train-rich", help="train the rich model")
    t.add_argument("--config")
    t.add_argument("--data", help="dataset directory from gen-data")
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int)
    t.set_defaults(func=cmd_train_rich)

    i = sub.add_parser("infuse", help="run the two-stage infusion")
    i.add_argument("--config")
    i.add_argument("--data")
    i.add_argument("--rich", required=True, help="rich checkpoint directory")
    i.add_argument("--out", required=True)
    i.add_argument("--seed", type=int)
    i.add_argument("--paired-ratio", type=float, dest="paired_ratio")
    i.set_defaults(func=cmd_infuse)

    b = sub.add_parser("baseline", help="train a comparison method")
    b.add_argument("--method", required=True, choices=("direct", "kd", "at"))
    b.add_argument("--config")
    b.add_argument("--data")
    b.add_argument("--rich")
    b.add_argument("--out", required=True)
    b.add_argument("--seed", type=int)
    b.set_defaults(func=cmd_baseline)

    e = sub.add_parser("evaluate", help="run the full multi-seed protocol")
    e.add_argument("--config", required=True)
    e.add_argument("--out")
    e.add_argument("--seed", type=int)
    e.add_argument("--paired-ratio", type=float, dest="paired_ratio")
    e.add_argument("--method", action="append", choices=METHODS)
    e.add_argument("--channels", help="comma-separated poor channel indices")
    e.set_defaults(func=cmd_evaluate)

    v = sub.add_parser("verify-theory", help="Monte-Carlo agreement bound check")
    v.add_argument("--config")
    v.add_argument("--out", required=True)
    v.add_argument("--trials", type=int, default=20)
    v.add_argument("--seed", type=int)
    v.set_defaults(func=cmd_verify_theory)

    r = sub.add_parser("report", help="aggregate per-seed results")
    r.add_argument("--results", required=True)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

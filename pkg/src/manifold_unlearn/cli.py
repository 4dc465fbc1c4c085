"""Command line: ``manifold-unlearn {train,unlearn,sisa}``.

Every random stream is derived from the global ``--seed`` with
:func:`derive_seed`, keyed by a stable label, so adding a method or a USS
value never shifts the randomness of the others.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import sisa
from .baselines import TrainConfig, fine_tune, gradient_ascent_unlearn, retrain_from_scratch, timed, train
from .datagen import Dataset, gen_gaussian_clusters, load_idx, make_split
from .manif_smc import UnlearnConfig, UnlearnReport, manif_smc_unlearn
from .metrics import accuracy, append_results_row, evaluate
from .nn import EncoderSpec, load_params, save_params

log = logging.getLogger("manifold_unlearn")

# "original" evaluates theta_o unchanged, the reference row for deltas
METHODS = ("manif_smc", "manif_fixed", "ga", "retrain", "finetune-after", "original")


class ConfigError(ValueError):
    pass


def derive_seed(seed: int, label: str) -> int:
    """64-bit child seed: ``SeedSequence([seed, crc32(label)])`` first uint64 word."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(label.encode())])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class ExperimentConfig:
    dataset: dict
    encoder: EncoderSpec
    train: TrainConfig
    unlearn: UnlearnConfig
    uss: list
    out: Path
    seed: int = 0
    baselines: dict = field(default_factory=dict)
    balanced: bool = False

    @classmethod
    def load(cls, path, out=None, seed=None) -> "ExperimentConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        try:
            cfg = cls(
                dataset=raw["dataset"],
                encoder=EncoderSpec.from_dict(raw["encoder"]),
                train=TrainConfig.from_dict(raw.get("train", {})),
                unlearn=UnlearnConfig.from_dict(raw.get("unlearn", {})),
                uss=[int(u) for u in raw.get("uss", [])],
                out=Path(out if out is not None else raw.get("out", "runs/default")),
                seed=int(seed if seed is not None else raw.get("seed", 0)),
                baselines=raw.get("baselines", {}),
                balanced=bool(raw.get("balanced", False)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        kind = cfg.dataset.get("kind", "synthetic")
        if kind == "idx":
            for key in ("train_images", "train_labels", "test_images", "test_labels"):
                p = cfg.dataset.get(key)
                if p is None or not Path(p).is_file():
                    raise ConfigError(f"dataset.{key}: file not found ({p})")
        elif kind != "synthetic":
            raise ConfigError(f"unknown dataset kind {kind!r}")
        return cfg

    def datasets(self):
        d = self.dataset
        if d.get("kind", "synthetic") == "synthetic":
            args = (d.get("class_count", 3), d.get("per_class", 100), d.get("dim", 2), d.get("spread", 0.5))
            test_args = (args[0], d.get("test_per_class", args[1]), args[2], args[3])
            return (
                gen_gaussian_clusters(*args, derive_seed(self.seed, "dataset/train")),
                gen_gaussian_clusters(*test_args, derive_seed(self.seed, "dataset/test")),
            )
        train_ds = load_idx(d["train_images"], d["train_labels"])
        test_ds = load_idx(d["test_images"], d["test_labels"])
        limit = d.get("limit")
        if limit:
            train_ds = train_ds.subset(np.arange(min(limit, len(train_ds))))
            test_ds = test_ds.subset(np.arange(min(limit, len(test_ds))))
        classes = max(train_ds.class_count, test_ds.class_count)
        return Dataset(train_ds.inputs, train_ds.labels, classes), Dataset(test_ds.inputs, test_ds.labels, classes)

    def train_config(self) -> TrainConfig:
        return replace(self.train, seed=derive_seed(self.seed, "train") % 2 ** 63)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(header)
        out.writerows(rows)


def cmd_train(cfg: ExperimentConfig) -> None:
    train_ds, _ = cfg.datasets()
    if cfg.encoder.input_dim != train_ds.dim:
        raise ConfigError(f"encoder input {cfg.encoder.input_dim} != data dimension {train_ds.dim}")
    cfg.out.mkdir(parents=True, exist_ok=True)
    trace = []
    theta = train(cfg.encoder, train_ds, cfg.train_config(), trace)
    save_params(cfg.out / "theta_o.bin", theta)
    (cfg.out / "encoder.json").write_text(cfg.encoder.to_json() + "\n")
    _write_csv(cfg.out / "train_trace.csv", ["epoch", "loss"], [[e, repr(float(v))] for e, v in enumerate(trace, 1)])
    if cfg.encoder.head and cfg.train.loss == "cross_entropy":
        log.info("train accuracy %.4f", accuracy(cfg.encoder, theta, train_ds))


def _run_method(method, cfg, theta_o, split, uss):
    spec = cfg.encoder
    b = cfg.baselines
    seed = derive_seed(cfg.seed, f"{method}/{uss}") % 2 ** 63
    if method in ("manif_smc", "manif_fixed", "finetune-after"):
        mode = "fixed" if method == "manif_fixed" else "adaptive"
        ucfg = replace(cfg.unlearn, margin_mode=mode, seed=seed)
        report = manif_smc_unlearn(spec, theta_o, split, ucfg)
        if method == "finetune-after":
            theta, extra = timed(
                fine_tune, spec, report.theta_u, split.retained_data(),
                b.get("finetune_epochs", 2), b.get("finetune_lr", 0.05), cfg.train.batch_size, seed,
            )
            report.theta_u = theta
            report.rt_seconds += extra
            report.method = method
        return report, mode
    if method == "original":
        return UnlearnReport(theta_u=np.asarray(theta_o, dtype=np.float64).copy(), method=method), ""
    if method == "ga":
        theta, rt = timed(
            gradient_ascent_unlearn, spec, theta_o, split.erased_data(),
            b.get("ga_steps", 10), b.get("ga_lr", 0.5), cfg.train.loss,
        )
    elif method == "retrain":
        theta, rt = timed(retrain_from_scratch, spec, split.retained_data(), replace(cfg.train, seed=seed))
    else:
        raise ConfigError(f"unknown method {method!r}; choose from {METHODS}")
    return UnlearnReport(theta_u=theta, method=method, rt_seconds=rt), ""


def cmd_unlearn(cfg: ExperimentConfig, method: str) -> None:
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; choose from {METHODS}")
    params_path = cfg.out / "theta_o.bin"
    if not params_path.is_file():
        raise ConfigError(f"{params_path} missing; run the train command first")
    theta_o = load_params(params_path)
    train_ds, test_ds = cfg.datasets()
    if not cfg.uss:
        raise ConfigError("config lists no uss values")
    for uss in cfg.uss:
        if not 0 < uss < len(train_ds):
            raise ConfigError(f"uss={uss} must be in (0, {len(train_ds)})")
    for uss in cfg.uss:
        split = make_split(
            train_ds, uss, cfg.unlearn.k, cfg.encoder, theta_o,
            derive_seed(cfg.seed, f"split/{uss}"), test=test_ds, balanced=cfg.balanced,
        )
        report, mode = _run_method(method, cfg, theta_o, split, uss)
        record = evaluate(cfg.encoder, report.theta_u, split, test_ds, report.rt_seconds, cfg.train.loss)
        stem = cfg.out / f"{method}_uss{uss}"
        save_params(stem.with_suffix(".bin"), report.theta_u)
        report.write_json(stem.with_name(stem.name + "_report.json"))
        if report.triplet_loss:
            report.write_csv(stem.with_name(stem.name + "_trace.csv"))
        split_path = cfg.out / f"split_uss{uss}.json"
        split_path.write_text(split.to_json() + "\n")
        append_results_row(cfg.out / "results.csv", method, uss, cfg.unlearn.k, mode, record)
        log.info("%s uss=%d mia=%.4f ra=%s ta=%s rt=%.3fs", method, uss, record.mia, record.ra, record.ta, record.rt_seconds)


def cmd_sisa(args) -> None:
    rows = []
    shard = [args.N, args.S]
    slc = [args.D, args.R]
    if any(v is not None for v in shard):
        if None in shard:
            raise ConfigError("sharding needs both --N and --S")
        sc = sisa.ShardingScenario(args.N, args.S, args.K or 1)
        rows += [("seq_shard", sc), ("batch_shard", sc)]
    if any(v is not None for v in slc):
        if None in slc:
            raise ConfigError("slicing needs both --D and --R")
        rows.append(("seq_slice", sisa.SlicingScenario(args.D, args.R, args.e_prime)))
        rows.append(("batch_slice", sisa.SlicingScenario(args.D, args.R, args.e_prime, args.K or 1)))
    if not rows:
        rows = sisa.default_grid()
    results = sisa.run_grid(rows, args.trials, args.seed)

    def fmt(v):
        return repr(float(v)) if isinstance(v, float) else v

    table = [[fmt(r[c]) for c in sisa.CSV_COLUMNS] for r in results]
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "sisa.csv", sisa.CSV_COLUMNS, table)
    else:
        w = csv.writer(sys.stdout)
        w.writerow(sisa.CSV_COLUMNS)
        w.writerows(table)


def build_parser():
    p = argparse.ArgumentParser(prog="manifold-unlearn", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train the original model")
    t.add_argument("--config", required=True)
    t.add_argument("--out")
    t.add_argument("--seed", type=int)

    u = sub.add_parser("unlearn", help="run one unlearning method for every uss value")
    u.add_argument("--config", required=True)
    u.add_argument("--method", required=True)
    u.add_argument("--out")
    u.add_argument("--seed", type=int)

    s = sub.add_parser("sisa", help="closed-form vs Monte Carlo retraining costs")
    s.add_argument("--N", type=int)
    s.add_argument("--S", type=int)
    s.add_argument("--K", type=int)
    s.add_argument("--D", type=int)
    s.add_argument("--R", type=int)
    s.add_argument("--e-prime", dest="e_prime", type=float, default=1.0)
    s.add_argument("--trials", type=int, default=100_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "sisa":
            cmd_sisa(args)
        else:
            cfg = ExperimentConfig.load(args.config, out=args.out, seed=args.seed)
            if args.command == "train":
                cmd_train(cfg)
            else:
                cmd_unlearn(cfg, args.method)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

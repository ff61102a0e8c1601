"""Command-line front end.

Subcommands: train, attack, advtrain, experiment, sweep, transfer,
aggregate, report, fetch. Settings resolve in three layers — built-in
defaults, then a JSON config file (--config), then explicit flags — and
every run banner-logs the version, global seed, and a hash of the fully
resolved config to stderr, which is enough to reproduce any output file.

Streams and exit codes: stdout carries only machine-readable output
(JSON objects or the CSV/markdown report formats); progress and
diagnostics go to stderr. Exit 0 on success, 1 on runtime/data errors
(bad dataset files, missing checkpoints, diverged training), 2 on usage
errors (unknown flags, malformed config).
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .datasets import SplitSpec, data_dir, fetch, load_named, subset_split
from .errors import AtrasError, ConfigFileError, InvalidConfig
from .fgsm import DEFAULT_EPSILON, AttackConfig, robust_accuracy
from .mlp import ArchitectureSpec, evaluate_accuracy, load_checkpoint, save_checkpoint
from .pipeline import (
    DEFAULT_LEARNING_RATE,
    TrainConfig,
    adversarial_training,
    run_experiment,
    train,
)
from .sweep import (
    SweepConfig,
    aggregate_recovery,
    default_grid,
    emit_report,
    parse_records_csv,
    recovery_discrepancies,
    run_sweep,
)
from .transfer import build_transfer_matrix, transfer_report

log = logging.getLogger("atras.cli")

DEFAULT_CONFIG = {
    "dataset": "mnist",
    "data_dir": None,
    "train_count": 5000,
    "test_count": 5000,
    "split_seed": None,  # defaults to the global seed
    "test_source": "train_split",  # or "official": evaluate on the held-out partition
    "seed": 0,
    "train": {
        "epochs": 20,
        "batch_size": 64,
        "learning_rate": None,  # per-dataset default when null
        "optimizer": "sgd_momentum",
        "momentum": 0.9,
        "adam_beta1": 0.9,
        "adam_beta2": 0.999,
        "adam_eps": 1e-8,
        "init_rule": "he_uniform",
        "activation": "relu",
    },
    "attack": {
        "epsilon": None,  # per-dataset default when null
        "target_label": None,
        "clip_lo": 0.0,
        "clip_hi": 1.0,
    },
    "defense_mode": "per_batch",
    "attack_split": "test",
    "finetune": False,
    "grid": "full",
    "parallel": 1,
    "out": None,
}

# flag destination -> config path
_FLAG_MAP = {
    "dataset": ("dataset",),
    "data_dir": ("data_dir",),
    "train_count": ("train_count",),
    "test_count": ("test_count",),
    "split_seed": ("split_seed",),
    "test_source": ("test_source",),
    "seed": ("seed",),
    "epochs": ("train", "epochs"),
    "batch_size": ("train", "batch_size"),
    "learning_rate": ("train", "learning_rate"),
    "optimizer": ("train", "optimizer"),
    "momentum": ("train", "momentum"),
    "init_rule": ("train", "init_rule"),
    "activation": ("train", "activation"),
    "epsilon": ("attack", "epsilon"),
    "target_label": ("attack", "target_label"),
    "defense_mode": ("defense_mode",),
    "attack_split": ("attack_split",),
    "finetune": ("finetune",),
    "parallel": ("parallel",),
    "out": ("out",),
}


def _merge(base: dict, override: dict, prefix: str = "") -> None:
    for key, value in override.items():
        if key not in base:
            raise ConfigFileError(f"unknown config key {prefix + key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigFileError(f"config key {prefix + key!r} must be an object")
            _merge(base[key], value, prefix + key + ".")
        else:
            base[key] = value


def resolve_config(args: argparse.Namespace) -> dict:
    """defaults <- config file <- flags, then fill dataset-derived values."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as e:
            raise ConfigFileError(f"config file {args.config} is not valid JSON: {e}") from e
        if not isinstance(loaded, dict):
            raise ConfigFileError(f"config file {args.config} must hold a JSON object")
        _merge(cfg, loaded)
    for dest, path in _FLAG_MAP.items():
        value = getattr(args, dest, None)
        if value is not None:
            node = cfg
            for key in path[:-1]:
                node = node[key]
            node[path[-1]] = value
    if getattr(args, "grid_index", None) is not None:
        cfg["grid"] = args.grid_index
    if getattr(args, "arch", None):
        cfg["grid"] = [list(parse_arch_text(a)) for a in args.arch]

    if cfg["dataset"] not in ("mnist", "cifar10"):
        raise ConfigFileError(f"unknown dataset {cfg['dataset']!r}; expected 'mnist' or 'cifar10'")
    if cfg["train"]["learning_rate"] is None:
        cfg["train"]["learning_rate"] = DEFAULT_LEARNING_RATE[cfg["dataset"]]
    if cfg["attack"]["epsilon"] is None:
        cfg["attack"]["epsilon"] = DEFAULT_EPSILON[cfg["dataset"]]
    if cfg["split_seed"] is None:
        cfg["split_seed"] = cfg["seed"]
    if cfg["test_source"] not in ("train_split", "official"):
        raise ConfigFileError(f"test_source must be 'train_split' or 'official', got {cfg['test_source']!r}")
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:12]


def parse_arch_text(text: str) -> tuple[int, ...]:
    """Accept '64,512' or '[64, 512]' forms."""
    inner = text.strip()
    if inner.startswith("[") and inner.endswith("]"):
        inner = inner[1:-1]
    try:
        return tuple(int(p) for p in inner.split(",") if p.strip())
    except ValueError as e:
        raise InvalidConfig(f"cannot parse architecture {text!r}: {e}") from e


def _train_config(cfg: dict) -> TrainConfig:
    t = cfg["train"]
    return TrainConfig(
        epochs=t["epochs"],
        batch_size=t["batch_size"],
        learning_rate=t["learning_rate"],
        optimizer=t["optimizer"],
        momentum=t["momentum"],
        adam_beta1=t["adam_beta1"],
        adam_beta2=t["adam_beta2"],
        adam_eps=t["adam_eps"],
        init_rule=t["init_rule"],
        seed=cfg["seed"],
    )


def _attack_config(cfg: dict) -> AttackConfig:
    a = cfg["attack"]
    return AttackConfig(
        epsilon=a["epsilon"],
        target_label=a["target_label"],
        clip_lo=a["clip_lo"],
        clip_hi=a["clip_hi"],
    )


def _load_split(cfg: dict):
    """Resolve the configured dataset into a (train, test) pair."""
    root = data_dir(cfg["data_dir"])
    source = load_named(cfg["dataset"], root, train=True)
    if cfg["test_source"] == "train_split":
        return subset_split(source, SplitSpec(cfg["train_count"], cfg["test_count"], cfg["split_seed"]))
    train_set, _ = subset_split(source, SplitSpec(cfg["train_count"], 1, cfg["split_seed"]))
    official = load_named(cfg["dataset"], root, train=False)
    test_set, _ = subset_split(official, SplitSpec(cfg["test_count"], 1, cfg["split_seed"]))
    return train_set, test_set


def _resolve_grid(cfg: dict) -> list[tuple[int, ...]]:
    grid = cfg["grid"]
    if grid == "full":
        return default_grid()
    if isinstance(grid, str):
        try:
            lo, hi = grid.split("..")
            lo, hi = int(lo), int(hi)
        except ValueError as e:
            raise InvalidConfig(f"grid range {grid!r} must look like '0..2'") from e
        full = default_grid()
        if not 0 <= lo <= hi < len(full):
            raise InvalidConfig(f"grid range {grid!r} outside 0..{len(full) - 1}")
        return full[lo : hi + 1]
    return [tuple(int(w) for w in h) for h in grid]


def _single_arch(cfg: dict, args, input_dim: int) -> ArchitectureSpec:
    if not getattr(args, "arch", None):
        raise InvalidConfig("this command needs exactly one --arch")
    if len(args.arch) != 1:
        raise InvalidConfig(f"this command takes exactly one --arch, got {len(args.arch)}")
    return ArchitectureSpec(
        hidden=parse_arch_text(args.arch[0]),
        input_dim=input_dim,
        activation=cfg["train"]["activation"],
    )


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
        log.info("wrote %s", out)
    else:
        sys.stdout.write(text)


def _print_json(obj: dict) -> None:
    print(json.dumps(obj, sort_keys=True))


# ---------------------------------------------------------------- handlers


def cmd_train(cfg, args) -> int:
    data = _load_split(cfg)
    arch = _single_arch(cfg, args, data[0].dim)
    params, train_acc, test_acc = train(arch, data, _train_config(cfg))
    if args.save_model:
        save_checkpoint(params, args.save_model)
        log.info("checkpoint saved to %s", args.save_model)
    _print_json({"arch": list(arch.hidden), "train_acc": train_acc, "test_acc": test_acc})
    return 0


def cmd_attack(cfg, args) -> int:
    params = load_checkpoint(args.model)
    data = _load_split(cfg)
    attack = _attack_config(cfg)
    test_set = data[1]
    if args.save_adversarial:
        from .fgsm import fgsm_batch, save_adversarial_batch
        from .mlp import accuracy_on

        adv = fgsm_batch(params, test_set.features, test_set.labels, attack)
        save_adversarial_batch(args.save_adversarial, adv, test_set.labels, attack)
        log.info("adversarial batch saved to %s", args.save_adversarial)
        robust = accuracy_on(params, adv, test_set.labels)
    else:
        robust = robust_accuracy(params, test_set, attack)
    _print_json(
        {
            "arch": list(params.arch.hidden),
            "epsilon": attack.epsilon,
            "clean_accuracy": evaluate_accuracy(params, test_set),
            "robust_accuracy": robust,
        }
    )
    return 0


def cmd_advtrain(cfg, args) -> int:
    data = _load_split(cfg)
    arch = _single_arch(cfg, args, data[0].dim)
    baseline = load_checkpoint(args.baseline) if args.baseline else None
    params, adv_train_acc, adv_test_acc = adversarial_training(
        arch,
        data,
        _train_config(cfg),
        _attack_config(cfg),
        mode=cfg["defense_mode"],
        baseline=baseline,
        finetune=cfg["finetune"],
    )
    if args.save_model:
        save_checkpoint(params, args.save_model)
        log.info("checkpoint saved to %s", args.save_model)
    _print_json(
        {
            "arch": list(arch.hidden),
            "mode": cfg["defense_mode"],
            "adversarial_train_acc": adv_train_acc,
            "adversarial_test_acc": adv_test_acc,
        }
    )
    return 0


def cmd_experiment(cfg, args) -> int:
    data = _load_split(cfg)
    arch = _single_arch(cfg, args, data[0].dim)
    record = run_experiment(
        arch,
        data,
        _train_config(cfg),
        _attack_config(cfg),
        mode=cfg["defense_mode"],
        checkpoint_dir=args.save_models,
        attack_split=cfg["attack_split"],
    )
    _emit(emit_report([record], format="csv"), cfg["out"])
    return 0


def cmd_sweep(cfg, args) -> int:
    data = _load_split(cfg)
    sweep_cfg = SweepConfig(
        dataset_name=cfg["dataset"],
        grid=tuple(_resolve_grid(cfg)),
        train_cfg=_train_config(cfg),
        attack=_attack_config(cfg),
        output_path=cfg["out"],
        mode=cfg["defense_mode"],
        attack_split=cfg["attack_split"],
    )
    result = run_sweep(sweep_cfg, data, parallelism=cfg["parallel"])
    log.info("sweep finished: %d records, %d failures", len(result.records), len(result.failures))
    for failure in result.failures:
        log.warning("grid entry %d %s failed in %s", failure.index, list(failure.hidden), failure.phase)
    if not cfg["out"]:
        sys.stdout.write(emit_report(result.records, format="csv"))
    return 0


def cmd_transfer(cfg, args) -> int:
    if len(args.model) < 1:
        raise InvalidConfig("transfer needs at least one --model checkpoint")
    models = [load_checkpoint(p) for p in args.model]
    data = _load_split(cfg)
    tm = build_transfer_matrix(models, data[1], _attack_config(cfg))
    _emit(transfer_report(tm, format=args.format), cfg["out"])
    if not args.no_figures and (cfg["out"] or args.fig_dir):
        from .figures import render_transfer_heatmap

        fig_dir = Path(args.fig_dir) if args.fig_dir else Path(cfg["out"]).parent
        fig_dir.mkdir(parents=True, exist_ok=True)
        stem = Path(cfg["out"]).stem if cfg["out"] else "transfer"
        path = render_transfer_heatmap(tm, fig_dir / f"{stem}_heatmap.png")
        log.info("wrote %s", path)
    return 0


def _infer_dataset(path: str) -> str | None:
    name = Path(path).name.lower()
    if "mnist" in name:
        return "mnist"
    if "cifar" in name:
        return "cifar10"
    return None


def cmd_aggregate(cfg, args) -> int:
    records = parse_records_csv(Path(args.records))
    stats = aggregate_recovery(records)
    for group in ("1", "2", "3", "4+"):
        mean = stats.means[group]
        n = len(stats.members[group])
        if mean is None:
            print(f"depth-{group}: n=0 mean_recovery=n/a")
        else:
            print(f"depth-{group}: n={n} mean_recovery={mean:+.4f}")
    dataset = args.dataset or _infer_dataset(args.records)
    if dataset:
        for flag in recovery_discrepancies(stats, dataset):
            print(flag)
    return 0


def cmd_report(cfg, args) -> int:
    records = parse_records_csv(Path(args.records))
    dataset = args.dataset or _infer_dataset(args.records)
    stats = aggregate_recovery(records)
    _emit(emit_report(records, stats=stats, format=args.format, dataset_name=dataset), cfg["out"])
    if not args.no_figures and (cfg["out"] or args.fig_dir):
        from .figures import render_report_figures

        fig_dir = Path(args.fig_dir) if args.fig_dir else Path(cfg["out"]).parent
        stem = Path(cfg["out"]).stem if cfg["out"] else "report"
        for path in render_report_figures(records, fig_dir, stem, stats=stats):
            log.info("wrote %s", path)
    return 0


def cmd_fetch(cfg, args) -> int:
    if args.list:
        from .datasets import CIFAR10_URL, MNIST_URLS

        for name, url in MNIST_URLS.items():
            print(f"mnist {name} {url}")
        print(f"cifar10 cifar-10-binary.tar.gz {CIFAR10_URL}")
        return 0
    if not args.name:
        raise InvalidConfig("fetch needs a dataset name (mnist or cifar10) or --list")
    written = fetch(args.name, data_dir(cfg["data_dir"]))
    for path in written:
        print(path)
    return 0


# ---------------------------------------------------------------- parser

HANDLERS = {
    "train": cmd_train,
    "attack": cmd_attack,
    "advtrain": cmd_advtrain,
    "experiment": cmd_experiment,
    "sweep": cmd_sweep,
    "transfer": cmd_transfer,
    "aggregate": cmd_aggregate,
    "report": cmd_report,
    "fetch": cmd_fetch,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--dump-config", action="store_true", help="print the resolved config and exit")
    common.add_argument("--quiet", action="store_true", help="suppress progress logging")
    common.add_argument("--seed", type=int, help="global seed (default 0)")
    common.add_argument("--data-dir", dest="data_dir", help="dataset root (default $ATRAS_DATA_DIR or .)")
    common.add_argument("--dataset", choices=["mnist", "cifar10"])
    common.add_argument("--train-count", dest="train_count", type=int)
    common.add_argument("--test-count", dest="test_count", type=int)
    common.add_argument("--split-seed", dest="split_seed", type=int)
    common.add_argument("--test-source", dest="test_source", choices=["train_split", "official"])
    common.add_argument("--epochs", type=int)
    common.add_argument("--batch-size", dest="batch_size", type=int)
    common.add_argument("--learning-rate", "--lr", dest="learning_rate", type=float)
    common.add_argument("--optimizer", choices=["sgd", "sgd_momentum", "adam"])
    common.add_argument("--momentum", type=float)
    common.add_argument("--init-rule", dest="init_rule", choices=["he_uniform", "xavier_uniform"])
    common.add_argument("--activation", choices=["relu", "tanh"])
    common.add_argument("--epsilon", type=float, help="attack budget in [0,1] pixel units")
    common.add_argument("--target-label", dest="target_label", type=int, help="targeted attack label 0..9")
    common.add_argument("--mode", dest="defense_mode", choices=["static", "per_batch"])
    common.add_argument("--attack-split", dest="attack_split", choices=["test", "train"])
    common.add_argument("--finetune", action="store_const", const=True, default=None)
    common.add_argument("--out", help="output file (stdout when omitted)")

    parser = argparse.ArgumentParser(prog="atras", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"atras {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="train one architecture, print accuracies")
    p.add_argument("--arch", action="append", help="hidden widths, e.g. '64,512'")
    p.add_argument("--save-model", dest="save_model", help="write a checkpoint here")

    p = sub.add_parser("attack", parents=[common], help="robust accuracy of a checkpoint")
    p.add_argument("--model", required=True, help="model checkpoint path")
    p.add_argument("--save-adversarial", dest="save_adversarial", help="dump the perturbed test batch here")

    p = sub.add_parser("advtrain", parents=[common], help="adversarial-training defense phase")
    p.add_argument("--arch", action="append", help="hidden widths, e.g. '64,512'")
    p.add_argument("--baseline", help="baseline checkpoint (required for static mode)")
    p.add_argument("--save-model", dest="save_model", help="write the defended checkpoint here")

    p = sub.add_parser("experiment", parents=[common], help="one full four-phase record")
    p.add_argument("--arch", action="append", help="hidden widths, e.g. '64,512'")
    p.add_argument("--save-models", dest="save_models", help="directory for per-phase checkpoints")

    p = sub.add_parser("sweep", parents=[common], help="run the grid, emit records CSV")
    p.add_argument("--grid-index", dest="grid_index", help="inclusive range of grid rows, e.g. '0..2'")
    p.add_argument("--arch", action="append", help="explicit architecture (repeatable)")
    p.add_argument("--parallel", type=int, help="parallel experiments (records stay in grid order)")

    p = sub.add_parser("transfer", parents=[common], help="cross-model transfer matrix from checkpoints")
    p.add_argument("--model", action="append", required=True, help="checkpoint path (repeat per model)")
    p.add_argument("--format", choices=["csv", "markdown"], default="csv")
    p.add_argument("--fig-dir", dest="fig_dir", help="directory for the heatmap figure")
    p.add_argument("--no-figures", dest="no_figures", action="store_true")

    p = sub.add_parser("aggregate", parents=[common], help="recovery stats from a records CSV")
    p.add_argument("records", help="records CSV (e.g. fixtures/table1_mnist.csv)")

    p = sub.add_parser("report", parents=[common], help="records CSV -> markdown/CSV plus figures")
    p.add_argument("records", help="records CSV path")
    p.add_argument("--format", choices=["markdown", "csv"], default="markdown")
    p.add_argument("--fig-dir", dest="fig_dir", help="directory for figures (default: next to --out)")
    p.add_argument("--no-figures", dest="no_figures", action="store_true")

    p = sub.add_parser("fetch", parents=[common], help="download canonical dataset files")
    p.add_argument("name", nargs="?", choices=["mnist", "cifar10"])
    p.add_argument("--list", action="store_true", help="print canonical URLs and exit")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:  # argparse already reported usage errors
        return int(e.code) if e.code is not None else 0

    logging.basicConfig(
        stream=sys.stderr,
        level=logging.WARNING if getattr(args, "quiet", False) else logging.INFO,
        format="%(name)s: %(message)s",
        force=True,
    )
    try:
        cfg = resolve_config(args)
        if getattr(args, "dump_config", False):
            print(json.dumps(cfg, indent=2, sort_keys=True))
            return 0
        log.info("atras %s | seed=%s | config=%s", __version__, cfg["seed"], config_hash(cfg))
        return HANDLERS[args.command](cfg, args)
    except ConfigFileError as e:
        print(f"atras: config error: {e}", file=sys.stderr)
        return 2
    except (AtrasError, OSError) as e:
        print(f"atras: error: {e}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()

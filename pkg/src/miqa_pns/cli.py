"""Command-line entry point: ``miqa-pns {generate,train,eval,compare}``.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import checkpoint as ckpt
from .compare import compare
from .config import RunConfig, dump_config, load_config
from .errors import CheckpointError, ConfigError, DatasetFormatError, NonFiniteLossError
from .metrics import evaluate
from .objective import MODES
from .synthetic import SCENARIOS, Grade, make_split, read_dataset, write_dataset, write_metadata
from .training import train

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
PATH_KEYS = ("run.out", "run.dataset", "run.checkpoint")

log = logging.getLogger("miqa_pns")


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="miqa-pns", description="Train and evaluate PNS-regularized quality classifiers.")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("generate", parents=[common], help="write a synthetic dataset")

    for name, helptext in (("train", "train one model"), ("eval", "evaluate a checkpoint")):
        sp = sub.add_parser(name, parents=[common], help=helptext)
        sp.add_argument("--data", help="dataset file")
        sp.add_argument("--scenario", choices=SCENARIOS)
        if name == "train":
            sp.add_argument("--mode", choices=MODES)
        else:
            sp.add_argument("--checkpoint", help="checkpoint file (training or inference)")

    sp = sub.add_parser("compare", parents=[common], help="paired multi-seed baseline vs miqa-pns runs")
    sp.add_argument("--scenario", choices=SCENARIOS)
    sp.add_argument("--n-seeds", type=int)
    sp.add_argument("--workers", type=int)
    return p


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value
    flag_keys = {
        "seed": "seed",
        "out": "run.out",
        "scenario": "run.scenario",
        "mode": "train.mode",
        "data": "run.dataset",
        "checkpoint": "run.checkpoint",
        "n_seeds": "run.n_seeds",
        "workers": "run.workers",
    }
    for attr, key in flag_keys.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = str(value)
    cfg.update(overrides)
    return cfg


def _embedded(cfg: RunConfig) -> dict[str, str]:
    return {k: v for k, v in cfg.as_dict().items() if k not in PATH_KEYS}


def _prepare_out(cfg: RunConfig, outputs: list[str], force: bool) -> list[str]:
    out = cfg["run.out"]
    os.makedirs(out, exist_ok=True)
    paths = [os.path.join(out, name) for name in outputs]
    existing = [p for p in paths if os.path.exists(p)]
    if existing and not force:
        raise UsageError(f"refusing to overwrite {', '.join(existing)} (use --force)")
    return paths


def _write_text(path: str, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w") as f:
        f.write(text)
    os.replace(tmp, path)


def _dataset_path(cfg: RunConfig) -> str:
    return cfg["run.dataset"] or os.path.join(cfg["run.out"], "dataset.pnsa")


def _load_split(cfg: RunConfig):
    path = _dataset_path(cfg)
    if not os.path.exists(path):
        raise UsageError(f"dataset file not found: {path}")
    data = read_dataset(path)
    return data, make_split(data, cfg["run.scenario"], cfg["seed"])


def cmd_generate(cfg: RunConfig, force: bool) -> int:
    gen = cfg.generator()
    data_path = cfg["run.dataset"] or None
    names = ["dataset.pnsa", "dataset.meta", "config.txt"]
    paths = _prepare_out(cfg, names, force)
    if data_path:
        if os.path.exists(data_path) and not force:
            raise UsageError(f"refusing to overwrite {data_path} (use --force)")
        paths[0] = data_path
    data = gen.generate(cfg["seed"])
    write_dataset(data, paths[0])
    write_metadata(
        paths[1],
        seed=cfg["seed"],
        n=gen.n,
        proportions=gen.proportions,
        height=gen.height,
        width=gen.width,
        limited_artifact_fraction=gen.limited_artifact_fraction,
    )
    _write_text(paths[2], dump_config(cfg))
    counts = data.counts()
    print(f"wrote {len(data)} images to {paths[0]}")
    for g in Grade:
        print(f"  {g.name.capitalize()}: {counts[g]}")
    return EXIT_OK


def cmd_train(cfg: RunConfig, force: bool) -> int:
    tcfg = cfg.train_config()
    data, split = _load_split(cfg)
    paths = _prepare_out(cfg, ["train.pnsm", "inference.pnsm", "metrics.json", "config.txt"], force)
    result = train(
        tcfg,
        (data.features(split.train), data.labels(split.train)),
        (data.features(split.val), data.labels(split.val)),
    )
    report = evaluate(result.model, data.features(split.test), data.labels(split.test))
    h = result.history
    report.seed, report.mode, report.scenario = tcfg.seed, tcfg.mode, cfg["run.scenario"]
    report.epochs_trained, report.best_epoch = h.epochs_trained, h.best_epoch
    report.train_loss, report.val_loss = list(h.train_loss), list(h.val_loss)

    ckpt.save_checkpoint(result.model, paths[0])
    ckpt.save_checkpoint(result.model.inference_only(), paths[1])
    _write_text(paths[2], report.to_document(_embedded(cfg)))
    _write_text(paths[3], dump_config(cfg))
    print(f"{tcfg.mode}: {h.epochs_trained} epochs (best {h.best_epoch}); test f1={report.f1:.4f} "
          f"deficient_accuracy={_num(report.deficient_accuracy)} pns_proxy={_num(report.pns_proxy)}")
    return EXIT_OK


def cmd_eval(cfg: RunConfig, force: bool) -> int:
    path = cfg["run.checkpoint"] or os.path.join(cfg["run.out"], "inference.pnsm")
    if not os.path.exists(path):
        raise UsageError(f"checkpoint not found: {path}")
    model = ckpt.load_checkpoint(path)
    data, split = _load_split(cfg)
    (out_path,) = _prepare_out(cfg, ["eval_metrics.json"], force)
    report = evaluate(model, data.features(split.test), data.labels(split.test))
    report.seed, report.scenario = cfg["seed"], cfg["run.scenario"]
    _write_text(out_path, report.to_document(_embedded(cfg)))
    print(f"f1={report.f1:.4f} precision={report.precision:.4f} recall={report.recall:.4f} "
          f"deficient_accuracy={_num(report.deficient_accuracy)}")
    print(f"pns_proxy={_num(report.pns_proxy)} mono_violation={_num(report.mono_violation)} ({report.pns_note})")
    return EXIT_OK


def cmd_compare(cfg: RunConfig, force: bool) -> int:
    paths = _prepare_out(cfg, ["compare.csv", "compare_summary.txt", "compare_summary.json", "config.txt"], force)
    result = compare(
        cfg.train_config("baseline"),
        cfg.train_config("miqa-pns"),
        cfg["run.scenario"],
        cfg["run.n_seeds"],
        generator=cfg.generator(),
        base_seed=cfg["seed"],
        workers=cfg["run.workers"],
    )
    lines = result.summary_lines()
    _write_text(paths[0], result.to_csv())
    _write_text(paths[1], "\n".join(lines) + "\n")
    doc = {"format_version": 1, "config": _embedded(cfg), "summary": result.summary()}
    _write_text(paths[2], json.dumps(doc, indent=2, sort_keys=True) + "\n")
    _write_text(paths[3], dump_config(cfg))
    print("\n".join(lines))
    return EXIT_OK


def _num(v) -> str:
    return "n/a" if v is None else f"{v:.4f}"


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "eval": cmd_eval, "compare": cmd_compare}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args.force)
    except NonFiniteLossError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, ConfigError, DatasetFormatError, CheckpointError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``sodasr {gen-data,train-source,adapt,eval,infer}``."""

from __future__ import annotations

import argparse
import csv
import os
import shutil
import sys
import time
from pathlib import Path

import numpy as np

from .backbone import ToySRNet
from .config import FIELD_NAMES, FIELD_TYPES, RunConfig, load_config, parse_value
from .data import (
    SRDataset,
    bicubic_resize,
    evaluate_model,
    generate_dataset,
    psnr_y,
    read_image,
    ssim,
    super_resolve,
    train_source,
    write_image,
)
from .errors import ConfigError, SodaError
from .numerics import load_checkpoint, save_checkpoint
from .selftrain import TargetData, adapt_run, build_network

EXIT_OK, EXIT_FAILURE, EXIT_MISSING_CHECKPOINT = 0, 1, 2
COMMANDS = ("gen-data", "train-source", "adapt", "eval", "infer")


class MissingCheckpointError(SodaError, FileNotFoundError):
    """A required checkpoint file does not exist."""


def _log(msg: str) -> None:
    print(msg, flush=True)


def _require_checkpoint(path) -> Path:
    path = Path(path)
    if not path.is_file():
        raise MissingCheckpointError(f"checkpoint {path} does not exist")
    return path


def _open_dataset(cfg: RunConfig) -> SRDataset:
    root = Path(cfg.data_dir)
    if not (root / "manifest.txt").is_file():
        raise ConfigError(f"no dataset at {root} (manifest.txt missing); run gen-data first")
    return SRDataset(root)


def _subdirs_seeds(seed: int, n: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def cmd_gen_data(cfg: RunConfig, force: bool = False) -> int:
    root = Path(cfg.data_dir)
    if root.exists() and any(root.iterdir()):
        if not force:
            raise ConfigError(f"{root} is not empty; pass --force to overwrite the dataset")
        for name in ("source", "target"):
            if (root / name).is_dir():
                shutil.rmtree(root / name)
        for name in ("manifest.txt", "gen_data_config.txt"):
            (root / name).unlink(missing_ok=True)
    root.mkdir(parents=True, exist_ok=True)
    entries = generate_dataset(root, cfg.layout(), cfg.seed)
    cfg.save(root / "gen_data_config.txt")
    counts: dict[tuple[str, str], int] = {}
    for e in entries:
        counts[(e.domain, e.split)] = counts.get((e.domain, e.split), 0) + 1
    for (domain, split), n in counts.items():
        _log(f"{domain:<8}{split:<7}{n:>5} images")
    _log(f"wrote {len(entries)} LR images and manifest to {root}")
    return EXIT_OK


def cmd_train_source(cfg: RunConfig) -> int:
    ds = _open_dataset(cfg)
    pairs = ds.pairs("source", "train")
    init_rng, data_rng = _subdirs_seeds(cfg.seed, 2)
    net = ToySRNet(init_rng, cfg.channels, cfg.blocks, cfg.scale, dtype=cfg.np_dtype)
    start = time.time()

    def report(it, loss):
        if (it + 1) % 100 == 0 or it + 1 == cfg.source_iterations:
            _log(f"iter {it + 1:>6}  l1 {loss:.5f}  {time.time() - start:7.1f}s")

    train_source(net, pairs, cfg.source_iterations, lr=cfg.source_lr, batch=cfg.source_batch, patch=cfg.patch,
                 rng=data_rng, callback=report, schedule=cfg.source_schedule)
    out = Path(cfg.source_checkpoint)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out, net.state_dict("student."))
    cfg.save(out.parent / "train_source_config.txt")
    _log(f"saved source model to {out}")
    return EXIT_OK


def cmd_adapt(cfg: RunConfig) -> int:
    src = _require_checkpoint(cfg.source_checkpoint)
    hp = cfg.hyperparams()
    ds = _open_dataset(cfg)
    target = TargetData.from_dataset(ds)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg.save(out_dir / "adapt_config.txt")
    meta = {"ablation": "+".join(cfg.ablations()) or "none"}
    meta.update({a: str(getattr(cfg, a)).lower() for a in ("no_wat", "no_ema", "no_ue", "no_reg")})
    start = time.time()

    def report(row):
        loss = "" if row["l_total"] is None else f"  loss {row['l_total']:.5f}"
        _log(f"iter {row['iteration']:>6}{loss}  psnr_y {row['psnr_y_val']:.4f}  ssim {row['ssim_val']:.4f}"
             f"  {time.time() - start:7.1f}s")

    res = adapt_run(src, target, hp, out_dir, seed=cfg.seed, dtype=cfg.np_dtype, metadata=meta, progress=report)
    _log(f"best val psnr_y {res.best_psnr:.4f} at iteration {res.best_iteration}; saved {res.checkpoint_path}")
    return EXIT_OK


def _eval_checkpoint(cfg: RunConfig) -> Path:
    return _require_checkpoint(cfg.checkpoint or Path(cfg.out_dir) / "adapted.ckpt")


def cmd_eval(cfg: RunConfig) -> int:
    ckpt = _eval_checkpoint(cfg)
    net = build_network(load_checkpoint(ckpt), cfg.scale, cfg.np_dtype)
    ds = _open_dataset(cfg)
    rows = []
    for split in ("val", "test"):
        pairs = ds.pairs("target", split)
        if not pairs:
            continue
        bic = [(bicubic_resize(lr, cfg.scale), hr) for lr, hr in pairs]
        rows.append(("bicubic", f"target/{split}", float(np.mean([psnr_y(s, h) for s, h in bic])),
                     float(np.mean([ssim(s, h) for s, h in bic]))))
        p, s = evaluate_model(net, pairs)
        rows.append(("model", f"target/{split}", p, s))
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg.save(out_dir / "eval_config.txt")
    _log(f"checkpoint {ckpt}")
    _log(f"{'model':<9}{'split':<14}{'psnr_y':>9}{'ssim':>9}")
    for name, split, p, s in rows:
        _log(f"{name:<9}{split:<14}{p:>9.4f}{s:>9.4f}")
    with open(out_dir / "eval.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("model", "split", "psnr_y", "ssim"))
        for name, split, p, s in rows:
            w.writerow((name, split, repr(p), repr(s)))
    return EXIT_OK


def cmd_infer(cfg: RunConfig) -> int:
    ckpt = _eval_checkpoint(cfg)
    if not cfg.input or not Path(cfg.input).is_file():
        raise ConfigError(f"input image {cfg.input!r} does not exist")
    if not cfg.output:
        raise ConfigError("an output path is required (--output)")
    net = build_network(load_checkpoint(ckpt), cfg.scale, cfg.np_dtype)
    sr = super_resolve(net, [read_image(cfg.input)])[0]
    out = Path(cfg.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_image(out, sr)
    cfg.save(out.parent / (out.stem + "_config.txt"))
    _log(f"wrote {sr.shape[1]}x{sr.shape[0]} image to {out}")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    # usage errors exit 1 so that exit code 2 always means a missing checkpoint
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_FAILURE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sodasr", description="Source-free domain adaptation for super-resolution.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value config file")
        if name == "gen-data":
            p.add_argument("--force", action="store_true", help="overwrite an existing dataset")
        for key in FIELD_NAMES:
            flag = "--" + key.replace("_", "-")
            if FIELD_TYPES[key] is bool:
                p.add_argument(flag, dest=key, nargs="?", const="true", default=None, metavar="BOOL")
            else:
                p.add_argument(flag, dest=key, default=None, metavar=key.upper())
    return parser


def resolve_config(args: argparse.Namespace, environ=None) -> RunConfig:
    """Defaults, then the config file, then ``SODA_SEED``, then explicit flags."""
    environ = os.environ if environ is None else environ
    cfg = load_config(args.config) if args.config else RunConfig()
    changes = {}
    if environ.get("SODA_SEED", "").strip():
        try:
            changes["seed"] = int(environ["SODA_SEED"])
        except ValueError:
            raise ConfigError(f"SODA_SEED must be an integer, got {environ['SODA_SEED']!r}") from None
    for key in FIELD_NAMES:
        raw = getattr(args, key)
        if raw is not None:
            try:
                changes[key] = parse_value(key, raw)
            except ValueError as exc:
                raise ConfigError(f"--{key.replace('_', '-')}: {exc}") from None
    return cfg.replace(**changes).validate()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command == "gen-data":
            return cmd_gen_data(cfg, force=args.force)
        handler = {"train-source": cmd_train_source, "adapt": cmd_adapt, "eval": cmd_eval, "infer": cmd_infer}
        return handler[args.command](cfg)
    except MissingCheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_CHECKPOINT
    except (SodaError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())

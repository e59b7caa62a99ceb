"""Command-line entry point: the full workflow as subcommands.

    tadm gen-data --out data --subjects 100 --seed 1
    tadm pretrain --data data/manifest.csv --out bae.ckpt --set pretrain_steps=600
    tadm train    --data data/manifest.csv --bae bae.ckpt --out model.ckpt --log log.csv
    tadm infer    --input scan.pgm --gap 24 --age 780 --status 2 --ckpt model.ckpt --out pred.pgm
    tadm eval     --data data/manifest.csv --ckpt model.ckpt --split test --out report.csv
    tadm ablate   --data data/manifest.csv --out ablation/

Exit codes: 0 success, 1 runtime error (single-line diagnostic on stderr),
2 usage error.  Every subcommand honors --seed; reruns with identical
inputs produce byte-identical outputs.  Passing --figs DIR additionally
renders PNG figures for the command's outputs.
"""

from __future__ import annotations

import argparse
import os
import sys

from .errors import ConfigError, TadmError
from .numerics import Rng, derive_seed
from .phantom import gen_dataset, load_dataset, read_pgm, write_pgm
from .pipeline import (apply_overrides, infer, load_bundle, parse_config,
                       pretrain_bae, sidecar_path, train)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="config file (key = value lines)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (repeatable)")
    p.add_argument("--seed", type=int, help="override the config seed")


def _load_cfg(args) -> "TrainConfig":
    cfg = parse_config(args.config, args.set)
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.validate()
    return cfg


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tadm",
                                 description="Longitudinal phantom progression with a "
                                             "temporally-aware diffusion model")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic phantom dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--subjects", type=int, default=100)
    p.add_argument("--scans", type=int, default=3)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--masks", action="store_true", help="also write region masks")

    p = sub.add_parser("pretrain", help="train the age regressor (encoder + head)")
    p.add_argument("--data", required=True, help="manifest.csv path")
    p.add_argument("--out", required=True, help="checkpoint to write")
    _add_config_flags(p)

    p = sub.add_parser("train", help="train the diffusion denoiser")
    p.add_argument("--data", required=True)
    p.add_argument("--bae", required=True, help="pretrained BAE checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="training log CSV (default <out>.log.csv)")
    p.add_argument("--figs", help="directory for rendered figures")
    _add_config_flags(p)

    p = sub.add_parser("infer", help="predict a follow-up scan")
    p.add_argument("--input", required=True, help="baseline PGM")
    p.add_argument("--gap", type=float, required=True, help="age gap in months")
    p.add_argument("--age", type=float, required=True, help="age at baseline, months")
    p.add_argument("--status", type=int, required=True, choices=(0, 1, 2))
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True, help="predicted PGM to write")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--figs", help="directory for rendered figures")

    p = sub.add_parser("eval", help="metric report over a dataset split")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--out", required=True, help="report CSV")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--baseline", action="store_true",
                   help="also write the copy-baseline report next to --out")
    p.add_argument("--figs", help="directory for rendered figures")

    p = sub.add_parser("ablate", help="train and compare the four variants")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seeds", default="0,1,2", help="comma-separated training seeds")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--figs", help="directory for rendered figures")
    _add_config_flags(p)
    return ap


def _cmd_gen_data(args) -> int:
    manifest = gen_dataset(args.subjects, args.scans, args.size, args.seed,
                           args.out, emit_masks=args.masks)
    print(manifest)
    return 0


def _cmd_pretrain(args) -> int:
    cfg = _load_cfg(args)
    ds = load_dataset(args.data)
    _, losses = pretrain_bae(ds, cfg, args.out)
    print(f"{args.out}: {cfg.pretrain_steps} steps, "
          f"loss {losses[0]:.4f} -> {losses[-1]:.4f}")
    return 0


def _cmd_train(args) -> int:
    cfg = _load_cfg(args)
    ds = load_dataset(args.data)
    log = args.log if args.log else args.out + ".log.csv"
    _, history = train(ds, cfg, args.bae, args.out, log)
    print(f"{args.out}: {cfg.steps} steps, noise MSE "
          f"{history[0][1]:.4f} -> {history[-1][1]:.4f}")
    if args.figs:
        from .reporting import loss_figure
        os.makedirs(args.figs, exist_ok=True)
        loss_figure(log, os.path.join(args.figs, "loss.png"))
    return 0


def _cmd_infer(args) -> int:
    cfg = parse_config(sidecar_path(args.ckpt))
    bundle = load_bundle(args.ckpt, cfg)
    if bundle.denoiser is None:
        raise ConfigError(f"{args.ckpt} has no denoiser (BAE-only checkpoint?)")
    image = read_pgm(args.input)
    pred = infer(bundle, cfg.schedule(), image, args.gap, args.age, args.status,
                 Rng(derive_seed(args.seed, "infer")), cond_mode=cfg.cond_mode)
    write_pgm(args.out, pred)
    print(args.out)
    if args.figs:
        from .reporting import progression_figure
        os.makedirs(args.figs, exist_ok=True)
        progression_figure(image, None, pred,
                           os.path.join(args.figs, "progression.png"))
    return 0


def _cmd_eval(args) -> int:
    from .evaluation import evaluate, evaluate_copy_baseline

    cfg = parse_config(sidecar_path(args.ckpt))
    bundle = load_bundle(args.ckpt, cfg)
    ds = load_dataset(args.data)
    report = evaluate(bundle, cfg.schedule(), ds, args.split, seed=args.seed,
                      eval_batch=cfg.eval_batch, cond_mode=cfg.cond_mode,
                      out_csv=args.out)
    agg = report.aggregate
    print(f"{args.out}: {len(report.rows)} pairs, ssim {agg['ssim']:.3f}, "
          f"psnr {agg['psnr_db']:.2f} dB, total-brain err {agg['total_brain_err']:.2f}%")
    if args.baseline:
        root, ext = os.path.splitext(args.out)
        evaluate_copy_baseline(ds, args.split, out_csv=root + ".baseline" + ext)
    if args.figs:
        from .reporting import eval_figure
        os.makedirs(args.figs, exist_ok=True)
        eval_figure(report, os.path.join(args.figs, "eval.png"))
    return 0


def _cmd_ablate(args) -> int:
    from .evaluation import ablate

    cfg = _load_cfg(args)
    ds = load_dataset(args.data)
    try:
        seeds = tuple(int(s) for s in args.seeds.split(",") if s.strip() != "")
    except ValueError as e:
        raise ConfigError(f"bad --seeds value {args.seeds!r}") from e
    if not seeds:
        raise ConfigError("--seeds must name at least one seed")
    table = ablate(ds, cfg, args.out, seeds=seeds, split=args.split)
    for variant, row in table.items():
        print(f"{variant}: total-brain err {row['total_brain_err']:.2f}%")
    if args.figs:
        from .reporting import ablation_figure
        os.makedirs(args.figs, exist_ok=True)
        ablation_figure(table, os.path.join(args.figs, "ablation.png"))
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "pretrain": _cmd_pretrain,
    "train": _cmd_train,
    "infer": _cmd_infer,
    "eval": _cmd_eval,
    "ablate": _cmd_ablate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.cmd](args)
    except (TadmError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

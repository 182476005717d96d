"""Command-line entry point: ``srlab {train,upscale,eval,bench,demo-corpus}``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import interp
from .bench import ALL_METHODS, BenchConfig, read_config, run_benchmark, upscale_with_mlp, write_train_log
from .dataset import CorpusSpec, build_split, pool_corpus, read_manifest, save_cache, scan_directory
from .image_core import load_image, save_image
from .metrics import SsimParams, evaluate
from .mlp import TrainConfig, init_model, load_model, save_model, train

log = logging.getLogger("srlab")


def _entries(source):
    source = Path(source)
    return scan_directory(source) if source.is_dir() else read_manifest(source)


def cmd_train(args):
    entries = _entries(args.corpus)
    if args.category:
        entries = [e for e in entries if e[0] == args.category]
    spec = CorpusSpec(entries, mode=args.mode)
    pooled = pool_corpus(spec, crop_to_even=args.crop_even, max_samples=args.sample_budget, rng_seed=args.seed)
    if args.cache:
        save_cache(pooled, args.cache, args.seed)
    split = build_split(pooled, args.seed)
    cfg = TrainConfig(args.lr, args.epochs, args.patience, args.batch_size, args.seed)

    def progress(epoch, tr, val):
        log.info("epoch %d  train %.6g  validation %.6g", epoch, tr, val)

    model, report = train(init_model(args.hidden, args.seed), split, cfg, progress=progress)
    save_model(model, args.output)
    if args.log:
        write_train_log(args.log, report)
    print(f"best epoch {report.best_epoch} validation mse {report.best_validation_mse:.6g} ({report.stop_reason})")
    return 0


def cmd_upscale(args):
    lr = load_image(args.input)
    if args.method == "mlp":
        if not args.model:
            raise SystemExit("--model is required with --method mlp")
        out = upscale_with_mlp(load_model(args.model), lr)
    else:
        out = interp.upscale(lr, args.method, bicubic_a=args.bicubic_a,
                             icbi_iters=args.icbi_iters, icbi_step=args.icbi_step)
    save_image(out, args.output)
    return 0


def cmd_eval(args):
    ref, cand = load_image(args.reference), load_image(args.candidate)
    params = SsimParams(args.ssim_window, args.ssim_sigma, args.ssim_k1, args.ssim_k2)
    m, p, s = evaluate(ref, cand, params, quantized=args.quantize_metrics)
    print(f"MSE {m:.4f}\nPSNR {p:.4f}\nSSIM {s:.4f}")
    return 0


_BENCH_FLAGS = {f.name for f in fields(BenchConfig)}


def cmd_bench(args):
    overrides = {k: getattr(args, k) for k in _BENCH_FLAGS if getattr(args, k, None) is not None}
    cfg = read_config(args.config, **overrides) if args.config else BenchConfig(**overrides)
    rows = run_benchmark(cfg)
    print((cfg.output_dir / "report.md").read_text())
    log.info("%d report rows written to %s", len(rows), cfg.output_dir)
    return 0


def cmd_demo_corpus(args):
    from .corpus import build_demo_corpus

    cats = args.categories.split(",") if args.categories else None
    train_entries, test_entries = build_demo_corpus(
        args.output, seed=args.seed, categories=cats, per_category=args.per_category,
        n_test=args.n_test, tile=args.tile,
    )
    print(f"{len(train_entries)} training and {len(test_entries)} test images under {args.output}")
    return 0


def _add_interp_flags(p):
    p.add_argument("--bicubic-a", type=float, default=-0.5)
    p.add_argument("--icbi-iters", type=int, default=10)
    p.add_argument("--icbi-step", type=float, default=0.1)


def _add_ssim_flags(p, defaults=True):
    d = SsimParams()
    p.add_argument("--ssim-window", type=int, default=d.window if defaults else None)
    p.add_argument("--ssim-sigma", type=float, default=d.sigma if defaults else None)
    p.add_argument("--ssim-k1", type=float, default=d.k1 if defaults else None)
    p.add_argument("--ssim-k2", type=float, default=d.k2 if defaults else None)


def build_parser():
    parser = argparse.ArgumentParser(prog="srlab", description="2x super-resolution lab")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a manifest or directory")
    p.add_argument("corpus", help="manifest (category<TAB>path) or image directory")
    p.add_argument("-o", "--output", required=True, help="model file to write")
    p.add_argument("--mode", choices=("general", "specific"), default="general")
    p.add_argument("--category", help="restrict to one category")
    p.add_argument("--hidden", type=int, default=20)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=1)
    p.add_argument("--sample-budget", type=int)
    p.add_argument("--crop-even", action="store_true")
    p.add_argument("--cache", help="also write the pooled samples to this dataset cache")
    p.add_argument("--log", help="write the per-epoch training curve as CSV")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("upscale", help="2x upscale one image")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--method", choices=interp.METHODS, default="bicubic")
    p.add_argument("--model", help="model file for --method mlp")
    _add_interp_flags(p)
    p.add_argument("--seed", type=int, default=0, help="accepted for uniformity; upscaling is deterministic")
    p.set_defaults(func=cmd_upscale)

    p = sub.add_parser("eval", help="MSE / PSNR / SSIM of a candidate against a reference")
    p.add_argument("reference")
    p.add_argument("candidate")
    p.add_argument("--quantize-metrics", action="store_true")
    _add_ssim_flags(p)
    p.add_argument("--seed", type=int, default=0, help="accepted for uniformity; metrics are deterministic")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="run the full benchmark")
    p.add_argument("--config", help="key = value config file; flags override it")
    p.add_argument("--train-manifest", type=Path)
    p.add_argument("--test-manifest", type=Path)
    p.add_argument("--output-dir", type=Path)
    p.add_argument("--methods", help=f"comma-separated subset of {','.join(ALL_METHODS)}")
    p.add_argument("--seed", type=int)
    p.add_argument("--hidden-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--sample-budget", type=int)
    p.add_argument("--bicubic-a", type=float)
    p.add_argument("--icbi-iters", type=int)
    p.add_argument("--icbi-step", type=float)
    p.add_argument("--diff-gain", type=float)
    p.add_argument("--quantize-metrics", action="store_const", const=True)
    p.add_argument("--crop-even", action="store_const", const=True)
    _add_ssim_flags(p, defaults=False)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("demo-corpus", help="write a seeded corpus cut from scikit-image sample photos")
    p.add_argument("output", type=Path)
    p.add_argument("--categories", help="comma-separated category names")
    p.add_argument("--per-category", type=int, default=6)
    p.add_argument("--n-test", type=int, default=1)
    p.add_argument("--tile", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_demo_corpus)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

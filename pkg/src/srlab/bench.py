"""Benchmark harness: train MLP_gen / MLP_sp, run every upscaler, write reports."""

from __future__ import annotations

import csv
import hashlib
import logging
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import interp
from .dataset import CorpusSpec, build_corpus, neighbourhoods, read_manifest
from .image_core import check_rgb, crop_even, downsample_2x, load_image, quantize, save_image
from .metrics import MetricRow, SsimParams, evaluate, psnr
from .mlp import MlpModel, TrainConfig, forward, init_model, save_model, train

log = logging.getLogger(__name__)

CLASSICAL = ("nearest", "bilinear", "bicubic", "fcbi", "icbi")
LEARNED = ("mlp_gen", "mlp_sp")
ALL_METHODS = CLASSICAL + LEARNED

LABELS = {
    "nearest": "N. Neighbour",
    "bilinear": "Bilinear",
    "bicubic": "Bicubic",
    "fcbi": "FCBI-style",
    "icbi": "ICBI-style",
    "mlp_gen": "MLP_gen",
    "mlp_sp": "MLP_sp",
}

CSV_FIELDS = ["image", "category", "method", "mse", "psnr", "ssim", "mse_exact", "psnr_exact", "ssim_exact"]


class LeakageError(Exception):
    """A test image also appears in a training manifest."""


def hr_positions(width, height):
    """HR (row, col) index arrays for the four model outputs of every LR pixel.

    Output k of LR pixel (x, y) lands at (2y + k // 2, 2x + k % 2).
    """
    ys, xs = np.divmod(np.arange(width * height), width)
    rows = np.stack([2 * ys, 2 * ys, 2 * ys + 1, 2 * ys + 1], axis=1)
    cols = np.stack([2 * xs, 2 * xs + 1, 2 * xs, 2 * xs + 1], axis=1)
    return rows, cols


def upscale_with_mlp(model: MlpModel, lr):
    """Slide the network over every LR pixel of every channel and tile the 2x2 outputs."""
    lr = check_rgb(lr)
    if model.input_size != 9 or model.output_size != 4:
        raise ValueError(f"model must map 9 inputs to 4 outputs, got {model.input_size}->{model.output_size}")
    h, w, _ = lr.shape
    rows, cols = hr_positions(w, h)
    out = np.empty((2 * h, 2 * w, 3))
    for c in range(3):
        pred = forward(model, neighbourhoods(lr[:, :, c]))
        out[rows, cols, c] = pred
    return out


def difference_image(reference, candidate, gain=4.0):
    """Inverted, gain-scaled absolute residual: white where the images agree."""
    if gain <= 0:
        raise ValueError("gain must be > 0")
    reference, candidate = check_rgb(reference), check_rgb(candidate)
    if reference.shape != candidate.shape:
        raise ValueError(f"shape mismatch: {reference.shape} vs {candidate.shape}")
    return 1.0 - np.clip(gain * np.abs(reference - candidate), 0.0, 1.0)


def content_hash(img) -> str:
    return hashlib.sha256(quantize(img).astype(np.uint8).tobytes()).hexdigest()


@dataclass
class BenchConfig:
    train_manifest: Path | None = None
    test_manifest: Path | None = None
    output_dir: Path = Path("bench_out")
    methods: tuple = ALL_METHODS
    seed: int = 0
    hidden_size: int = 20
    learning_rate: float = 0.05
    max_epochs: int = 200
    patience: int = 10
    batch_size: int = 1
    sample_budget: int | None = None
    bicubic_a: float = -0.5
    icbi_iters: int = 10
    icbi_step: float = 0.1
    diff_gain: float = 4.0
    quantize_metrics: bool = False
    crop_even: bool = False
    ssim_window: int = 11
    ssim_sigma: float = 1.5
    ssim_k1: float = 0.01
    ssim_k2: float = 0.03

    def __post_init__(self):
        if isinstance(self.methods, str):
            self.methods = tuple(m.strip() for m in self.methods.split(",") if m.strip())
        unknown = set(self.methods) - set(ALL_METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")
        self.output_dir = Path(self.output_dir)

    @property
    def train_config(self) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.max_epochs, self.patience, self.batch_size, self.seed)

    @property
    def ssim_params(self) -> SsimParams:
        return SsimParams(self.ssim_window, self.ssim_sigma, self.ssim_k1, self.ssim_k2)


def _coerce(value: str, typ):
    typ = str(typ)
    if "bool" in typ:
        return value.strip().lower() in ("1", "true", "yes", "on")
    if "Path" in typ:
        return Path(value.strip()) if value.strip() else None
    if "int" in typ:
        return None if value.strip().lower() in ("", "none") else int(value)
    if "float" in typ:
        return float(value)
    return value.strip()


def read_config(path, **overrides) -> BenchConfig:
    """Read ``key = value`` lines (``#`` comments allowed); ``overrides`` win."""
    path = Path(path)
    known = {f.name: f.type for f in fields(BenchConfig)}
    values = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise ValueError(f"{path}:{lineno}: unknown option {key!r}")
        values[key] = _coerce(value, known[key])
        if key.endswith("manifest") and values[key] is not None and not values[key].is_absolute():
            values[key] = path.parent / values[key]
    values.update({k: v for k, v in overrides.items() if v is not None})
    return BenchConfig(**values)


def check_leakage(train_entries, test_entries) -> None:
    train_paths = {Path(p).resolve() for _, p in train_entries}
    for _, p in test_entries:
        if Path(p).resolve() in train_paths:
            raise LeakageError(f"test image {p} is listed in the training manifest")
    train_hashes = {content_hash(load_image(p)): p for _, p in train_entries}
    for _, p in test_entries:
        h = content_hash(load_image(p))
        if h in train_hashes:
            raise LeakageError(f"test image {p} has the same content as training image {train_hashes[h]}")


def train_models(cfg: BenchConfig, train_entries):
    """Train MLP_gen on the pooled corpus and one MLP_sp per category.

    Returns ``{name: (model, report)}`` with names ``gen`` and ``sp_<category>``.
    """
    wanted = set(cfg.methods)
    jobs = []
    if "mlp_gen" in wanted:
        jobs.append(("gen", CorpusSpec(train_entries, mode="general")))
    if "mlp_sp" in wanted:
        for category in sorted({c for c, _ in train_entries}):
            entries = [(c, p) for c, p in train_entries if c == category]
            jobs.append((f"sp_{category}", CorpusSpec(entries, mode="specific")))

    models = {}
    for name, spec in jobs:
        split = build_corpus(spec, cfg.seed, crop_to_even=cfg.crop_even, max_samples=cfg.sample_budget)
        model = init_model(cfg.hidden_size, cfg.seed)
        best, report = train(model, split, cfg.train_config)
        log.info(
            "%s: %d train samples, best epoch %d, val mse %.6g (%s)",
            name, len(split.train), report.best_epoch, report.best_validation_mse, report.stop_reason,
        )
        models[name] = (best, report)
    return models


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else f"{x:.2f}"


def write_reports(rows, out_dir: Path, ssim_label="SSIM (RGB mean)") -> None:
    out_dir = Path(out_dir)
    with open(out_dir / "report.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for r in rows:
            writer.writerow([
                r.image, r.category, r.method, _fmt(r.mse), _fmt(r.psnr), _fmt(r.ssim),
                repr(r.mse), repr(r.psnr), repr(r.ssim),
            ])

    lines = []
    for image in dict.fromkeys(r.image for r in rows):
        image_rows = [r for r in rows if r.image == image]
        lines.append(f"### {image} ({image_rows[0].category})")
        lines.append("")
        lines.append(f"| Method | MSE | PSNR | {ssim_label} |")
        lines.append("|---|---:|---:|---:|")
        for r in image_rows:
            lines.append(f"| {LABELS[r.method]} | {_fmt(r.mse)} | {_fmt(r.psnr)} | {_fmt(r.ssim)} |")
        lines.append("")
    (out_dir / "report.md").write_text("\n".join(lines))


def read_report(path):
    with open(path, newline="") as fh:
        return [
            MetricRow(r["image"], r["method"], float(r["mse_exact"]), float(r["psnr_exact"]),
                      float(r["ssim_exact"]), r["category"])
            for r in csv.DictReader(fh)
        ]


def run_benchmark(cfg: BenchConfig):
    """Train the learned models, upscale every test image with every method, write reports.

    Returns the list of :class:`srlab.metrics.MetricRow` in report order.
    """
    if cfg.test_manifest is None:
        raise ValueError("a test manifest is required")
    test_entries = read_manifest(cfg.test_manifest)
    train_entries = read_manifest(cfg.train_manifest) if cfg.train_manifest else []
    if any(m in LEARNED for m in cfg.methods) and not train_entries:
        raise ValueError("learned methods need a training manifest")
    if train_entries:
        check_leakage(train_entries, test_entries)

    out = cfg.output_dir
    (out / "models").mkdir(parents=True, exist_ok=True)
    models = train_models(cfg, train_entries) if train_entries else {}
    for name, (model, report) in models.items():
        save_model(model, out / "models" / f"mlp_{name}.mlp")
        write_train_log(out / "models" / f"mlp_{name}.csv", report)

    rows = []
    params = cfg.ssim_params
    for category, path in test_entries:
        hr = load_image(path)
        if cfg.crop_even:
            hr = crop_even(hr)
        lr = downsample_2x(hr)
        name = Path(path).stem
        (out / "images" / name).mkdir(parents=True, exist_ok=True)
        (out / "diffs" / name).mkdir(parents=True, exist_ok=True)
        for method in cfg.methods:
            if method == "mlp_gen":
                up = upscale_with_mlp(models["gen"][0], lr)
            elif method == "mlp_sp":
                key = f"sp_{category}"
                if key not in models:
                    log.warning("no MLP_sp trained for category %r; skipping %s", category, path)
                    continue
                up = upscale_with_mlp(models[key][0], lr)
            else:
                up = interp.upscale(lr, method, bicubic_a=cfg.bicubic_a,
                                    icbi_iters=cfg.icbi_iters, icbi_step=cfg.icbi_step)
            m, p, s = evaluate(hr, up, params, quantized=cfg.quantize_metrics)
            rows.append(MetricRow(name, method, m, p, s, category))
            save_image(up, out / "images" / name / f"{method}.png")
            save_image(difference_image(hr, up, cfg.diff_gain), out / "diffs" / name / f"{method}.png")
    write_reports(rows, out)
    return rows


def write_train_log(path, report) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "train_mse", "validation_mse"])
        for i, (t, v) in enumerate(zip(report.train_mse, report.validation_mse)):
            writer.writerow([i, repr(t), repr(v)])
        writer.writerow([])
        writer.writerow(["best_epoch", report.best_epoch, report.stop_reason])


def verify_report(out_dir, test_manifest, params: SsimParams = SsimParams(), crop_to_even=False):
    """Recompute metrics from the saved images and compare with report.csv.

    Returns a list of ``(row, recomputed_mse, recomputed_psnr, recomputed_ssim)``.
    """
    out_dir = Path(out_dir)
    refs = {}
    for _, path in read_manifest(test_manifest):
        hr = load_image(path)
        if crop_to_even:
            hr = crop_even(hr)
        refs[Path(path).stem] = hr
    checked = []
    for row in read_report(out_dir / "report.csv"):
        up = load_image(out_dir / "images" / row.image / f"{row.method}.png")
        m, p, s = evaluate(refs[row.image], up, params)
        checked.append((row, m, p, s))
    return checked


def psnr_consistent(row, tol=1e-9) -> bool:
    if row.mse == 0:
        return math.isinf(row.psnr)
    return abs(row.psnr - psnr(row.mse)) < tol


"""Command implementations: training, evaluation, inference, benchmarking.

Each report-producing path writes its delimited CSV output and renders a
matplotlib figure of the same content beside it.
"""

import csv
import time
from pathlib import Path

import numpy as np

from . import figures
from .backbone import (
    FocalStack,
    decode,
    encode,
    forward,
    forward_features,
    init_model,
    trainable_params,
)
from .blocks import named_tensors
from .config import RunConfig
from .data import load_checkpoint, load_dataset, load_sample, save_checkpoint, _save_png
from .errors import ConfigError, ContractError
from .inter_modal import inter_modal_fuse
from .losses import total_loss
from .metrics import build_report, write_metrics_csv, write_pr_csv
from .optim import Adam
from .tensor import Tensor, backward, concat, conv2d


def _require_out(out, cfg) -> Path:
    target = out or cfg.out
    if not target:
        raise ConfigError("no output directory given (flag --out or config 'out')")
    path = Path(target)
    path.mkdir(parents=True, exist_ok=True)
    return path


def train_loop(cfg: RunConfig, dataset=None, out=None):
    """Optimize the trainable parameters; returns a small summary dict."""
    dataset_dir = dataset or cfg.dataset
    if not dataset_dir:
        raise ConfigError("no dataset directory given (flag --dataset or config 'dataset')")
    out_dir = _require_out(out, cfg)
    samples = load_dataset(dataset_dir)
    if not samples:
        raise ContractError(f"dataset {dataset_dir} contains no samples")
    if cfg.mode == "weak":
        unlabeled = [s.sample_id for s in samples if s.scribble is None]
        if unlabeled:
            raise ContractError(
                f"weak supervision requires scribbles; missing for {unlabeled[:5]}"
            )

    model = init_model(cfg)
    params = trainable_params(model)
    opt = Adam(params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)
    loss_kwargs = cfg.loss_kwargs()

    rows = []
    final_loss = float("nan")
    for step in range(cfg.steps):
        sample = samples[step % len(samples)]
        t0 = time.perf_counter()
        pred = forward(sample, model)
        loss = total_loss(pred, sample, cfg.mode, **loss_kwargs)
        backward(loss, params=params.values())
        opt.step()
        opt.zero_grad()
        wall_ms = (time.perf_counter() - t0) * 1000.0
        final_loss = loss.item()
        rows.append((step, final_loss, wall_ms))
        print(f"step {step:05d} loss {final_loss:.6f} wall-ms {wall_ms:.1f}")
        if cfg.checkpoint_interval and (step + 1) % cfg.checkpoint_interval == 0:
            save_checkpoint(model, out_dir / f"checkpoint_{step + 1:06d}.lfsb",
                            step=step + 1, seed=cfg.seed)

    ckpt_path = out_dir / "checkpoint.lfsb"
    save_checkpoint(model, ckpt_path, step=cfg.steps, seed=cfg.seed)

    with open(out_dir / "train_log.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "loss", "wall_ms"])
        for step, loss_val, wall_ms in rows:
            writer.writerow([step, f"{loss_val:.9f}", f"{wall_ms:.2f}"])
    figures.render_loss_curve([r[0] for r in rows], [r[1] for r in rows],
                              out_dir / "loss_curve.png")
    return {"checkpoint": ckpt_path, "final_loss": final_loss, "steps": cfg.steps,
            "model": model}


def evaluate_run(cfg: RunConfig, ckpt, dataset=None, out=None):
    """Run the checkpointed model over a dataset; write metric CSVs/figures."""
    dataset_dir = dataset or cfg.dataset
    if not dataset_dir:
        raise ConfigError("no dataset directory given (flag --dataset or config 'dataset')")
    out_dir = _require_out(out, cfg)
    model, _, _ = load_checkpoint(ckpt, cfg)
    samples = load_dataset(dataset_dir)
    entries = []
    for stack in samples:
        pred = forward(stack, model)
        entries.append((stack.sample_id, pred.data, stack.gt))
    report = build_report(entries)
    write_metrics_csv(report, out_dir / "metrics.csv")
    write_pr_csv(report, out_dir / "pr_curve.csv")
    figures.render_pr_curve(report.curve, out_dir / "pr_curve.png")
    figures.render_sample_metrics(report, out_dir / "metrics.png")
    mean_mae = "n/a" if report.mean_mae is None else f"{report.mean_mae:.4f}"
    mean_fb = "n/a" if report.mean_f_beta is None else f"{report.mean_f_beta:.4f}"
    print(f"samples {len(report.samples)} mean-mae {mean_mae} mean-f-beta {mean_fb}")
    return report


def _feature_png(feat: np.ndarray, path: Path) -> None:
    flat = feat.mean(axis=0)
    lo, hi = flat.min(), flat.max()
    norm = (flat - lo) / (hi - lo) if hi > lo else np.zeros_like(flat)
    _save_png(norm, path)


def infer_run(ckpt, sample_dir, out, dump_features: bool = False, cfg=None):
    """Predict one sample; write the saliency PNG (+ staged feature dumps)."""
    model, _, _ = load_checkpoint(ckpt, cfg)
    stack = load_sample(sample_dir)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if dump_features:
        pred, f_0, f_slices, f_fused = forward_features(stack, model)
        _feature_png(f_0.data, out_dir / "f0.png")
        _feature_png(f_slices.data, out_dir / "fslices.png")
        _feature_png(f_fused.data, out_dir / "ffused.png")
    else:
        pred = forward(stack, model)
    _save_png(pred.data, out_dir / "saliency.png")
    return out_dir / "saliency.png"


def _random_stack(cfg: RunConfig, k_slices: int, rng) -> FocalStack:
    size = cfg.image_size
    return FocalStack(
        all_focus=rng.uniform(0.0, 1.0, (3, size, size)),
        slices=[rng.uniform(0.0, 1.0, (3, size, size)) for _ in range(k_slices)],
        sample_id="bench",
    )


def _forward_concat(stack: FocalStack, model, fusion_conv) -> Tensor:
    """Baseline: slice fusion replaced by channel concat + 1x1 conv."""
    g_max = len(model.adapters) - 1
    f_0 = encode(stack.all_focus, model.adapters[0], model.encoder)
    feats = [
        encode(img, model.adapters[min(k + 1, g_max)], model.encoder)
        for k, img in enumerate(stack.slices)
    ]
    f_slices = conv2d(concat(feats, axis=0), fusion_conv.kernel, fusion_conv.bias)
    f_fused = inter_modal_fuse(f_0, f_slices, model.inter_modal)
    return decode(f_fused, model.decoder)


def _time_forward(fn, warmups: int, repeats: int):
    for _ in range(warmups):
        fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append((time.perf_counter() - t0) * 1000.0)
    return float(np.mean(times)), float(np.std(times))


def bench_run(cfg: RunConfig, out=None, k_slices: int = 3, warmups: int = 3,
              repeats: int = 20):
    """Cost report for the scan-based fusion vs the concatenation baseline."""
    from .blocks import init_conv

    out_dir = _require_out(out, cfg) if (out or cfg.out) else None
    model = init_model(cfg)
    rng = np.random.default_rng(cfg.seed)
    fusion_conv = init_conv(rng, cfg.channels, k_slices * cfg.channels, 1)
    stack = _random_stack(cfg, k_slices, rng)

    all_trainable = trainable_params(model)
    mamba_count = sum(t.size for t in all_trainable.values())
    inter_slice_count = sum(
        t.size for name, t in all_trainable.items() if name.startswith("inter_slice.")
    )
    concat_count = mamba_count - inter_slice_count + sum(
        t.size for _, t in named_tensors(fusion_conv)
    )

    rows = []
    for variant, count, fn in (
        ("mamba", mamba_count, lambda: forward(stack, model)),
        ("concat", concat_count, lambda: _forward_concat(stack, model, fusion_conv)),
    ):
        mean_ms, sd_ms = _time_forward(fn, warmups, repeats)
        rows.append({"variant": variant, "params": count,
                     "forward_ms_mean": mean_ms, "forward_ms_sd": sd_ms})

    print(f"{'variant':<10}{'params':>12}{'forward ms':>16}")
    for r in rows:
        print(f"{r['variant']:<10}{r['params']:>12}"
              f"{r['forward_ms_mean']:>11.1f} +/- {r['forward_ms_sd']:.1f}")

    if out_dir is not None:
        with open(out_dir / "cost_report.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["variant", "params", "forward_ms_mean", "forward_ms_sd"])
            for r in rows:
                writer.writerow([r["variant"], r["params"],
                                 f"{r['forward_ms_mean']:.3f}", f"{r['forward_ms_sd']:.3f}"])
        figures.render_cost_report(rows, out_dir / "cost_report.png")
    return rows

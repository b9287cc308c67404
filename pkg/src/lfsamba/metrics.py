"""Saliency evaluation: MAE, adaptive-threshold F-beta, PR curves, and
dataset-level reporting with CSV output.

Samples whose ground truth has no positive pixel are excluded from PR/F-beta
(recall is undefined there) but still count toward MAE.  Empty predictions
get precision 1 by convention.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ShapeError

N_THRESHOLDS = 256


def mae(s: np.ndarray, gt: np.ndarray) -> float:
    s = np.asarray(s, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if s.shape != gt.shape:
        raise ShapeError(f"mae: prediction {s.shape} vs gt {gt.shape}")
    return float(np.abs(s - gt).mean())


def pr_curve(s: np.ndarray, gt: np.ndarray, n_thresholds: int = N_THRESHOLDS):
    """(precision, recall) at thresholds i/255; None marks an empty-gt sample."""
    s = np.asarray(s, dtype=float)
    gt = np.asarray(gt) > 0.5
    if s.shape != gt.shape:
        raise ShapeError(f"pr_curve: prediction {s.shape} vs gt {gt.shape}")
    npos = int(gt.sum())
    if npos == 0:
        return None
    out = np.zeros((n_thresholds, 2))
    for i in range(n_thresholds):
        t = i / 255.0
        pred = s >= t
        tp = int((pred & gt).sum())
        npred = int(pred.sum())
        out[i, 0] = tp / npred if npred else 1.0
        out[i, 1] = tp / npos
    return out


def f_beta(s: np.ndarray, gt: np.ndarray, beta2: float = 0.3):
    """F-beta at the adaptive threshold min(1, 2*mean(S)); None on empty gt."""
    s = np.asarray(s, dtype=float)
    gt = np.asarray(gt) > 0.5
    if s.shape != gt.shape:
        raise ShapeError(f"f_beta: prediction {s.shape} vs gt {gt.shape}")
    npos = int(gt.sum())
    if npos == 0:
        return None
    t = min(1.0, 2.0 * float(s.mean()))
    pred = s > t  # strict: an all-zero map predicts nothing at t = 0
    tp = int((pred & gt).sum())
    npred = int(pred.sum())
    precision = tp / npred if npred else 1.0
    recall = tp / npos
    if precision + recall == 0.0:
        return 0.0
    return (1.0 + beta2) * precision * recall / (beta2 * precision + recall)


@dataclass
class SampleMetrics:
    sample_id: str
    mae: float
    f_beta: float | None  # None when gt is empty


@dataclass
class EvalReport:
    samples: list = field(default_factory=list)
    missing: list = field(default_factory=list)  # ids lacking a counterpart
    curve: np.ndarray | None = None  # [n_thresholds, 2] mean (precision, recall)

    @property
    def mean_mae(self):
        vals = [s.mae for s in self.samples]
        return float(np.mean(vals)) if vals else None

    @property
    def mean_f_beta(self):
        vals = [s.f_beta for s in self.samples if s.f_beta is not None]
        return float(np.mean(vals)) if vals else None


def build_report(entries) -> EvalReport:
    """Aggregate (id, prediction, gt) triples into an EvalReport."""
    report = EvalReport()
    curves = []
    for sample_id, s, gt in entries:
        report.samples.append(
            SampleMetrics(sample_id=sample_id, mae=mae(s, gt), f_beta=f_beta(s, gt))
        )
        curve = pr_curve(s, gt)
        if curve is not None:
            curves.append(curve)
    if curves:
        report.curve = np.mean(np.stack(curves), axis=0)
    return report


def _load_gray(path: Path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as img:
        return np.asarray(img.convert("L"), dtype=float) / 255.0


def evaluate_dataset(pred_dir, gt_dir) -> EvalReport:
    """Compare prediction PNGs against ground-truth PNGs by file stem."""
    pred_dir = Path(pred_dir)
    gt_dir = Path(gt_dir)
    preds = {p.stem: p for p in sorted(pred_dir.glob("*.png"))}
    gts = {p.stem: p for p in sorted(gt_dir.glob("*.png"))}
    entries = []
    missing = []
    for stem in sorted(set(preds) | set(gts)):
        if stem not in preds or stem not in gts:
            missing.append(stem)
            continue
        s = _load_gray(preds[stem])
        gt = (_load_gray(gts[stem]) >= 128.0 / 255.0).astype(float)
        entries.append((stem, s, gt))
    report = build_report(entries)
    report.missing = missing
    return report


def write_metrics_csv(report: EvalReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "mae", "f_beta"])
        for s in report.samples:
            writer.writerow(
                [s.sample_id, f"{s.mae:.6f}",
                 "" if s.f_beta is None else f"{s.f_beta:.6f}"]
            )


def write_pr_csv(report: EvalReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["threshold", "precision", "recall"])
        if report.curve is None:
            return
        for i, (p, r) in enumerate(report.curve):
            writer.writerow([f"{i / 255.0:.6f}", f"{p:.6f}", f"{r:.6f}"])

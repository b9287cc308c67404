"""Matplotlib renderings saved next to the delimited report files.

Every report path (training log, evaluation, benchmark) writes its CSV first
and then a figure of the same content, so runs can be eyeballed without
loading the CSVs elsewhere.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_loss_curve(steps, losses, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(steps, losses, lw=1.0)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_title("training loss")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_pr_curve(curve, path) -> None:
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    if curve is not None and len(curve):
        ax.plot(curve[:, 1], curve[:, 0], lw=1.5)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0, 1.02)
    ax.set_ylim(0, 1.02)
    ax.set_title("PR curve")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_sample_metrics(report, path) -> None:
    ids = [s.sample_id for s in report.samples]
    maes = [s.mae for s in report.samples]
    fbs = [s.f_beta if s.f_beta is not None else 0.0 for s in report.samples]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(max(6, 0.5 * len(ids) + 3), 3.5))
    x = np.arange(len(ids))
    ax1.bar(x, maes, color="tab:red")
    ax1.set_title("MAE per sample")
    ax2.bar(x, fbs, color="tab:blue")
    ax2.set_title("F-beta per sample")
    for ax in (ax1, ax2):
        ax.set_xticks(x)
        ax.set_xticklabels(ids, rotation=90, fontsize=6)
        ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_cost_report(rows, path) -> None:
    names = [r["variant"] for r in rows]
    params = [r["params"] for r in rows]
    times = [r["forward_ms_mean"] for r in rows]
    errs = [r["forward_ms_sd"] for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(7, 3.5))
    x = np.arange(len(names))
    ax1.bar(x, params, color="tab:purple")
    ax1.set_title("trainable parameters")
    ax2.bar(x, times, yerr=errs, color="tab:green", capsize=4)
    ax2.set_title("forward wall time (ms)")
    for ax in (ax1, ax2):
        ax.set_xticks(x)
        ax.set_xticklabels(names)
        ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)

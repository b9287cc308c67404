"""Training objectives.

Fully supervised: weighted BCE + weighted IoU, with per-pixel weights
emphasizing pixels whose 31x31 neighbourhood mean disagrees with the label
(object boundaries).  Weakly supervised: partial cross entropy over scribble
pixels plus local saliency coherence and edge-aware smoothness regularizers.

Predictions are tape Tensors in (0,1); labels and images are plain arrays.
Scribble encoding: 0 = unlabeled, 1 = foreground, 2 = background.
"""

import numpy as np

from . import tensor as T
from .errors import ContractError, ShapeError
from .tensor import Tensor

SCRIBBLE_UNLABELED = 0
SCRIBBLE_FG = 1
SCRIBBLE_BG = 2

_CLAMP = 1e-7


def _box_mean(x: np.ndarray, window: int) -> np.ndarray:
    """Mean over a window x window box, normalized by the valid pixel count."""
    h, w = x.shape
    r = window // 2
    sat = np.zeros((h + 1, w + 1), dtype=x.dtype)
    sat[1:, 1:] = x.cumsum(axis=0).cumsum(axis=1)
    rows = np.arange(h)
    cols = np.arange(w)
    r0 = np.maximum(rows - r, 0)
    r1 = np.minimum(rows + r, h - 1)
    c0 = np.maximum(cols - r, 0)
    c1 = np.minimum(cols + r, w - 1)
    sums = (
        sat[np.ix_(r1 + 1, c1 + 1)]
        - sat[np.ix_(r0, c1 + 1)]
        - sat[np.ix_(r1 + 1, c0)]
        + sat[np.ix_(r0, c0)]
    )
    counts = np.outer(r1 - r0 + 1, c1 - c0 + 1)
    return sums / counts


def weighted_bce_iou(pred: Tensor, gt: np.ndarray, pool_window: int = 31,
                     weight_gain: float = 5.0) -> Tensor:
    """Boundary-weighted BCE + IoU against a dense binary mask."""
    gt = np.asarray(gt, dtype=pred.data.dtype)
    if pred.shape != gt.shape:
        raise ShapeError(f"pred {pred.shape} vs gt {gt.shape}")
    weight = 1.0 + weight_gain * np.abs(_box_mean(gt, pool_window) - gt)
    w = Tensor(weight)
    g = Tensor(gt)
    p = T.clip(pred, _CLAMP, 1.0 - _CLAMP)
    bce = -(g * T.log(p) + (1.0 - g) * T.log(1.0 - p))
    wbce = (w * bce).sum() / w.sum()
    inter = (w * p * g).sum()
    union = (w * (p + g - p * g)).sum()
    wiou = 1.0 - (inter + 1.0) / (union + 1.0)
    return wbce + wiou


def partial_ce(pred: Tensor, scribble: np.ndarray) -> Tensor:
    """BCE averaged over scribble-labeled pixels only; 0 when none labeled.

    The gradient is exactly zero at unlabeled pixels.
    """
    scribble = np.asarray(scribble)
    fg = scribble == SCRIBBLE_FG
    bg = scribble == SCRIBBLE_BG
    count = int(fg.sum() + bg.sum())
    if count == 0:
        return Tensor(0.0)
    p = T.clip(pred, _CLAMP, 1.0 - _CLAMP)
    total = Tensor(0.0)
    if fg.any():
        total = total + -T.log(p[fg]).sum()
    if bg.any():
        total = total + -T.log(1.0 - p[bg]).sum()
    return total / count


def lsc_loss(pred: Tensor, image: np.ndarray, radius: int = 5,
             sigma_xy: float = 3.0, sigma_rgb: float = 0.1) -> Tensor:
    """Local saliency coherence: pairwise |p_i - p_j| weighted by a joint
    spatial/color Gaussian kernel, over pixel pairs within `radius`."""
    image = np.asarray(image, dtype=pred.data.dtype)
    h, w = pred.shape
    total = Tensor(0.0)
    count = 0
    inv_xy = 1.0 / (2.0 * sigma_xy * sigma_xy)
    inv_rgb = 1.0 / (2.0 * sigma_rgb * sigma_rgb)
    for dy in range(0, radius + 1):
        for dx in range(-radius, radius + 1):
            if dy == 0 and dx <= 0:
                continue  # each unordered pair once
            if dy * dy + dx * dx > radius * radius:
                continue
            if dy >= h or abs(dx) >= w:
                continue  # offset exceeds the image extent
            r1 = slice(0, h - dy)
            r2 = slice(dy, h)
            c1 = slice(max(0, -dx), w - max(0, dx))
            c2 = slice(max(0, dx), w - max(0, -dx))
            color_d2 = ((image[:, r1, c1] - image[:, r2, c2]) ** 2).sum(axis=0)
            kern = np.exp(-(dy * dy + dx * dx) * inv_xy - color_d2 * inv_rgb)
            diff = T.absolute(pred[r1, c1] - pred[r2, c2])
            total = total + (diff * Tensor(kern)).sum()
            count += kern.size
    if count == 0:
        return Tensor(0.0)
    return total / count


def smoothness_loss(pred: Tensor, image: np.ndarray, alpha: float = 10.0) -> Tensor:
    """Edge-aware first-order smoothness: prediction gradients are free where
    the (channel-mean) image has strong gradients, penalized elsewhere."""
    image = np.asarray(image, dtype=pred.data.dtype)
    gray = image.mean(axis=0)
    h, w = pred.shape
    gx = np.exp(-alpha * np.abs(gray[:, 1:] - gray[:, :-1]))
    gy = np.exp(-alpha * np.abs(gray[1:, :] - gray[:-1, :]))
    px = T.absolute(pred[:, 1:] - pred[:, :-1])
    py = T.absolute(pred[1:, :] - pred[:-1, :])
    total = (px * Tensor(gx)).sum() + (py * Tensor(gy)).sum()
    return total / float(h * w)


def total_loss(pred: Tensor, stack, mode: str, *, lambda_lsc: float = 0.3,
               lambda_smooth: float = 0.3, pool_window: int = 31,
               weight_gain: float = 5.0, lsc_radius: int = 5,
               lsc_sigma_xy: float = 3.0, lsc_sigma_rgb: float = 0.1,
               smooth_alpha: float = 10.0) -> Tensor:
    """Supervision objective for one sample; `stack` provides gt/scribble."""
    if mode == "full":
        if stack.gt is None:
            raise ContractError("full supervision requires a ground-truth mask")
        return weighted_bce_iou(pred, stack.gt, pool_window, weight_gain)
    if mode == "weak":
        if stack.scribble is None:
            raise ContractError("weak supervision requires a scribble mask")
        loss = partial_ce(pred, stack.scribble)
        loss = loss + lambda_lsc * lsc_loss(
            pred, stack.all_focus, lsc_radius, lsc_sigma_xy, lsc_sigma_rgb
        )
        return loss + lambda_smooth * smoothness_loss(pred, stack.all_focus, smooth_alpha)
    raise ContractError(f"supervision mode must be full|weak, got {mode!r}")

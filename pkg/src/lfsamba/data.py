"""Dataset layout, synthetic focal-stack generation, scribble synthesis, and
checkpoint persistence.

On-disk sample layout:  <root>/<id>/{allfocus.png, slice_00.png ...,
gt.png, scribble.png}, plus a manifest.jsonl at the root with one
{"id", "k", "has_scribble"} object per line.  Scribble PNGs encode
{unlabeled, bg, fg} as gray values {0, 128, 255}.

Checkpoints are little-endian binaries: magic "LFSB", version, a named
tensor table (u32 name length, UTF-8 name, u32 rank, u32 dims, float32
values), then the training-step counter and RNG seed.
"""

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy.ndimage import binary_erosion, distance_transform_edt, gaussian_filter

from .backbone import FocalStack, ModelParams, init_model, named_params
from .errors import CheckpointError, ContractError, DataError, DecodeError, ShapeError
from .losses import SCRIBBLE_BG, SCRIBBLE_FG
from .precision import active_dtype

CHECKPOINT_MAGIC = b"LFSB"
CHECKPOINT_VERSION = 1

GT_THRESHOLD = 128  # 8-bit gray value at which gt becomes foreground


# -- image helpers --------------------------------------------------------------


def _save_png(arr: np.ndarray, path: Path) -> None:
    """arr in [0,1], [H,W] or [3,H,W] -> 8-bit PNG."""
    a = np.clip(np.round(np.asarray(arr) * 255.0), 0, 255).astype(np.uint8)
    if a.ndim == 3:
        a = a.transpose(1, 2, 0)
    Image.fromarray(a).save(path)


def _load_image(path: Path) -> np.ndarray:
    if not path.exists():
        raise DataError(f"not found: {path}")
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB")
            arr = np.asarray(rgb, dtype=active_dtype()) / 255.0
    except UnidentifiedImageError as exc:
        raise DecodeError(f"cannot decode image: {path}") from exc
    return arr.transpose(2, 0, 1)


def _load_gray_u8(path: Path) -> np.ndarray:
    if not path.exists():
        raise DataError(f"not found: {path}")
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("L"), dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise DecodeError(f"cannot decode image: {path}") from exc


# -- sample loading --------------------------------------------------------------


def load_sample(sample_dir) -> FocalStack:
    """Read one sample directory into a FocalStack."""
    sample_dir = Path(sample_dir)
    if not sample_dir.is_dir():
        raise DataError(f"not found: {sample_dir}")
    all_focus = _load_image(sample_dir / "allfocus.png")

    slice_files = sorted(sample_dir.glob("slice_*.png"))
    if not slice_files:
        raise DataError(f"no focal slices in {sample_dir}")
    indices = []
    for f in slice_files:
        try:
            indices.append(int(f.stem.split("_")[1]))
        except (IndexError, ValueError) as exc:
            raise DataError(f"bad slice filename: {f}") from exc
    if sorted(indices) != list(range(len(indices))):
        raise DataError(
            f"slice indices in {sample_dir} must be contiguous from 00, got {sorted(indices)}"
        )
    slices = [_load_image(sample_dir / f"slice_{k:02d}.png") for k in range(len(indices))]

    gt_u8 = _load_gray_u8(sample_dir / "gt.png")
    gt = (gt_u8 >= GT_THRESHOLD).astype(active_dtype())

    scribble = None
    scribble_path = sample_dir / "scribble.png"
    if scribble_path.exists():
        raw = _load_gray_u8(scribble_path)
        scribble = np.zeros(raw.shape, dtype=np.uint8)
        scribble[raw >= 192] = SCRIBBLE_FG
        scribble[(raw >= 64) & (raw < 192)] = SCRIBBLE_BG

    shape = all_focus.shape[1:]
    for k, s in enumerate(slices):
        if s.shape[1:] != shape:
            raise ShapeError(f"slice {k} size {s.shape[1:]} != all-focus {shape}")
    if gt.shape != shape:
        raise ShapeError(f"gt size {gt.shape} != all-focus {shape}")
    if scribble is not None and scribble.shape != shape:
        raise ShapeError(f"scribble size {scribble.shape} != all-focus {shape}")

    return FocalStack(all_focus=all_focus, slices=slices, gt=gt,
                      scribble=scribble, sample_id=sample_dir.name)


def load_dataset(root):
    """All samples under root, sorted by id."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"not found: {root}")
    dirs = sorted(d for d in root.iterdir() if d.is_dir() and (d / "allfocus.png").exists())
    return [load_sample(d) for d in dirs]


# -- synthetic dataset ------------------------------------------------------------


def _textured_background(rng, size: int) -> np.ndarray:
    base = gaussian_filter(rng.uniform(0.0, 1.0, (3, size, size)), sigma=(0, 6, 6))
    lo, hi = base.min(axis=(1, 2), keepdims=True), base.max(axis=(1, 2), keepdims=True)
    return 0.3 + 0.4 * (base - lo) / np.maximum(hi - lo, 1e-9)


def _salient_color(rng) -> np.ndarray:
    # saturated extremes, well separated from the mid-range background
    low = rng.uniform(0.02, 0.1, 3)
    high = rng.uniform(0.9, 0.98, 3)
    pick = rng.integers(0, 2, 3).astype(bool)
    return np.where(pick, high, low)


def _shape_mask(rng, size: int, prominent: bool = False) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(float)
    kind = rng.integers(0, 3)
    lo, hi = (size / 5, size / 3.5) if prominent else (size / 8, size / 5)
    if kind == 0:  # circle
        r = rng.uniform(lo, hi)
        cy, cx = rng.uniform(r, size - r, 2)
        return ((yy - cy) ** 2 + (xx - cx) ** 2 <= r * r).astype(float)
    if kind == 1:  # rectangle
        ry, rx = rng.uniform(lo * 0.8, hi, 2)
        cy = rng.uniform(ry, size - ry)
        cx = rng.uniform(rx, size - rx)
        return ((np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)).astype(float)
    r = rng.uniform(lo, hi)  # diamond
    cy, cx = rng.uniform(r, size - r, 2)
    return (np.abs(yy - cy) + np.abs(xx - cx) <= r).astype(float)


def _blur(arr: np.ndarray, sigma: float) -> np.ndarray:
    if sigma <= 0.0:
        return arr
    if arr.ndim == 3:
        return gaussian_filter(arr, sigma=(0, sigma, sigma))
    return gaussian_filter(arr, sigma=sigma)


def _composite(background, layers, focus_depth, sigma0: float) -> np.ndarray:
    """Back-to-front alpha compositing with depth-dependent defocus blur."""
    img = _blur(background, sigma0 * abs(1.0 - focus_depth))
    for depth, color, mask in layers:  # layers sorted far -> near
        sigma = sigma0 * abs(depth - focus_depth)
        alpha = _blur(mask, sigma)
        colored = _blur(color[:, None, None] * mask[None], sigma)
        img = img * (1.0 - alpha[None]) + colored
    return np.clip(img, 0.0, 1.0)


def synth_sample(rng, size: int = 64, k_slices: int = 3, sigma0: float = 2.0):
    """One synthetic scene: textured background plus 2-4 shapes at distinct
    depths.  The front-most shape is the salient object: larger than the
    distractors and saturated in color, clearly separated from the mid-range
    background."""
    background = _textured_background(rng, size)
    n_shapes = int(rng.integers(2, 5))
    depths = rng.choice(np.linspace(0.1, 0.8, 8), size=n_shapes, replace=False)
    layers = []
    for depth in sorted(depths, reverse=True)[:-1]:  # far first
        color = rng.uniform(0.3, 0.7, 3)  # distractors stay camouflage-toned
        layers.append((float(depth), color, _shape_mask(rng, size)))
    layers.append((float(min(depths)), _salient_color(rng),
                   _shape_mask(rng, size, prominent=True)))
    gt = layers[-1][2].copy()  # front-most shape

    all_focus = _composite(background, layers, focus_depth=-1.0, sigma0=0.0)
    if k_slices == 1:
        focus = [0.5]
    else:
        focus = np.linspace(0.0, 1.0, k_slices)
    slices = [_composite(background, layers, float(f), sigma0) for f in focus]
    return all_focus, slices, gt


def synth_dataset(out_dir, n: int, seed: int, size: int = 64, k_slices: int = 3,
                  sigma0: float = 2.0):
    """Write n synthetic samples plus manifest.jsonl; deterministic in seed."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create dataset dir {out_dir}: {exc}") from exc
    records = []
    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        sample_id = f"sample_{i:04d}"
        sample_dir = out_dir / sample_id
        sample_dir.mkdir(exist_ok=True)
        all_focus, slices, gt = synth_sample(rng, size, k_slices, sigma0)
        _save_png(all_focus, sample_dir / "allfocus.png")
        for k, s in enumerate(slices):
            _save_png(s, sample_dir / f"slice_{k:02d}.png")
        _save_png(gt, sample_dir / "gt.png")
        records.append({"id": sample_id, "k": k_slices, "has_scribble": False})
    _write_manifest(out_dir, records)
    return records


def _write_manifest(root: Path, records) -> None:
    with open(root / "manifest.jsonl", "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_manifest(root):
    path = Path(root) / "manifest.jsonl"
    if not path.exists():
        return None
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


# -- scribble synthesis -----------------------------------------------------------


_MOVES = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def _random_walk(rng, region: np.ndarray, length: int) -> np.ndarray:
    """Directed stroke: start well inside the region, keep heading with small
    turns, avoid revisits; falls back to any in-region move when cornered."""
    depth = distance_transform_edt(region)
    deep = depth >= 0.6 * depth.max()
    ys, xs = np.nonzero(deep if deep.any() else region)
    start = int(rng.integers(0, len(ys)))
    y, x = int(ys[start]), int(xs[start])
    stroke = np.zeros_like(region, dtype=bool)
    stroke[y, x] = True
    h, w = region.shape
    heading = int(rng.integers(0, len(_MOVES)))
    for _ in range(length - 1):
        turns = [0, 1, -1, 2, -2, 3, -3, 4]
        candidates = [(heading + t) % len(_MOVES) for t in turns]
        placed = False
        for fresh_only in (True, False):
            for m in candidates:
                dy, dx = _MOVES[m]
                ny, nx = y + dy, x + dx
                if not (0 <= ny < h and 0 <= nx < w and region[ny, nx]):
                    continue
                if fresh_only and stroke[ny, nx]:
                    continue
                y, x, heading = ny, nx, m
                stroke[y, x] = True
                placed = True
                break
            if placed:
                break
        if not placed:
            break  # fully boxed in
    return stroke


def _region_stroke(rng, mask: np.ndarray):
    region = binary_erosion(mask, iterations=3)
    if not region.any():
        region = mask  # erosion ate the region; fall back to the full class
    ys, xs = np.nonzero(region)
    dy = ys.max() - ys.min() + 1
    dx = xs.max() - xs.min() + 1
    length = max(3, int(round(0.2 * np.hypot(dy, dx))))
    return _random_walk(rng, region, length)


def synth_scribbles(gt: np.ndarray, image, seed: int) -> np.ndarray:
    """One foreground and one background random-walk stroke inside the eroded
    class regions; labels {0 unlabeled, 1 fg, 2 bg}."""
    del image  # stroke placement does not look at appearance
    gt = np.asarray(gt) > 0.5
    if not gt.any() or gt.all():
        raise ContractError("scribble synthesis needs both classes present in gt")
    rng = np.random.default_rng(seed)
    labels = np.zeros(gt.shape, dtype=np.uint8)
    labels[_region_stroke(rng, gt)] = SCRIBBLE_FG
    labels[_region_stroke(rng, ~gt)] = SCRIBBLE_BG
    return labels


def save_scribble_png(labels: np.ndarray, path) -> None:
    img = np.zeros(labels.shape, dtype=np.uint8)
    img[labels == SCRIBBLE_FG] = 255
    img[labels == SCRIBBLE_BG] = 128
    Image.fromarray(img).save(path)


def add_scribbles(root, seed: int = 0):
    """Generate scribble.png for every sample under root; update manifest."""
    root = Path(root)
    records = read_manifest(root)
    samples = load_dataset(root)
    for i, stack in enumerate(samples):
        sample_seed = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
        labels = synth_scribbles(stack.gt, stack.all_focus, seed=sample_seed)
        save_scribble_png(labels, root / stack.sample_id / "scribble.png")
    if records is not None:
        for rec in records:
            rec["has_scribble"] = True
        _write_manifest(root, records)
    return len(samples)


# -- checkpoints -----------------------------------------------------------------


def save_checkpoint(params: ModelParams, path, step: int = 0, seed: int | None = None) -> None:
    """Serialize every named tensor (frozen trunk included) as float32 LE."""
    seed = params.encoder.seed if seed is None else seed
    table = named_params(params)
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(table)))
        for name, t in table.items():
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            dims = t.data.shape
            fh.write(struct.pack("<I", len(dims)))
            fh.write(struct.pack(f"<{len(dims)}I", *dims) if dims else b"")
            fh.write(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
        fh.write(struct.pack("<Q", step))
        fh.write(struct.pack("<Q", seed))


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return buf


def read_checkpoint_table(path):
    """Parse a checkpoint into ({name: array}, step, seed)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"not found: {path}")
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"bad checkpoint magic {magic!r}")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
            )
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "tensor count"))
        table = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(fh, 4, "name length"))
            name = _read_exact(fh, name_len, "name").decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(fh, 4, "rank"))
            dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank, "dims")) if rank else ()
            numel = int(np.prod(dims)) if dims else 1
            raw = _read_exact(fh, 4 * numel, f"values of {name}")
            table[name] = np.frombuffer(raw, dtype="<f4").reshape(dims)
        (step,) = struct.unpack("<Q", _read_exact(fh, 8, "step"))
        (seed,) = struct.unpack("<Q", _read_exact(fh, 8, "seed"))
    return table, step, seed


def load_checkpoint(path, cfg=None):
    """Restore (ModelParams, step, seed); geometry comes from cfg or, when
    cfg is None, is derived from the stored tensor shapes."""
    table, step, seed = read_checkpoint_table(path)
    if cfg is None:
        cfg = _derive_config(table, seed)
    model = init_model(cfg, seed=seed)
    expected = named_params(model)
    for name, t in expected.items():
        if name not in table:
            raise CheckpointError(f"missing tensor in checkpoint: {name}")
        stored = table[name]
        if tuple(stored.shape) != tuple(t.data.shape):
            raise ShapeError(
                f"checkpoint tensor {name} has shape {stored.shape}, "
                f"model expects {t.data.shape}"
            )
        t.data = stored.astype(active_dtype())
    extra = set(table) - set(expected)
    if extra:
        raise CheckpointError(f"unknown tensors in checkpoint: {sorted(extra)[:3]}")
    return model, step, seed


def _derive_config(table, seed: int):
    from .config import RunConfig

    def dims(name):
        if name not in table:
            raise CheckpointError(f"missing tensor in checkpoint: {name}")
        return table[name].shape

    d, patch_sq = dims("encoder.patch.w")
    patch = int(round(np.sqrt(patch_sq / 3)))
    grid = dims("encoder.pos")[1] // 2
    blocks = len({n.split(".")[2] for n in table if n.startswith("encoder.blocks.")})
    groups = len({n.split(".")[1] for n in table if n.startswith("adapters.")}) - 1
    hidden = dims("adapters.0.blocks.0.down.w")[0]
    stages = len({n.split(".")[2] for n in table if n.startswith("decoder.stages.")})
    return RunConfig(
        image_size=grid * patch,
        patch_size=patch,
        channels=int(d),
        state_size=int(dims("inter_slice.scan.row_forward.a_log")[1]),
        adapter_groups=groups,
        adapter_ratio=max(1, int(d) // int(hidden)),
        encoder_blocks=blocks,
        mlp_ratio=int(dims("encoder.blocks.0.mlp_in.w")[0]) // int(d),
        decoder_stages=stages,
        seed=int(seed),
    )

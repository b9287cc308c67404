"""Full model assembly: frozen transformer encoder with per-input adapter
groups, slice fusion, cross-modal fusion, and a conv-upsample decoder.

The encoder trunk is generated once from a seed and never trained; only the
adapter groups (one for the all-focus image, one per slice role up to G),
the two fusion blocks, and the decoder receive gradients.  Feature adapters
start at exact zero contribution (zero up-projection) and the position
adapter starts as an identity convolution over the max-pooled position
embedding, so a freshly initialized model reproduces the adapter-free
frozen encoder bitwise.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .blocks import (
    ConvParams,
    LinearParams,
    NormParams,
    init_conv,
    init_linear,
    named_tensors,
    to_grid,
    to_tokens,
)
from .errors import ConfigError, ContractError, ShapeError
from .inter_modal import InterModalParams, inter_modal_fuse
from .inter_slice import InterSliceParams, inter_slice_fuse
from .tensor import Tensor


@dataclass
class FocalStack:
    """One sample: all-focus image, K depth-ordered focal slices, labels."""

    all_focus: np.ndarray  # [3,H,W] in [0,1]
    slices: list  # K arrays [3,H,W], focus-depth order
    gt: np.ndarray | None = None  # [H,W] in {0,1}
    scribble: np.ndarray | None = None  # [H,W] in {0,1,2}
    sample_id: str = ""

    @property
    def k(self) -> int:
        return len(self.slices)


@dataclass
class EncoderBlockWeights:
    ln1: NormParams
    qkv: LinearParams  # d -> 3d
    proj: LinearParams
    ln2: NormParams
    mlp_in: LinearParams  # d -> mlp_ratio*d
    mlp_out: LinearParams


@dataclass
class FrozenEncoderWeights:
    patch: LinearParams  # 3*p*p -> d
    pos: Tensor  # [d, 2h, 2w] base-grid position embedding
    blocks: list
    final_ln: NormParams
    seed: int
    patch_size: int


@dataclass
class FeatureAdapter:
    """Bottleneck branch in parallel with a block's MLP; zero at init."""

    down: LinearParams  # d -> d/ratio
    up: LinearParams  # d/ratio -> d, zero-initialized


@dataclass
class AdapterGroup:
    pos_conv: ConvParams  # 3x3 on the pooled position grid, identity at init
    blocks: list  # one FeatureAdapter per encoder block


@dataclass
class DecoderParams:
    stages: list  # ConvParams per x2 upsampling round
    head: ConvParams  # final 1-channel conv


@dataclass
class ModelParams:
    encoder: FrozenEncoderWeights
    adapters: list  # G+1 AdapterGroups; index 0 = all-focus role
    inter_slice: InterSliceParams
    inter_modal: InterModalParams
    decoder: DecoderParams


def _frozen(arr) -> Tensor:
    return Tensor(arr, requires_grad=False)


def _frozen_linear(rng, d_out, d_in) -> LinearParams:
    return LinearParams(
        w=_frozen(rng.standard_normal((d_out, d_in)) / np.sqrt(d_in)),
        b=_frozen(np.zeros(d_out)),
    )


def init_frozen_encoder(rng, seed: int, d: int, patch: int, grid: int,
                        n_blocks: int, mlp_ratio: int) -> FrozenEncoderWeights:
    blocks = []
    for _ in range(n_blocks):
        blocks.append(
            EncoderBlockWeights(
                ln1=NormParams(_frozen(np.ones(d)), _frozen(np.zeros(d))),
                qkv=_frozen_linear(rng, 3 * d, d),
                proj=_frozen_linear(rng, d, d),
                ln2=NormParams(_frozen(np.ones(d)), _frozen(np.zeros(d))),
                mlp_in=_frozen_linear(rng, mlp_ratio * d, d),
                mlp_out=_frozen_linear(rng, d, mlp_ratio * d),
            )
        )
    return FrozenEncoderWeights(
        patch=_frozen_linear(rng, d, 3 * patch * patch),
        pos=_frozen(0.02 * rng.standard_normal((d, 2 * grid, 2 * grid))),
        blocks=blocks,
        final_ln=NormParams(_frozen(np.ones(d)), _frozen(np.zeros(d))),
        seed=seed,
        patch_size=patch,
    )


def init_adapter_group(rng, d: int, ratio: int, n_blocks: int) -> AdapterGroup:
    hidden = max(1, d // ratio)
    blocks = [
        FeatureAdapter(
            down=init_linear(rng, hidden, d),
            up=init_linear(rng, d, hidden, zero=True),
        )
        for _ in range(n_blocks)
    ]
    return AdapterGroup(pos_conv=init_conv(rng, d, d, 3, identity=True), blocks=blocks)


def init_decoder(rng, d: int, stages: int) -> DecoderParams:
    convs = []
    c_in = d
    for i in range(stages):
        c_out = max(4, d >> (i + 1))
        convs.append(init_conv(rng, c_out, c_in, 3))
        c_in = c_out
    return DecoderParams(stages=convs, head=init_conv(rng, 1, c_in, 3))


def init_model(cfg, seed: int | None = None) -> ModelParams:
    """Build a full model from a RunConfig; deterministic in the seed."""
    seed = cfg.seed if seed is None else seed
    if cfg.image_size % cfg.patch_size:
        raise ConfigError(
            f"image size {cfg.image_size} not divisible by patch {cfg.patch_size}"
        )
    grid = cfg.image_size // cfg.patch_size
    if grid * (2 ** cfg.decoder_stages) != cfg.image_size:
        raise ConfigError(
            f"decoder_stages {cfg.decoder_stages} cannot upsample grid {grid} "
            f"back to {cfg.image_size}"
        )
    rng = np.random.default_rng(seed)
    encoder = init_frozen_encoder(
        rng, seed, cfg.channels, cfg.patch_size, grid, cfg.encoder_blocks, cfg.mlp_ratio
    )
    adapters = [
        init_adapter_group(rng, cfg.channels, cfg.adapter_ratio, cfg.encoder_blocks)
        for _ in range(cfg.adapter_groups + 1)
    ]
    return ModelParams(
        encoder=encoder,
        adapters=adapters,
        inter_slice=InterSliceParams.init(rng, cfg.channels, cfg.state_size),
        inter_modal=InterModalParams.init(rng, cfg.channels, cfg.state_size),
        decoder=init_decoder(rng, cfg.channels, cfg.decoder_stages),
    )


# -- encoder ------------------------------------------------------------------


def position_adapter(pos: Tensor, conv: ConvParams) -> Tensor:
    """2x2 stride-2 max pool then 3x3 conv over the [d,2h,2w] base grid."""
    d, hh, ww = pos.shape
    if hh % 2 or ww % 2:
        raise ShapeError(f"position grid {hh}x{ww} must have even dims")
    pooled = T.pool2d(pos, "max", 2, 2)
    return T.conv2d(pooled, conv.kernel, conv.bias, padding=1)


def feature_adapter(x: Tensor, adapter: FeatureAdapter) -> Tensor:
    """Bottleneck: up(ReLU(down(x))), applied over the last axis."""
    return T.linear(T.relu(T.linear(x, adapter.down.w, adapter.down.b)),
                    adapter.up.w, adapter.up.b)


def _patch_tokens(image: Tensor, enc: FrozenEncoderWeights) -> Tensor:
    c, h, w = image.shape
    p = enc.patch_size
    if c != 3:
        raise ShapeError(f"encoder expects a [3,H,W] image, got {image.shape}")
    if h % p or w % p:
        raise ShapeError(f"image {h}x{w} not divisible by patch size {p}")
    gh, gw = h // p, w // p
    patches = (
        image.reshape(3, gh, p, gw, p)
        .transpose(1, 3, 0, 2, 4)
        .reshape(gh * gw, 3 * p * p)
    )
    return T.linear(patches, enc.patch.w, enc.patch.b)


def _attention(x: Tensor, blk: EncoderBlockWeights) -> Tensor:
    l, d = x.shape
    qkv = T.linear(x, blk.qkv.w, blk.qkv.b)
    q, k, v = qkv[:, :d], qkv[:, d : 2 * d], qkv[:, 2 * d :]
    scores = T.matmul(q, k.transpose(1, 0)) * (1.0 / np.sqrt(d))
    return T.linear(T.matmul(T.softmax(scores), v), blk.proj.w, blk.proj.b)


def _encode_tokens(image: Tensor, enc: FrozenEncoderWeights, pos_grid: Tensor,
                   group: AdapterGroup | None) -> Tensor:
    x = _patch_tokens(image, enc)
    gh = pos_grid.shape[1]
    x = x + to_tokens(pos_grid)
    for i, blk in enumerate(enc.blocks):
        x = x + _attention(T.layer_norm(x, blk.ln1.gamma, blk.ln1.beta), blk)
        pre = T.layer_norm(x, blk.ln2.gamma, blk.ln2.beta)
        mlp = T.linear(T.silu(T.linear(pre, blk.mlp_in.w, blk.mlp_in.b)),
                       blk.mlp_out.w, blk.mlp_out.b)
        branch = x + mlp
        if group is not None:
            branch = branch + feature_adapter(pre, group.blocks[i])
        x = branch
    x = T.layer_norm(x, enc.final_ln.gamma, enc.final_ln.beta)
    return to_grid(x, (gh, pos_grid.shape[2]))


def encode(image, group: AdapterGroup, enc: FrozenEncoderWeights) -> Tensor:
    """Frozen trunk plus one adapter group -> [d,h,w] feature grid."""
    image = image if isinstance(image, Tensor) else Tensor(image)
    pos = position_adapter(enc.pos, group.pos_conv)
    return _encode_tokens(image, enc, pos, group)


def encode_frozen(image, enc: FrozenEncoderWeights) -> Tensor:
    """Adapter-free baseline: max-pooled position grid, no bottleneck branches."""
    image = image if isinstance(image, Tensor) else Tensor(image)
    pos = T.pool2d(enc.pos, "max", 2, 2)
    return _encode_tokens(image, enc, pos, None)


# -- decoder ------------------------------------------------------------------


def decode(f_fused: Tensor, dec: DecoderParams) -> Tensor:
    """s rounds of conv + bilinear x2 + ReLU, then a 1-channel sigmoid head."""
    x = f_fused
    for conv in dec.stages:
        x = T.relu(T.upsample2x(T.conv2d(x, conv.kernel, conv.bias, padding=1)))
    x = T.conv2d(x, dec.head.kernel, dec.head.bias, padding=1)
    return T.sigmoid(x[0])


# -- full model -----------------------------------------------------------------


def forward(stack: FocalStack, params: ModelParams) -> Tensor:
    """FocalStack -> saliency map [H,W] in (0,1)."""
    if stack.k < 1:
        raise ContractError("focal stack needs at least one slice")
    g_max = len(params.adapters) - 1
    f_0 = encode(stack.all_focus, params.adapters[0], params.encoder)
    slice_feats = [
        encode(img, params.adapters[min(k + 1, g_max)], params.encoder)
        for k, img in enumerate(stack.slices)
    ]
    f_slices = inter_slice_fuse(slice_feats, params.inter_slice)
    f_fused = inter_modal_fuse(f_0, f_slices, params.inter_modal)
    return decode(f_fused, params.decoder)


def forward_features(stack: FocalStack, params: ModelParams):
    """Forward pass that also returns the staged features (for dumps)."""
    g_max = len(params.adapters) - 1
    f_0 = encode(stack.all_focus, params.adapters[0], params.encoder)
    slice_feats = [
        encode(img, params.adapters[min(k + 1, g_max)], params.encoder)
        for k, img in enumerate(stack.slices)
    ]
    f_slices = inter_slice_fuse(slice_feats, params.inter_slice)
    f_fused = inter_modal_fuse(f_0, f_slices, params.inter_modal)
    return decode(f_fused, params.decoder), f_0, f_slices, f_fused


def named_params(params: ModelParams):
    """All named tensors, frozen encoder included (checkpoint order)."""
    return dict(named_tensors(params))


def trainable_params(params: ModelParams):
    """Adapters, fusion blocks, and decoder; excludes the frozen encoder."""
    return {name: t for name, t in named_tensors(params) if t.requires_grad}

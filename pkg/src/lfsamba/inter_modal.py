"""Inter-modal fusion between the all-focus stream and the fused slice stream.

Three paths feed the output: a middle stream that convolves the concatenated
pair and runs a plain four-direction scan, and two cross streams whose scans
exchange information in two steps.  Step 1 keeps each stream's own (B, Delta)
but takes its output projection C from the other stream's tokens (unfolded in
the same direction, so scan positions line up).  Step 2 runs each stream's
second scan on the other stream's step-1 output, so all data-dependent
quantities derive from exchanged data.  Residuals are applied once, in the
final six-term sum."""

from dataclasses import dataclass

from . import tensor as T
from .blocks import (
    ConvParams,
    LinearParams,
    NormParams,
    StemParams,
    apply_stem,
    init_conv,
    init_linear,
    init_norm,
    init_stem,
    layer_norm_grid,
    pointwise_linear,
)
from .errors import ShapeError
from .scan import SCAN_ORDER, DirectionalScanParams, fold, merge_directions, ss2d, unfold
from .ssm import selective_scan
from .tensor import Tensor, concat


@dataclass
class ModalStreamParams:
    """One modality's cross-scan stream; stage-1 and stage-2 scans are
    independent parameter sets."""

    stem: StemParams
    stage1: DirectionalScanParams
    stage2: DirectionalScanParams
    ln: NormParams
    out: LinearParams

    @classmethod
    def init(cls, rng, d: int, n: int):
        return cls(
            stem=init_stem(rng, d),
            stage1=DirectionalScanParams.init(rng, d, n),
            stage2=DirectionalScanParams.init(rng, d, n),
            ln=init_norm(d),
            out=init_linear(rng, d, d),
        )


@dataclass
class InterModalParams:
    fuse: ConvParams  # 3x3, 2d -> d
    mid_stem: StemParams
    mid_scan: DirectionalScanParams
    mid_ln: NormParams
    mid_out: LinearParams
    allfocus: ModalStreamParams
    slices: ModalStreamParams

    @classmethod
    def init(cls, rng, d: int, n: int):
        return cls(
            fuse=init_conv(rng, d, 2 * d, 3),
            mid_stem=init_stem(rng, d),
            mid_scan=DirectionalScanParams.init(rng, d, n),
            mid_ln=init_norm(d),
            mid_out=init_linear(rng, d, d),
            allfocus=ModalStreamParams.init(rng, d, n),
            slices=ModalStreamParams.init(rng, d, n),
        )


def fuse_basic(f_0: Tensor, f_slices: Tensor, params: InterModalParams) -> Tensor:
    """3x3 conv over the channel-concatenated pair."""
    if f_0.shape != f_slices.shape:
        raise ShapeError(f"fuse_basic: shapes {f_0.shape} and {f_slices.shape} differ")
    return T.conv2d(concat([f_0, f_slices], axis=0), params.fuse.kernel,
                    params.fuse.bias, padding=1)


def middle_stream(p: Tensor, params: InterModalParams) -> Tensor:
    """Linear(LN(SS2D(SiLU(DWConv(Linear(P))))))."""
    x = apply_stem(p, params.mid_stem)
    x = ss2d(x, params.mid_scan)
    return pointwise_linear(layer_norm_grid(x, params.mid_ln), params.mid_out)


def cross_ss2d(x_0: Tensor, x_slices: Tensor, params: InterModalParams,
               exchange_c: bool = True):
    """Two-step cross scans; returns (s2a_out, a2s_out).

    Step 1: per direction, each stream scans its own tokens with (B, Delta)
    from itself and C projected from the other stream's tokens at the same
    scan positions (disabled when exchange_c is False).  Step 2: each
    stream's second scan consumes the other stream's step-1 output.
    """
    if x_0.shape != x_slices.shape:
        raise ShapeError(f"cross_ss2d: shapes {x_0.shape} and {x_slices.shape} differ")
    c, h, w = x_0.shape
    dir_0 = []
    dir_s = []
    for direction in SCAN_ORDER:
        seq_0 = unfold(x_0, direction)
        seq_s = unfold(x_slices, direction)
        p_0 = params.allfocus.stage1.for_direction(direction)
        p_s = params.slices.stage1.for_direction(direction)
        if exchange_c:
            c_for_0 = T.linear(seq_s, p_s.w_c)
            c_for_s = T.linear(seq_0, p_0.w_c)
        else:
            c_for_0 = None
            c_for_s = None
        dir_0.append(fold(selective_scan(seq_0, p_0, c=c_for_0), direction, (h, w)))
        dir_s.append(fold(selective_scan(seq_s, p_s, c=c_for_s), direction, (h, w)))
    y_0 = merge_directions(dir_0)
    y_slices = merge_directions(dir_s)
    s2a_out = ss2d(y_slices, params.allfocus.stage2)
    a2s_out = ss2d(y_0, params.slices.stage2)
    return s2a_out, a2s_out


def inter_modal_fuse(f_0: Tensor, f_slices: Tensor, params: InterModalParams) -> Tensor:
    """Full cross-modal fusion; output shape equals f_0's."""
    if f_0.shape != f_slices.shape:
        raise ShapeError(
            f"inter_modal_fuse: shapes {f_0.shape} and {f_slices.shape} differ"
        )
    p = fuse_basic(f_0, f_slices, params)
    p_bar = middle_stream(p, params)
    x_0 = apply_stem(f_0, params.allfocus.stem)
    x_slices = apply_stem(f_slices, params.slices.stem)
    s2a, a2s = cross_ss2d(x_0, x_slices, params)
    f_0_bar = pointwise_linear(layer_norm_grid(s2a, params.allfocus.ln), params.allfocus.out)
    f_slices_bar = pointwise_linear(layer_norm_grid(a2s, params.slices.ln), params.slices.out)
    return f_0_bar + f_0 + p_bar + p + f_slices_bar + f_slices

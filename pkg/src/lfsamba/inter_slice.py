"""Inter-slice fusion: couple the K focal-slice feature grids.

Each slice runs a small stem, the stack is mixed by the slice-token scan
(fss2d), and every slice re-enters through a gated residual before the K
results are averaged into a single grid."""

from dataclasses import dataclass

from . import tensor as T
from .blocks import (
    LinearParams,
    NormParams,
    StemParams,
    apply_stem,
    init_linear,
    init_norm,
    init_stem,
    layer_norm_grid,
    pointwise_linear,
)
from .errors import ContractError
from .scan import DirectionalScanParams, fss2d
from .tensor import Tensor, stack


@dataclass
class InterSliceParams:
    stem: StemParams
    scan: DirectionalScanParams
    ln: NormParams
    gate: LinearParams
    out: LinearParams

    @classmethod
    def init(cls, rng, d: int, n: int):
        return cls(
            stem=init_stem(rng, d),
            scan=DirectionalScanParams.init(rng, d, n),
            ln=init_norm(d),
            gate=init_linear(rng, d, d),
            out=init_linear(rng, d, d),
        )


def slice_stem(f_k: Tensor, params: InterSliceParams) -> Tensor:
    """SiLU(DWConv(Linear(F_k))) on one [d,h,w] slice feature."""
    return apply_stem(f_k, params.stem)


def inter_slice_fuse(features, params: InterSliceParams) -> Tensor:
    """Fuse K slice features [d,h,w] into one grid of the same shape."""
    features = list(features)
    if not features:
        raise ContractError("inter_slice_fuse needs at least one slice feature")
    stems = [slice_stem(f, params) for f in features]
    scanned = fss2d(stems, params.scan)
    mixed = []
    for f_k, q_k in zip(features, scanned):
        gate = T.silu(pointwise_linear(f_k, params.gate))
        r_k = f_k + pointwise_linear(layer_norm_grid(q_k, params.ln) * gate, params.out)
        mixed.append(r_k)
    return stack(mixed, axis=0).mean(axis=0)

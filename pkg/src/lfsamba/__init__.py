"""Light-field focal-stack salient object detection, desk scale.

A from-scratch pipeline: frozen transformer encoder with trainable adapter
groups, selective-scan fusion across focal slices and across modalities, a
convolutional decoder, and full/weak supervision objectives - all built on a
small reverse-mode autodiff tape so that every piece can be verified against
brute-force oracles and finite differences.
"""

from .backbone import (
    FocalStack,
    ModelParams,
    decode,
    encode,
    encode_frozen,
    forward,
    init_model,
    trainable_params,
)
from .config import RunConfig
from .precision import active_dtype, active_precision, set_precision
from .tensor import Tensor, backward, gradcheck

__all__ = [
    "FocalStack",
    "ModelParams",
    "RunConfig",
    "Tensor",
    "active_dtype",
    "active_precision",
    "backward",
    "decode",
    "encode",
    "encode_frozen",
    "forward",
    "gradcheck",
    "init_model",
    "set_precision",
    "trainable_params",
]

"""Scan-order geometry for 2-d selective scans.

A [C,R,S] grid is unfolded into a token sequence along one of four total
orders (row-major / column-major, each forward or backward), scanned with a
per-direction S6 block, folded back, and the four results are summed in a
fixed order.  ss2d runs this on an image feature grid; fss2d runs the same
machinery on the K x L grid whose rows are focal slices and whose columns
are token positions, so row scans travel within a slice and column scans
interleave across slices at the same spatial position.
"""

from dataclasses import dataclass
from enum import Enum

from .errors import ShapeError
from .ssm import SsmBlockParams, selective_scan
from .tensor import Tensor, stack


class ScanDirection(Enum):
    ROW_FORWARD = "row_forward"
    COLUMN_FORWARD = "column_forward"
    ROW_BACKWARD = "row_backward"
    COLUMN_BACKWARD = "column_backward"

    @property
    def axis_major(self) -> str:
        return "row" if self.value.startswith("row") else "column"

    @property
    def orientation(self) -> str:
        return "forward" if self.value.endswith("forward") else "backward"


# Fixed merge order for the four directional results.
SCAN_ORDER = (
    ScanDirection.ROW_FORWARD,
    ScanDirection.COLUMN_FORWARD,
    ScanDirection.ROW_BACKWARD,
    ScanDirection.COLUMN_BACKWARD,
)


@dataclass
class DirectionalScanParams:
    """One independent S6 block per scan direction; merged by summation."""

    row_forward: SsmBlockParams
    column_forward: SsmBlockParams
    row_backward: SsmBlockParams
    column_backward: SsmBlockParams

    def for_direction(self, direction: ScanDirection) -> SsmBlockParams:
        return getattr(self, direction.value)

    @property
    def d(self) -> int:
        return self.row_forward.d

    @classmethod
    def init(cls, rng, d: int, n: int):
        return cls(*(SsmBlockParams.init(rng, d, n) for _ in range(4)))


def unfold(grid: Tensor, direction: ScanDirection) -> Tensor:
    """[C,R,S] -> [R*S, C] tokens in the direction's total order."""
    if grid.ndim != 3:
        raise ShapeError(f"unfold expects [C,R,S], got {grid.shape}")
    c, r, s = grid.shape
    if direction.axis_major == "row":
        seq = grid.reshape(c, r * s).transpose(1, 0)
    else:
        seq = grid.transpose(0, 2, 1).reshape(c, r * s).transpose(1, 0)
    if direction.orientation == "backward":
        seq = seq.flip(0)
    return seq


def fold(seq: Tensor, direction: ScanDirection, shape) -> Tensor:
    """Exact inverse of unfold for the same direction; shape is (R, S)."""
    r, s = shape
    if seq.ndim != 2 or seq.shape[0] != r * s:
        raise ShapeError(f"fold: sequence {seq.shape} does not match grid {r}x{s}")
    c = seq.shape[1]
    if direction.orientation == "backward":
        seq = seq.flip(0)
    if direction.axis_major == "row":
        return seq.transpose(1, 0).reshape(c, r, s)
    return seq.transpose(1, 0).reshape(c, s, r).transpose(0, 2, 1)


def merge_directions(outputs) -> Tensor:
    """Fixed pairwise sum (rf+cf) + (rb+cb); tied pairs double exactly."""
    rf, cf, rb, cb = outputs
    return (rf + cf) + (rb + cb)


def ss2d(x: Tensor, params: DirectionalScanParams) -> Tensor:
    """Four-direction selective scan over a [C,H,W] grid, summed."""
    c, h, w = x.shape
    outputs = []
    for direction in SCAN_ORDER:
        y = selective_scan(unfold(x, direction), params.for_direction(direction))
        outputs.append(fold(y, direction, (h, w)))
    return merge_directions(outputs)


def fss2d(slices, params: DirectionalScanParams):
    """Four-direction scan over the K x L slice-token grid.

    Each [C,h,w] slice is flattened to L = h*w tokens; the K rows are stacked
    in depth order.  Returns the K enhanced slices at their original shape.
    """
    slices = list(slices)
    if not slices:
        return []
    c, h, w = slices[0].shape
    for k, s in enumerate(slices):
        if s.shape != (c, h, w):
            raise ShapeError(
                f"fss2d: slice {k} shape {s.shape} differs from {(c, h, w)}"
            )
    grid = stack([s.reshape(c, h * w) for s in slices], axis=1)  # [C,K,L]
    fused = ss2d(grid, params)
    return [fused[:, k, :].reshape(c, h, w) for k in range(len(slices))]

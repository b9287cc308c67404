"""Shared helpers: block-level gradcheck wiring and parameter-count oracles."""

import copy
import dataclasses

from lfsamba.blocks import named_tensors
from lfsamba.tensor import Tensor


def analytic_trainable_count(cfg) -> int:
    """Closed-form trainable parameter count for a RunConfig geometry."""
    d, n = cfg.channels, cfg.state_size
    r = max(1, d // 16)
    s6 = 3 * d * n + 2 * r * d + 2 * d
    dirscan = 4 * s6

    def lin(dout, din):
        return dout * din + dout

    def conv(co, ci, k):
        return co * ci * k * k + co

    norm = 2 * d
    stem = lin(d, d) + conv(d, 1, 3)
    hidden = max(1, d // cfg.adapter_ratio)
    adapter_group = conv(d, d, 3) + cfg.encoder_blocks * (lin(hidden, d) + lin(d, hidden))
    inter_slice = stem + dirscan + norm + 2 * lin(d, d)
    stream = stem + 2 * dirscan + norm + lin(d, d)
    inter_modal = conv(d, 2 * d, 3) + stem + dirscan + norm + lin(d, d) + 2 * stream
    decoder = 0
    c_in = d
    for i in range(cfg.decoder_stages):
        c_out = max(4, d >> (i + 1))
        decoder += conv(c_out, c_in, 3)
        c_in = c_out
    decoder += conv(1, c_in, 3)
    return ((cfg.adapter_groups + 1) * adapter_group + inter_slice
            + inter_modal + decoder)


def named_list(params):
    """Stable [(name, tensor)] listing of a parameter container."""
    return list(named_tensors(params))


def with_tensors(params, names, tensors):
    """A deep copy of `params` whose tensors are replaced by `tensors`
    (matched by name), so gradcheck probes are wired into the block."""
    clone = copy.deepcopy(params)
    table = dict(zip(names, tensors))
    _graft(clone, table, "")
    return clone


def _graft(obj, table, prefix):
    if dataclasses.is_dataclass(obj):
        for field in dataclasses.fields(obj):
            value = getattr(obj, field.name)
            name = f"{prefix}.{field.name}" if prefix else field.name
            if isinstance(value, Tensor):
                setattr(obj, field.name, table[name])
            else:
                _graft(value, table, name)
    elif isinstance(obj, list):
        for i, value in enumerate(obj):
            name = f"{prefix}.{i}" if prefix else str(i)
            if isinstance(value, Tensor):
                obj[i] = table[name]
            else:
                _graft(value, table, name)

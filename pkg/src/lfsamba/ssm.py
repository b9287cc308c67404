"""Selective state-space (S6) block: data-dependent parameter projection,
discretization, and the linear recurrence

    h_t = Abar_t * h_{t-1} + Bbar_t * u_t        (per channel, N-dim state)
    y_t = <C_t, h_t> + D * u_t

with input-dependent (B, C, Delta).  Two routes are provided on purpose:
selective_scan_sequential is the plain-loop oracle, selective_scan is the
differentiable fast path (vectorized associative scan) that must agree with
the oracle to 1e-6 relative.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .tensor import Tensor, _from_op


@dataclass
class SsmBlockParams:
    """One S6 block; A = -exp(a_log) is elementwise negative for stability."""

    a_log: Tensor  # [d, N]
    w_b: Tensor  # [N, d]
    w_c: Tensor  # [N, d]
    w_dt_down: Tensor  # [r, d]
    w_dt_up: Tensor  # [d, r]
    dt_bias: Tensor  # [d]
    d_skip: Tensor  # [d]

    @property
    def d(self) -> int:
        return self.a_log.shape[0]

    @property
    def n(self) -> int:
        return self.a_log.shape[1]

    @classmethod
    def init(cls, rng, d: int, n: int, dt_min: float = 1e-3, dt_max: float = 1e-1):
        """Stable defaults: A = -1..-N per channel, softplus(dt_bias) roughly
        log-uniform in [dt_min, dt_max], low-rank Delta projection r = d/16."""
        r = max(1, d // 16)
        a_log = np.tile(np.log(np.arange(1, n + 1, dtype=float)), (d, 1))
        dt = np.exp(rng.uniform(np.log(dt_min), np.log(dt_max), size=d))
        dt_bias = dt + np.log(-np.expm1(-dt))  # inverse softplus
        return cls(
            a_log=Tensor(a_log, requires_grad=True),
            w_b=Tensor(rng.standard_normal((n, d)) / np.sqrt(d), requires_grad=True),
            w_c=Tensor(rng.standard_normal((n, d)) / np.sqrt(d), requires_grad=True),
            w_dt_down=Tensor(rng.standard_normal((r, d)) / np.sqrt(d), requires_grad=True),
            w_dt_up=Tensor(rng.standard_normal((d, r)) / np.sqrt(r), requires_grad=True),
            dt_bias=Tensor(dt_bias, requires_grad=True),
            d_skip=Tensor(np.ones(d), requires_grad=True),
        )


def project_params(u: Tensor, params: SsmBlockParams):
    """Data-dependent (Delta, B, C) from the token sequence u [T,d]."""
    if u.ndim != 2 or u.shape[1] != params.d:
        raise ShapeError(f"scan input {u.shape} incompatible with d={params.d}")
    b = T.linear(u, params.w_b)
    c = T.linear(u, params.w_c)
    dt = T.linear(T.linear(u, params.w_dt_down), params.w_dt_up, params.dt_bias)
    return T.softplus(dt), b, c


def discretize(delta: Tensor, a: Tensor, b: Tensor):
    """Zero-order hold for A, Euler for B.

    delta [T,d], a [d,N], b [T,N]  ->  (Abar [T,d,N], Bbar [T,d,N]).
    """
    t, d = delta.shape
    n = a.shape[1]
    delta3 = delta.reshape(t, d, 1).expand(t, d, n)
    a3 = a.reshape(1, d, n).expand(t, d, n)
    b3 = b.reshape(t, 1, n).expand(t, d, n)
    return T.exp(delta3 * a3), delta3 * b3


def selective_scan_sequential(u: Tensor, params: SsmBlockParams) -> Tensor:
    """Brute-force oracle: step-by-step recurrence, no restructuring.

    Forward values only; not recorded on the tape.
    """
    ud = u.data
    t_len, d = ud.shape
    n = params.n
    pre = ud @ params.w_dt_down.data.T @ params.w_dt_up.data.T + params.dt_bias.data
    delta = np.where(pre > 30.0, pre, np.log1p(np.exp(np.minimum(pre, 30.0))))
    b = ud @ params.w_b.data.T  # [T,N]
    c = ud @ params.w_c.data.T  # [T,N]
    a = -np.exp(params.a_log.data)  # [d,N]
    d_skip = params.d_skip.data
    h = np.zeros((d, n), dtype=ud.dtype)
    y = np.zeros_like(ud)
    for t in range(t_len):
        abar = np.exp(delta[t][:, None] * a)
        bbar_u = delta[t][:, None] * b[t][None, :] * ud[t][:, None]
        h = abar * h + bbar_u
        y[t] = h @ c[t] + d_skip * ud[t]
    return Tensor(y)


def _linear_recurrence(coeff: np.ndarray, value: np.ndarray) -> np.ndarray:
    """Inclusive scan of h_t = coeff_t * h_{t-1} + value_t with h_{-1} = 0.

    Hillis-Steele doubling over the leading axis; O(T log T) vectorized work.
    """
    a = coeff.copy()
    x = value.copy()
    t = a.shape[0]
    off = 1
    while off < t:
        x[off:] = x[off:] + a[off:] * x[:-off]
        a[off:] = a[off:] * a[:-off]
        off <<= 1
    return x


def _scan_core(u: Tensor, delta: Tensor, a: Tensor, b: Tensor, c: Tensor,
               d_skip: Tensor) -> Tensor:
    """Fused discretize + recurrence with an analytic backward pass."""
    ud, dd, ad, bd, cd = u.data, delta.data, a.data, b.data, c.data
    t_len, d = ud.shape
    n = ad.shape[1]
    dA = np.exp(dd[:, :, None] * ad[None])  # [T,d,N]
    dBu = dd[:, :, None] * bd[:, None, :] * ud[:, :, None]
    hs = _linear_recurrence(dA, dBu)
    y = np.matmul(hs, cd[:, :, None])[:, :, 0] + ud * d_skip.data[None, :]

    def grad_fn(g):
        dc = np.matmul(g[:, None, :], hs)[:, 0, :]  # [T,N]
        dd_skip = (g * ud).sum(axis=0)
        dhs = g[:, :, None] * cd[:, None, :]
        # adjoint recurrence lam_t = dhs_t + dA_{t+1} * lam_{t+1}, run reversed
        coeff = np.concatenate([np.ones((1, d, n), dtype=dA.dtype), dA[::-1][:-1]], axis=0)
        lam = _linear_recurrence(coeff, dhs[::-1])[::-1]
        hprev = np.concatenate([np.zeros((1, d, n), dtype=hs.dtype), hs[:-1]], axis=0)
        ddA_scaled = lam * hprev * dA  # d/d(exponent) of exp
        lam_b = np.matmul(lam, bd[:, :, None])[:, :, 0]  # sum_n lam*b -> [T,d]
        ddelta = (ddA_scaled * ad[None]).sum(axis=2) + lam_b * ud
        da = (ddA_scaled * dd[:, :, None]).sum(axis=0)
        db = np.matmul((dd * ud)[:, None, :], lam)[:, 0, :]  # [T,N]
        du = lam_b * dd + g * d_skip.data[None, :]
        return (du, ddelta, da, db, dc, dd_skip)

    return _from_op(y, (u, delta, a, b, c, d_skip), grad_fn)


def selective_scan(u: Tensor, params: SsmBlockParams, c: Tensor | None = None) -> Tensor:
    """Differentiable fast path; same contract as the sequential oracle.

    `c` overrides the output projection sequence [T,N] (used by the
    cross-modal scans, which exchange C between streams).
    """
    delta, b, own_c = project_params(u, params)
    if c is None:
        c = own_c
    elif c.shape != (u.shape[0], params.n):
        raise ShapeError(f"override C {c.shape} must be [{u.shape[0]},{params.n}]")
    a = -T.exp(params.a_log)
    return _scan_core(u, delta, a, b, c, params.d_skip)

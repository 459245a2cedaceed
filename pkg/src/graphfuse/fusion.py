"""Global fusion: flatten the node set to a sequence, run a gated
selective state-space block over it, and add the result back residually.

The recurrence per channel d with state size N is

    h_t = exp(delta_t * A_d) * h_{t-1} + (delta_t * B(c_t)) * c_{t,d}
    y_{t,d} = C(c_t) . h_t[d] + skip_d * c_{t,d}

with h_0 = 0, a scalar step delta_t = softplus(c_t . w_delta + b) per
position, and input-dependent projections B and C. The input projection
splits into a content path c (which the recurrence reads) and a gate z;
the recurrence output is multiplied by silu(z) and sent through the
output projection. A is stored as the log of its magnitude and applied
as -exp(log), so every decay factor exp(delta * A) stays inside (0, 1).

Node order matters to the recurrence, so sequences are formed in the
canonical order: modality index ascending, then within-modality order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .tensor import (
    Tensor,
    exp,
    matmul,
    sigmoid_values,
    silu,
    slice_cols,
    softplus,
)

DEFAULT_STATE_SIZE = 16
_DELTA_BIAS_INIT = math.log(math.expm1(0.05))  # softplus(bias) ~ 0.05


@dataclass
class MgfParams:
    """Learnable tensors of the fusion block for embedding width D and
    state size N."""

    w_in: Tensor      # (D, 2D): content columns then gate columns
    a_log: Tensor     # (D, N): state decay, A = -exp(a_log)
    w_b: Tensor       # (D, N)
    w_c: Tensor       # (D, N)
    w_delta: Tensor   # (D, 1)
    b_delta: Tensor   # (1, 1)
    d_skip: Tensor    # (1, D)
    w_out: Tensor     # (D, D)
    width: int
    n_state: int

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Tensor]]:
        return [
            (f"{prefix}w_in", self.w_in),
            (f"{prefix}a_log", self.a_log),
            (f"{prefix}w_b", self.w_b),
            (f"{prefix}w_c", self.w_c),
            (f"{prefix}w_delta", self.w_delta),
            (f"{prefix}b_delta", self.b_delta),
            (f"{prefix}d_skip", self.d_skip),
            (f"{prefix}w_out", self.w_out),
        ]


def init_mgf(width: int, n_state: int, rng: np.random.Generator) -> MgfParams:
    bound = 1.0 / math.sqrt(width)

    def draw(shape):
        return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)

    a_log = np.tile(np.log(np.arange(1, n_state + 1, dtype=np.float64)), (width, 1))
    return MgfParams(
        w_in=draw((width, 2 * width)),
        a_log=Tensor(a_log, requires_grad=True),
        w_b=draw((width, n_state)),
        w_c=draw((width, n_state)),
        w_delta=draw((width, 1)),
        b_delta=Tensor([[_DELTA_BIAS_INIT]], requires_grad=True),
        d_skip=Tensor(np.ones((1, width)), requires_grad=True),
        w_out=draw((width, width)),
        width=width,
        n_state=n_state,
    )


# -- flattening ---------------------------------------------------------


@dataclass
class NodeSequence:
    """Node embeddings in canonical sequence order plus the permutation
    that produced them (sequence row t came from node order[t])."""

    values: np.ndarray
    order: np.ndarray

    def unflatten(self, seq_values: np.ndarray | None = None) -> np.ndarray:
        values = self.values if seq_values is None else seq_values
        out = np.empty_like(values)
        out[self.order] = values
        return out


def canonical_order(modality_of) -> np.ndarray:
    return np.argsort(np.asarray(modality_of), kind="stable")


def flatten(graph_states: np.ndarray, modality_of) -> NodeSequence:
    """Emit node states as a sequence in canonical order."""
    order = canonical_order(modality_of)
    return NodeSequence(values=np.asarray(graph_states)[order], order=order)


# -- the recurrence core (fused tape op) ---------------------------------


def _scan_recurrence(c, delta, bm, cm, a, skip):
    """Forward recurrence on (batch, M, ...) arrays; returns outputs and
    the per-step states needed for the backward pass.

    The decay factors and input terms are batched outside the loop; the
    per-element arithmetic is exactly the per-step recurrence, so the
    result is bit-identical to the naive form.
    """
    batch, seq, width = c.shape
    n_state = a.shape[1]
    decay = np.exp(delta[:, :, :, None] * a)              # (B, T, D, N)
    drive = (delta * bm)[:, :, None, :] * c[:, :, :, None]
    h = np.zeros((batch, width, n_state))
    hs = np.empty((batch, seq, width, n_state))
    for t in range(seq):
        h = decay[:, t] * h + drive[:, t]
        hs[:, t] = h
    ys = (hs * cm[:, :, None, :]).sum(axis=3) + skip * c
    return ys, hs, decay


def _scan_backward(grad_y, hs, decay, c, delta, bm, cm, a, skip):
    batch, seq, width = c.shape
    n_state = a.shape[1]
    # y_t = (h_t * cm_t).sum(-1) + skip * c_t
    g_skip = np.einsum("btd,btd->d", grad_y, c)[None, :]
    g_c = grad_y * skip
    g_cm = np.einsum("btd,btdn->btn", grad_y, hs)
    # dL/dh_t = gy_t (x) cm_t + decay_{t+1} * dL/dh_{t+1}, reverse time
    g_hs = np.empty_like(hs)
    g_h = grad_y[:, -1, :, None] * cm[:, -1, None, :]
    g_hs[:, -1] = g_h
    for t in range(seq - 2, -1, -1):
        g_h = grad_y[:, t, :, None] * cm[:, t, None, :] + decay[:, t + 1] * g_h
        g_hs[:, t] = g_h
    # h_t = decay_t * h_{t-1} + c_t (x) (delta_t * bm_t)
    h_prev = np.zeros_like(hs)
    h_prev[:, 1:] = hs[:, :-1]
    g_decay = g_hs * h_prev
    g_delta = np.einsum("btdn,btdn,dn->bt", g_decay, decay, a)[:, :, None]
    g_a = np.einsum("btdn,btdn,bt->dn", g_decay, decay, delta[:, :, 0])
    drive = delta * bm                                     # (B, T, N)
    g_c += np.einsum("btdn,btn->btd", g_hs, drive)
    g_drive = np.einsum("btdn,btd->btn", g_hs, c)
    g_delta += (g_drive * bm).sum(axis=2, keepdims=True)
    g_bm = g_drive * delta
    return g_c, g_delta, g_bm, g_cm, g_a, g_skip


def scan_core(
    c: Tensor, delta: Tensor, bm: Tensor, cm: Tensor, a: Tensor, skip: Tensor,
    batch: int, seq: int,
) -> Tensor:
    """Sequential selective-scan recurrence as one tape node.

    Inputs are row-stacked sequences: c (batch*seq, D), delta
    (batch*seq, 1), bm/cm (batch*seq, N); a is (D, N) and skip (1, D).
    The backward pass runs the recurrence adjoint in reverse time.
    """
    width = c.shape[1]
    n_state = a.shape[1]
    c3 = c.values.reshape(batch, seq, width)
    d3 = delta.values.reshape(batch, seq, 1)
    b3 = bm.values.reshape(batch, seq, n_state)
    m3 = cm.values.reshape(batch, seq, n_state)
    ys, hs, decay = _scan_recurrence(c3, d3, b3, m3, a.values, skip.values)

    def bw(grad):
        g_c, g_delta, g_bm, g_cm, g_a, g_skip = _scan_backward(
            grad.reshape(batch, seq, width), hs, decay,
            c3, d3, b3, m3, a.values, skip.values,
        )
        if c.requires_grad:
            c._accumulate(g_c.reshape(batch * seq, width))
        if delta.requires_grad:
            delta._accumulate(g_delta.reshape(batch * seq, 1))
        if bm.requires_grad:
            bm._accumulate(g_bm.reshape(batch * seq, n_state))
        if cm.requires_grad:
            cm._accumulate(g_cm.reshape(batch * seq, n_state))
        if a.requires_grad:
            a._accumulate(g_a)
        if skip.requires_grad:
            skip._accumulate(g_skip)

    return Tensor._from_op(
        ys.reshape(batch * seq, width), (c, delta, bm, cm, a, skip), bw
    )


# -- the full block -------------------------------------------------------


def selective_scan(params: MgfParams, x: Tensor, batch: int = 1) -> Tensor:
    """Run the gated selective-scan block over row-stacked sequences.

    ``x`` holds ``batch`` sequences of equal length in canonical node
    order, stacked as (batch * seq, D). Returns the same shape.
    """
    rows, width = x.shape
    if width != params.width:
        raise DimensionError(
            f"scan input width {width} does not match block width {params.width}"
        )
    if rows % batch != 0:
        raise DimensionError(f"{rows} rows do not split into {batch} sequences")
    seq = rows // batch
    proj = matmul(x, params.w_in)
    content = slice_cols(proj, 0, width)
    gate = slice_cols(proj, width, 2 * width)
    delta = softplus(matmul(content, params.w_delta) + params.b_delta)
    bm = matmul(content, params.w_b)
    cm = matmul(content, params.w_c)
    a = -exp(params.a_log)
    y = scan_core(content, delta, bm, cm, a, params.d_skip, batch, seq)
    gated = y * silu(gate)
    return matmul(gated, params.w_out)


def mgf_forward(params: MgfParams, graph_states: Tensor, batch: int = 1) -> Tensor:
    """Residual fusion: states + scan(states), same shape in and out.

    Rows must already be in canonical node order (see ``flatten``).
    """
    if graph_states.shape[1] != params.width:
        raise DimensionError(
            f"node states have width {graph_states.shape[1]}, "
            f"fusion block expects {params.width}"
        )
    return graph_states + selective_scan(params, graph_states, batch=batch)


def reference_scan(params: MgfParams, x: np.ndarray) -> np.ndarray:
    """Straight-line single-sequence implementation of the block, used as
    the oracle for the tape path. Plain numpy, no autodiff."""
    x = np.asarray(x, dtype=np.float64)
    seq, width = x.shape
    n_state = params.n_state
    proj = x @ params.w_in.values
    content = proj[:, :width].copy()
    gate = proj[:, width:].copy()
    delta = np.logaddexp(0.0, content @ params.w_delta.values + params.b_delta.values)
    bm = content @ params.w_b.values
    cm = content @ params.w_c.values
    a = -np.exp(params.a_log.values)
    skip = params.d_skip.values[0]
    h = np.zeros((width, n_state))
    y = np.empty((seq, width))
    for t in range(seq):
        decay = np.exp(delta[t][:, None] * a)
        drive = delta[t] * bm[t]
        h = decay * h + content[t][:, None] * drive[None, :]
        y[t] = (h * cm[t][None, :]).sum(axis=1) + skip * content[t]
    gated = y * (gate * sigmoid_values(gate))
    return gated @ params.w_out.values

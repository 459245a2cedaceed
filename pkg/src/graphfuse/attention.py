"""Edge-aware multi-head attention over feature graphs.

Per head, a node attends over its in-neighbors with scores
(Q_i . (K_j + w_ij)) / sqrt(d_head), the scalar edge weight added to
every key coordinate, and aggregates alpha_ij * (V_j + w_ij). Head
outputs are concatenated and the layer output is message || input, so
the output width is n_heads * d_head + d_in.

Edges are grouped by destination with a stable sort, so each node's
neighbor contributions are summed in the order the edge list gives
them; consistently relabeling nodes permutes outputs bitwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DimensionError
from .tensor import (
    RowPlan,
    Tensor,
    concat,
    exp,
    gather_rows,
    make_row_plan,
    matmul,
    segment_sum,
)


@dataclass
class AttentionLayerParams:
    """Learnable projections, one (d_in, d_head) block per head packed
    column-wise into a single matrix per role."""

    w_query: Tensor
    w_key: Tensor
    w_value: Tensor
    n_heads: int
    d_head: int
    d_in: int

    @property
    def out_dim(self) -> int:
        return self.n_heads * self.d_head + self.d_in

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Tensor]]:
        return [
            (f"{prefix}w_query", self.w_query),
            (f"{prefix}w_key", self.w_key),
            (f"{prefix}w_value", self.w_value),
        ]


def init_attention(
    d_in: int, n_heads: int, d_head: int, rng: np.random.Generator
) -> AttentionLayerParams:
    bound = 1.0 / math.sqrt(d_in)
    shape = (d_in, n_heads * d_head)

    def draw():
        return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)

    return AttentionLayerParams(
        w_query=draw(), w_key=draw(), w_value=draw(),
        n_heads=n_heads, d_head=d_head, d_in=d_in,
    )


class EdgeTopology:
    """Edge arrays plus the index plans the layer needs.

    Edges are stably sorted by destination; the within-destination order
    is whatever the input edge list had.
    """

    def __init__(self, src, dst, weight, num_nodes: int):
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        weight = np.asarray(weight, dtype=np.float64)
        order = np.argsort(dst, kind="stable")
        self.src = src[order]
        self.dst = dst[order]
        self.weight_col = Tensor(weight[order].reshape(-1, 1))
        self.num_nodes = int(num_nodes)
        self.plan_src = make_row_plan(self.src, self.num_nodes)
        self.plan_dst = make_row_plan(self.dst, self.num_nodes)
        self.seg_starts = np.searchsorted(self.dst, np.arange(self.num_nodes))

    @classmethod
    def from_graph(cls, graph) -> "EdgeTopology":
        return cls(graph.edge_src, graph.edge_dst, graph.edge_weight, graph.num_nodes)

    @property
    def num_edges(self) -> int:
        return self.src.size

    def tile(self, copies: int) -> "EdgeTopology":
        """Replicate the topology for a batch of graphs stacked as one
        block-diagonal graph (graph g occupies nodes [g*M, (g+1)*M))."""
        if copies == 1:
            return self
        m, e = self.num_nodes, self.num_edges
        offsets = np.repeat(np.arange(copies, dtype=np.int64) * m, e)
        return EdgeTopology(
            np.tile(self.src, copies) + offsets,
            np.tile(self.dst, copies) + offsets,
            np.tile(self.weight_col.values.ravel(), copies),
            m * copies,
        )

    def segment_max(self, values: np.ndarray) -> np.ndarray:
        """Per-destination column maxima of edge-aligned values; zero for
        nodes with no in-edges (never read back for those)."""
        out = np.zeros((self.num_nodes, values.shape[1]), dtype=np.float64)
        if self.num_edges == 0:
            return out
        counts = np.diff(np.append(self.seg_starts, self.num_edges))
        nonempty = counts > 0
        starts = self.seg_starts[nonempty]
        out[nonempty] = np.maximum.reduceat(values, starts, axis=0)
        return out


@lru_cache(maxsize=None)
def _head_sum_matrix(n_heads: int, d_head: int) -> Tensor:
    """(n_heads*d_head, n_heads) selector: column h sums head h's block."""
    m = np.zeros((n_heads * d_head, n_heads))
    for h in range(n_heads):
        m[h * d_head:(h + 1) * d_head, h] = 1.0
    return Tensor(m)


@lru_cache(maxsize=None)
def _head_repeat_matrix(n_heads: int, d_head: int) -> Tensor:
    """(n_heads, n_heads*d_head) selector: broadcasts one scalar per head
    across that head's block."""
    return Tensor(_head_sum_matrix(n_heads, d_head).values.T.copy())


def attention_weights(
    layer: AttentionLayerParams, node_states: Tensor, topo: EdgeTopology
) -> Tensor:
    """Per-edge, per-head attention coefficients, softmax-normalized over
    each destination node's in-neighbors."""
    if node_states.shape[1] != layer.d_in:
        raise DimensionError(
            f"node states have width {node_states.shape[1]}, layer expects {layer.d_in}"
        )
    q = matmul(node_states, layer.w_query)
    k = matmul(node_states, layer.w_key)
    q_edge = gather_rows(q, topo.plan_dst)
    k_edge = gather_rows(k, topo.plan_src) + topo.weight_col
    prod = q_edge * k_edge
    scores = matmul(prod, _head_sum_matrix(layer.n_heads, layer.d_head))
    scaled = scores * (1.0 / math.sqrt(layer.d_head))
    # Constant per-destination max shift keeps exp in range; softmax is
    # shift invariant so the gradient path skips it.
    shift = topo.segment_max(scaled.values)[topo.dst]
    e = exp(scaled - Tensor(shift))
    denom = segment_sum(e, topo.plan_dst)
    return e / gather_rows(denom, topo.plan_dst)


def aggregate(
    layer: AttentionLayerParams,
    node_states: Tensor,
    topo: EdgeTopology,
    alpha: Tensor,
) -> Tensor:
    """Weighted message aggregation followed by the skip concatenation.

    Nodes with no in-neighbors get a zero message row.
    """
    v = matmul(node_states, layer.w_value)
    v_edge = gather_rows(v, topo.plan_src) + topo.weight_col
    alpha_wide = matmul(alpha, _head_repeat_matrix(layer.n_heads, layer.d_head))
    message = segment_sum(alpha_wide * v_edge, topo.plan_dst)
    return concat(message, node_states, axis=1)


def layer_forward(
    layer: AttentionLayerParams, node_states: Tensor, topo: EdgeTopology
) -> Tensor:
    alpha = attention_weights(layer, node_states, topo)
    return aggregate(layer, node_states, topo, alpha)

"""The full network: two edge-aware attention layers with LeakyReLU
between them, the residual fusion block, mean pooling over nodes, and a
linear two-logit head.

Node width grows 1 -> n_heads*d_head + 1 -> n_heads*d_head + previous;
the fusion block keeps that width and the head maps it to 2 logits.

Training batches stack graphs that share one topology block-diagonally;
a single graph is just the batch=1 case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .attention import AttentionLayerParams, EdgeTopology, init_attention, layer_forward
from .config import RunConfig
from .errors import ContractError
from .fusion import MgfParams, init_mgf, mgf_forward
from .graphbuild import FeatureGraph
from .tensor import (
    RowPlan,
    Tensor,
    exp,
    leaky_relu,
    log,
    make_row_plan,
    matmul,
    segment_sum,
    softmax,
)


@dataclass
class ModelParams:
    layer1: AttentionLayerParams
    layer2: AttentionLayerParams
    mgf: MgfParams
    head_w: Tensor
    head_b: Tensor

    @property
    def embed_dim(self) -> int:
        return self.mgf.width

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        out.extend(self.layer1.named_parameters("layer1."))
        out.extend(self.layer2.named_parameters("layer2."))
        out.extend(self.mgf.named_parameters("mgf."))
        out.append(("head.weight", self.head_w))
        out.append(("head.bias", self.head_b))
        return out

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.values.copy() for name, t in self.named_parameters()}

    def load_state_arrays(self, state: dict[str, np.ndarray]) -> None:
        for name, t in self.named_parameters():
            t.values = np.array(state[name], dtype=np.float64, copy=True)

    def zero_grad(self) -> None:
        for _, t in self.named_parameters():
            t.zero_grad()


def init_model(config: RunConfig, rng: np.random.Generator) -> ModelParams:
    width1 = config.n_heads * config.d_head + 1
    width2 = config.n_heads * config.d_head + width1
    layer1 = init_attention(1, config.n_heads, config.d_head, rng)
    layer2 = init_attention(width1, config.n_heads, config.d_head, rng)
    mgf = init_mgf(width2, config.n_state, rng)
    bound = 1.0 / math.sqrt(width2)
    head_w = Tensor(rng.uniform(-bound, bound, size=(width2, 2)), requires_grad=True)
    head_b = Tensor(np.zeros((1, 2)), requires_grad=True)
    return ModelParams(layer1=layer1, layer2=layer2, mgf=mgf,
                       head_w=head_w, head_b=head_b)


@dataclass
class GraphBatch:
    """A stack of graphs sharing one topology: node value column for all
    graphs, the tiled edge structure, and the per-graph pooling plan."""

    node_values: Tensor        # (batch * nodes, 1)
    topology: EdgeTopology     # tiled to the batch
    pool_plan: RowPlan         # node row -> graph index
    batch: int
    nodes_per_graph: int
    labels: np.ndarray | None = None


def make_batch(
    node_matrix: np.ndarray,
    base_topology: EdgeTopology,
    labels=None,
    tiled_cache: dict | None = None,
) -> GraphBatch:
    """Stack (batch, nodes) feature rows into one block-diagonal batch.

    ``tiled_cache`` maps batch size to a previously tiled topology so
    minibatches of a recurring size pay the tiling cost once.
    """
    node_matrix = np.asarray(node_matrix, dtype=np.float64)
    batch, nodes = node_matrix.shape
    if tiled_cache is not None and batch in tiled_cache:
        topo, pool_plan = tiled_cache[batch]
    else:
        topo = base_topology.tile(batch)
        pool_plan = make_row_plan(np.repeat(np.arange(batch), nodes), batch)
        if tiled_cache is not None:
            tiled_cache[batch] = (topo, pool_plan)
    return GraphBatch(
        node_values=Tensor(node_matrix.reshape(-1, 1)),
        topology=topo,
        pool_plan=pool_plan,
        batch=batch,
        nodes_per_graph=nodes,
        labels=None if labels is None else np.asarray(labels, dtype=np.int64),
    )


def graph_to_batch(graph: FeatureGraph) -> GraphBatch:
    """A single graph as a batch of one, canonicalized first."""
    graph = graph.canonicalize()
    topo = EdgeTopology.from_graph(graph)
    return make_batch(graph.node_values.reshape(1, -1), topo)


def forward(params: ModelParams, batch: GraphBatch, config: RunConfig) -> Tensor:
    """Logits for every graph in the batch, shape (batch, 2)."""
    h = layer_forward(params.layer1, batch.node_values, batch.topology)
    h = leaky_relu(h, config.leaky_slope)
    h = layer_forward(params.layer2, h, batch.topology)
    h = leaky_relu(h, config.leaky_slope)
    if not config.no_mgf:
        h = mgf_forward(params.mgf, h, batch=batch.batch)
    pooled = segment_sum(h, batch.pool_plan) * (1.0 / batch.nodes_per_graph)
    return matmul(pooled, params.head_w) + params.head_b


def predict_logits(
    params: ModelParams, graph: FeatureGraph, config: RunConfig
) -> np.ndarray:
    """Two logits for one graph."""
    return forward(params, graph_to_batch(graph), config).values[0]


def predict_proba(params: ModelParams, batch: GraphBatch, config: RunConfig) -> np.ndarray:
    """P(class 1) per graph in the batch."""
    logits = forward(params, batch, config)
    return softmax(logits, axis=1).values[:, 1]


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log likelihood of the true class, stabilized through
    log-sum-exp."""
    labels = np.asarray(labels)
    if labels.ndim != 1 or logits.shape[0] != labels.size:
        raise ContractError(
            f"labels shape {labels.shape} does not match logits {logits.shape}"
        )
    if not np.isin(labels, (0, 1)).all():
        raise ContractError("labels must be 0 or 1")
    shift = logits.values.max(axis=1, keepdims=True)
    shifted = logits - Tensor(shift)
    lse = log(exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - lse
    onehot = np.zeros(logits.shape)
    onehot[np.arange(labels.size), labels] = 1.0
    picked = (log_probs * Tensor(onehot)).sum()
    return picked * (-1.0 / labels.size)

"""Stage 1: turn per-modality feature vectors into weighted feature graphs.

Nodes are individual scalar features, concatenated in modality order.
Edge weights come from a binned plug-in mutual-information estimate
between the two node features over the training split, squashed through
a sigmoid and clipped from below at ``tau``. Nodes within one modality
are fully connected; cross-modality pairs are sampled independently
with probability ``inter_prob`` from a seeded generator.

All statistics (standardization, MI) must be computed from training
indices only; the callers enforce the split, the functions here take it
explicitly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, InvariantError
from .tensor import sigmoid_scalar

DEFAULT_TAU = 0.1
DEFAULT_BINS = 8
DEFAULT_INTER_PROB = 0.2


@dataclass
class PatientRecord:
    """One subject: an ordered list of per-modality feature vectors and a
    binary outcome label."""

    id: str
    modalities: list[np.ndarray]
    label: int

    def __post_init__(self):
        if not self.modalities:
            raise ContractError(f"record {self.id!r} has no modalities")
        self.modalities = [np.asarray(m, dtype=np.float64) for m in self.modalities]
        if self.label not in (0, 1):
            raise ContractError(
                f"record {self.id!r} label must be 0 or 1, got {self.label!r}"
            )

    @property
    def modality_lengths(self) -> list[int]:
        return [m.size for m in self.modalities]


@dataclass
class FeatureStats:
    """Per-feature mean/std from a training split; std below ``eps`` marks
    a degenerate feature whose z-scores are forced to zero."""

    means: list[np.ndarray]
    stds: list[np.ndarray]
    eps: float = 1e-12

    def transform(self, record: PatientRecord) -> PatientRecord:
        out = []
        for values, mean, std in zip(record.modalities, self.means, self.stds):
            z = np.where(std < self.eps, 0.0, (values - mean) / np.where(std < self.eps, 1.0, std))
            out.append(z)
        return PatientRecord(id=record.id, modalities=out, label=record.label)


def standardize(
    dataset: list[PatientRecord], train_indices
) -> tuple[list[PatientRecord], FeatureStats]:
    """Z-score every feature using statistics of the training split only.

    Returns the transformed dataset (all records, held-out ones included,
    scaled with the train statistics) and the statistics themselves.
    """
    train_indices = list(train_indices)
    if not train_indices:
        raise ContractError("standardize needs a nonempty training split")
    _check_uniform_lengths(dataset)
    n_mod = len(dataset[0].modalities)
    means, stds = [], []
    for k in range(n_mod):
        train = np.stack([dataset[i].modalities[k] for i in train_indices])
        means.append(train.mean(axis=0))
        stds.append(train.std(axis=0))
    stats = FeatureStats(means=means, stds=stds)
    return [stats.transform(r) for r in dataset], stats


def _check_uniform_lengths(dataset: list[PatientRecord]) -> None:
    if not dataset:
        raise ContractError("dataset is empty")
    lengths = dataset[0].modality_lengths
    for record in dataset:
        if record.modality_lengths != lengths:
            raise ContractError(
                f"record {record.id!r} has modality lengths "
                f"{record.modality_lengths}, expected {lengths}"
            )


def assemble_nodes(record: PatientRecord) -> tuple[np.ndarray, np.ndarray]:
    """Concatenate modality vectors into the node value column.

    Nodes follow modality order, preserving within-modality order, so the
    total count is the sum of the modality lengths.
    """
    values = np.concatenate(record.modalities)
    modality_of = np.concatenate(
        [np.full(m.size, k, dtype=np.int64) for k, m in enumerate(record.modalities)]
    )
    return values, modality_of


# -- mutual information ----------------------------------------------------


def quantile_bin_codes(xs: np.ndarray, bins: int) -> np.ndarray:
    """Equal-frequency discretization: bin edges at sample quantiles,
    values on an edge fall into the upper bin."""
    edges = np.quantile(xs, [k / bins for k in range(1, bins)])
    return np.searchsorted(edges, xs, side="right")


def _mi_from_codes(cx: np.ndarray, cy: np.ndarray, bins: int) -> float:
    n = cx.size
    joint = np.bincount(cx * bins + cy, minlength=bins * bins).reshape(bins, bins)
    joint = joint / n
    px = joint.sum(axis=1)
    py = joint.sum(axis=0)
    terms = np.zeros_like(joint)
    mask = joint > 0
    denom = np.outer(px, py)
    terms[mask] = joint[mask] * np.log(joint[mask] / denom[mask])
    # Sum diagonal first, then (i, j)/(j, i) pairs together, so swapping the
    # arguments transposes the term matrix without changing the float result.
    total = 0.0
    for i in range(bins):
        total += terms[i, i]
    for i in range(bins):
        for j in range(i + 1, bins):
            total += terms[i, j] + terms[j, i]
    return max(total, 0.0)


def estimate_mi(xs, ys, bins: int = DEFAULT_BINS) -> float:
    """Plug-in mutual information (nats) over an equal-frequency grid.

    Needs at least ``2 * bins`` paired observations; the estimate is
    clamped to be nonnegative.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.size != ys.size:
        raise ContractError(
            f"estimate_mi needs paired samples, got {xs.size} vs {ys.size}"
        )
    minimum = 2 * bins
    if xs.size < minimum:
        raise ContractError(
            f"estimate_mi needs at least {minimum} samples for {bins} bins, got {xs.size}"
        )
    return _mi_from_codes(quantile_bin_codes(xs, bins), quantile_bin_codes(ys, bins), bins)


def estimate_entropy(xs, bins: int = DEFAULT_BINS) -> float:
    """Plug-in entropy (nats) of the equal-frequency discretization."""
    xs = np.asarray(xs, dtype=np.float64)
    codes = quantile_bin_codes(xs, bins)
    p = np.bincount(codes, minlength=bins) / xs.size
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


@dataclass
class MiTable:
    """Pairwise MI estimates between node features, keyed on unordered
    node index pairs; a population statistic of one training split."""

    values: dict[tuple[int, int], float]
    bin_count: int
    binning_mode: str = "equal_frequency"

    def get(self, i: int, j: int) -> float:
        key = (i, j) if i < j else (j, i)
        return self.values[key]

    def pairs(self):
        return sorted(self.values.items())


def compute_mi_table(
    feature_matrix: np.ndarray, pairs, bins: int = DEFAULT_BINS
) -> MiTable:
    """Estimate MI for the requested node pairs from a (samples, nodes)
    matrix of training-split feature values."""
    feature_matrix = np.asarray(feature_matrix, dtype=np.float64)
    n = feature_matrix.shape[0]
    if n < 2 * bins:
        raise ContractError(
            f"MI table needs at least {2 * bins} training samples for {bins} bins, got {n}"
        )
    codes = {}
    values = {}
    for i, j in pairs:
        a, b = (i, j) if i < j else (j, i)
        for idx in (a, b):
            if idx not in codes:
                codes[idx] = quantile_bin_codes(feature_matrix[:, idx], bins)
        values[(a, b)] = _mi_from_codes(codes[a], codes[b], bins)
    return MiTable(values=values, bin_count=bins)


# -- edges and graphs -------------------------------------------------------


def edge_weight(mi: float, tau: float = DEFAULT_TAU) -> float:
    """Sigmoid of the MI value, clipped from below at ``tau``.

    For a valid MI (>= 0) the sigmoid already sits in [0.5, 1), so the
    clip only bites if estimator noise ever pushes a negative through.
    """
    return max(sigmoid_scalar(float(mi)), tau)


def intra_pairs(modality_of: np.ndarray) -> list[tuple[int, int]]:
    pairs = []
    m = len(modality_of)
    for i in range(m):
        for j in range(i + 1, m):
            if modality_of[i] == modality_of[j]:
                pairs.append((i, j))
    return pairs


def cross_pairs(modality_of: np.ndarray) -> list[tuple[int, int]]:
    pairs = []
    m = len(modality_of)
    for i in range(m):
        for j in range(i + 1, m):
            if modality_of[i] != modality_of[j]:
                pairs.append((i, j))
    return pairs


def build_edges(
    modality_of: np.ndarray,
    mi_table: MiTable | None,
    inter_prob: float,
    rng_seed: int,
    tau: float = DEFAULT_TAU,
    uniform_weight: float | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Assemble the directed edge arrays (src, dst, weight).

    Every intra-modality unordered pair is present; each cross-modality
    pair is kept independently with probability ``inter_prob`` drawn from
    a generator seeded with ``rng_seed`` (one draw per pair, in ascending
    pair order, so the topology is a pure function of the seed). Every
    kept pair is emitted in both directions with equal weight. Passing
    ``uniform_weight`` overrides the MI weights (ablation control).
    """
    if not 0.0 < inter_prob <= 1.0:
        raise ContractError(f"inter_prob must lie in (0, 1], got {inter_prob}")
    kept = list(intra_pairs(modality_of))
    crossing = cross_pairs(modality_of)
    if crossing:
        rng = np.random.default_rng(rng_seed)
        draws = rng.random(len(crossing))
        kept.extend(p for p, d in zip(crossing, draws) if d < inter_prob)
    src, dst, weight = [], [], []
    for i, j in kept:
        if uniform_weight is not None:
            w = float(uniform_weight)
        else:
            w = edge_weight(mi_table.get(i, j), tau=tau)
        src.extend((i, j))
        dst.extend((j, i))
        weight.extend((w, w))
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    weight = np.asarray(weight, dtype=np.float64)
    order = np.lexsort((dst, src))
    return src[order], dst[order], weight[order]


@dataclass
class FeatureGraph:
    """Weighted feature graph for one patient: a scalar value per node,
    a node-to-modality map, and symmetric directed edges."""

    node_values: np.ndarray
    modality_of: np.ndarray
    edge_src: np.ndarray
    edge_dst: np.ndarray
    edge_weight: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def num_nodes(self) -> int:
        return self.node_values.size

    @property
    def num_edges(self) -> int:
        return self.edge_src.size

    def edges(self):
        return list(zip(self.edge_src.tolist(), self.edge_dst.tolist(), self.edge_weight.tolist()))

    def canonicalize(self) -> "FeatureGraph":
        """Reorder nodes to modality-major canonical order (stable within
        modality) and relabel edges to match."""
        perm = np.argsort(self.modality_of, kind="stable")
        inverse = np.empty_like(perm)
        inverse[perm] = np.arange(perm.size)
        return FeatureGraph(
            node_values=self.node_values[perm],
            modality_of=self.modality_of[perm],
            edge_src=inverse[self.edge_src],
            edge_dst=inverse[self.edge_dst],
            edge_weight=self.edge_weight.copy(),
            meta=dict(self.meta),
        )

    def validate(self, tau: float = DEFAULT_TAU) -> None:
        """Check structural invariants; raises InvariantError on failure."""
        m = self.num_nodes
        if self.modality_of.size != m:
            raise InvariantError("modality_of length disagrees with node count")
        if np.any(self.edge_src == self.edge_dst):
            raise InvariantError("self loop present")
        uniform = self.meta.get("no_mi", False)
        if not uniform:
            if np.any(self.edge_weight < tau) or np.any(self.edge_weight >= 1.0):
                raise InvariantError(f"edge weight outside [{tau}, 1)")
        forward = {}
        for s, d, w in zip(self.edge_src, self.edge_dst, self.edge_weight):
            forward[(int(s), int(d))] = float(w)
        for (s, d), w in forward.items():
            if forward.get((d, s)) != w:
                raise InvariantError(f"edge ({s}, {d}) lacks an equal-weight reverse")
        present = set(forward)
        for i, j in intra_pairs(self.modality_of):
            if (i, j) not in present:
                raise InvariantError(f"intra-modality pair ({i}, {j}) not connected")


def build_graph(
    record: PatientRecord,
    mi_table: MiTable | None,
    inter_prob: float = DEFAULT_INTER_PROB,
    rng_seed: int = 0,
    tau: float = DEFAULT_TAU,
    uniform_weight: float | None = None,
    edges: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
) -> FeatureGraph:
    """Compose node assembly and edge construction into a FeatureGraph.

    Passing ``edges`` reuses a topology built once for a whole split
    (identical to what build_edges would produce for the same seed).
    """
    node_values, modality_of = assemble_nodes(record)
    if edges is None:
        edges = build_edges(
            modality_of, mi_table, inter_prob, rng_seed, tau=tau,
            uniform_weight=uniform_weight,
        )
    src, dst, weight = edges
    meta = {
        "seed": int(rng_seed),
        "bins": int(mi_table.bin_count) if mi_table is not None else None,
        "p": float(inter_prob),
        "tau": float(tau),
    }
    if uniform_weight is not None:
        meta["no_mi"] = True
    return FeatureGraph(
        node_values=node_values,
        modality_of=modality_of,
        edge_src=src.copy(),
        edge_dst=dst.copy(),
        edge_weight=weight.copy(),
        meta=meta,
    )


# -- serialization ----------------------------------------------------------


def _fmt(x: float) -> str:
    """17 significant digits: enough for float64 round trips."""
    if math.isnan(x) or math.isinf(x):
        raise InvariantError(f"refusing to serialize non-finite value {x}")
    return format(float(x), ".17g")


def graph_to_json(graph: FeatureGraph) -> str:
    """Serialize a graph with bit-exact decimal float encoding."""
    nodes = ", ".join(_fmt(v) for v in graph.node_values)
    modality = ", ".join(str(int(v)) for v in graph.modality_of)
    edges = ", ".join(
        f"[{int(s)}, {int(d)}, {_fmt(w)}]"
        for s, d, w in zip(graph.edge_src, graph.edge_dst, graph.edge_weight)
    )
    meta = json.dumps(graph.meta, sort_keys=True)
    return (
        "{\n"
        f'  "nodes": [{nodes}],\n'
        f'  "modality_of": [{modality}],\n'
        f'  "edges": [{edges}],\n'
        f'  "meta": {meta}\n'
        "}\n"
    )


def graph_from_json(text: str) -> FeatureGraph:
    doc = json.loads(text)
    edges = doc["edges"]
    return FeatureGraph(
        node_values=np.asarray(doc["nodes"], dtype=np.float64),
        modality_of=np.asarray(doc["modality_of"], dtype=np.int64),
        edge_src=np.asarray([e[0] for e in edges], dtype=np.int64),
        edge_dst=np.asarray([e[1] for e in edges], dtype=np.int64),
        edge_weight=np.asarray([e[2] for e in edges], dtype=np.float64),
        meta=doc.get("meta", {}),
    )


def mi_table_to_json(table: MiTable) -> str:
    entries = ", ".join(
        f"[{i}, {j}, {_fmt(v)}]" for (i, j), v in table.pairs()
    )
    return (
        "{\n"
        f'  "bins": {table.bin_count},\n'
        f'  "mode": "{table.binning_mode}",\n'
        f'  "entries": [{entries}]\n'
        "}\n"
    )


def mi_table_from_json(text: str) -> MiTable:
    doc = json.loads(text)
    values = {(int(i), int(j)): float(v) for i, j, v in doc["entries"]}
    return MiTable(values=values, bin_count=int(doc["bins"]), binning_mode=doc["mode"])

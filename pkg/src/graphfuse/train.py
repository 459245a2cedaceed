"""Training and evaluation: Adam with bias correction, per-fold stage-1
artifacts built from that fold's training indices only, early stopping
on validation loss with best-epoch restore, stratified k-fold
cross-validation, and the component-ablation harness.

All randomness flows from the config seed through named SeedSequence
spawns, so every result is a pure function of (dataset, config).
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .attention import EdgeTopology
from .config import RunConfig, config_fingerprint
from .errors import ContractError
from .graphbuild import (
    MiTable,
    PatientRecord,
    assemble_nodes,
    build_edges,
    compute_mi_table,
    cross_pairs,
    intra_pairs,
    standardize,
)
from .metrics import compute_metrics, mean_metrics
from .model import (
    GraphBatch,
    ModelParams,
    cross_entropy,
    forward,
    init_model,
    make_batch,
    predict_proba,
)


# -- seeding ----------------------------------------------------------------


def _spawn(seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=seed, spawn_key=key)


def _seed_int(seq: np.random.SeedSequence) -> int:
    return int(seq.generate_state(1, dtype=np.uint64)[0])


# -- fold partition -----------------------------------------------------


def stratified_folds(
    dataset: list[PatientRecord], folds: int, seed: int
) -> list[tuple[list[int], list[int]]]:
    """Disjoint stratified validation folds keyed on record ids.

    Records are ordered by id, shuffled per class with a seeded
    generator, and dealt round-robin, so fold membership is independent
    of the dataset's in-memory order.
    """
    if len(dataset) < folds:
        raise ContractError(f"need at least {folds} records, got {len(dataset)}")
    by_id = sorted(range(len(dataset)), key=lambda i: dataset[i].id)
    rng = np.random.default_rng(_spawn(seed, 0))
    assignment = np.empty(len(dataset), dtype=np.int64)
    for label in (0, 1):
        members = [i for i in by_id if dataset[i].label == label]
        if 0 < len(members) < folds:
            raise ContractError(
                f"class {label} has only {len(members)} records, need {folds} for {folds} folds"
            )
        members = list(np.asarray(members)[rng.permutation(len(members))])
        for pos, idx in enumerate(members):
            assignment[idx] = pos % folds
    out = []
    for fold in range(folds):
        val = [i for i in range(len(dataset)) if assignment[i] == fold]
        train = [i for i in range(len(dataset)) if assignment[i] != fold]
        out.append((train, val))
    return out


# -- stage-1 per fold ----------------------------------------------------


@dataclass
class FoldArtifacts:
    """Everything stage 1 produces for one fold: standardized features,
    the MI table, and the (shared) edge topology."""

    feature_matrix: np.ndarray            # (records, nodes), standardized
    modality_of: np.ndarray
    mi_table: MiTable | None
    edge_src: np.ndarray
    edge_dst: np.ndarray
    edge_weight: np.ndarray
    topology_seed: int
    stats_means: list[np.ndarray]
    stats_stds: list[np.ndarray]

    @property
    def num_nodes(self) -> int:
        return self.modality_of.size

    def topology(self) -> EdgeTopology:
        return EdgeTopology(self.edge_src, self.edge_dst, self.edge_weight, self.num_nodes)


def prepare_fold(
    dataset: list[PatientRecord],
    train_indices,
    config: RunConfig,
    fold_index: int = 0,
) -> FoldArtifacts:
    """Build the fold's stage-1 artifacts from its training indices only."""
    train_indices = list(train_indices)
    scaled, stats = standardize(dataset, train_indices)
    _, modality_of = assemble_nodes(scaled[0])
    rows = np.stack([assemble_nodes(r)[0] for r in scaled])
    topo_seed = _seed_int(_spawn(config.seed, 1, fold_index, 0))
    if config.no_mi:
        mi_table = None
        edges = build_edges(
            modality_of, None, config.inter_prob, topo_seed,
            tau=config.tau, uniform_weight=1.0,
        )
    else:
        pairs = intra_pairs(modality_of) + cross_pairs(modality_of)
        mi_table = compute_mi_table(rows[train_indices], pairs, bins=config.bins)
        edges = build_edges(
            modality_of, mi_table, config.inter_prob, topo_seed, tau=config.tau,
        )
    return FoldArtifacts(
        feature_matrix=rows,
        modality_of=modality_of,
        mi_table=mi_table,
        edge_src=edges[0],
        edge_dst=edges[1],
        edge_weight=edges[2],
        topology_seed=topo_seed,
        stats_means=stats.means,
        stats_stds=stats.stds,
    )


# -- Adam -------------------------------------------------------------------


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdamState":
        names = [name for name, _ in params.named_parameters()]
        return cls(
            m={n: None for n in names},
            v={n: None for n in names},
        )


def adam_step(params: ModelParams, state: AdamState, config: RunConfig) -> None:
    """One bias-corrected Adam update from the gradients currently on the
    parameters; missing gradients count as zero."""
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    correction1 = 1.0 - b1 ** state.t
    correction2 = 1.0 - b2 ** state.t
    for name, tensor in params.named_parameters():
        grad = tensor.grad
        if grad is None:
            grad = np.zeros_like(tensor.values)
        if state.m[name] is None:
            state.m[name] = np.zeros_like(tensor.values)
            state.v[name] = np.zeros_like(tensor.values)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * grad
        v *= b2
        v += (1.0 - b2) * grad * grad
        m_hat = m / correction1
        v_hat = v / correction2
        tensor.values = tensor.values - config.learning_rate * m_hat / (
            np.sqrt(v_hat) + config.adam_eps
        )


# -- training ----------------------------------------------------------


@dataclass
class FoldResult:
    metrics: dict
    best_epoch: int
    epochs_run: int
    best_state: dict[str, np.ndarray]
    val_losses: list[float] = field(default_factory=list)


@contextmanager
def eval_mode(params: ModelParams):
    """Temporarily clear requires_grad so evaluation skips tape building."""
    tensors = [t for _, t in params.named_parameters()]
    saved = [t.requires_grad for t in tensors]
    for t in tensors:
        t.requires_grad = False
    try:
        yield
    finally:
        for t, flag in zip(tensors, saved):
            t.requires_grad = flag


def _evaluate_loss(params, batch: GraphBatch, config) -> float:
    with eval_mode(params):
        logits = forward(params, batch, config)
    return cross_entropy(logits, batch.labels).item()


def train_fold(
    dataset: list[PatientRecord],
    fold_split: tuple[list[int], list[int]],
    config: RunConfig,
    fold_index: int = 0,
    artifacts: FoldArtifacts | None = None,
) -> FoldResult:
    """Train one fold and evaluate it at the best-validation-loss epoch.

    Stage-1 statistics come from the fold's training indices; validation
    loss is tracked every epoch and training stops once it has failed to
    improve for ``patience`` consecutive epochs.
    """
    train_idx, val_idx = list(fold_split[0]), list(fold_split[1])
    if not train_idx or not val_idx:
        raise ContractError("fold split needs nonempty train and validation parts")
    if set(train_idx) & set(val_idx):
        raise ContractError("fold split is not disjoint")
    if artifacts is None:
        artifacts = prepare_fold(dataset, train_idx, config, fold_index)
    labels = np.asarray([r.label for r in dataset], dtype=np.int64)
    topo = artifacts.topology()
    cache: dict = {}

    train_rows = artifacts.feature_matrix[train_idx]
    train_labels = labels[train_idx]
    val_batch = make_batch(
        artifacts.feature_matrix[val_idx], topo, labels[val_idx], cache
    )

    init_rng = np.random.default_rng(_spawn(config.seed, 1, fold_index, 1))
    params = init_model(config, init_rng)
    epoch_rng = np.random.default_rng(_spawn(config.seed, 1, fold_index, 2))
    state = AdamState.for_params(params)

    best_loss = np.inf
    best_state = params.state_arrays()
    best_epoch = 0
    stale = 0
    val_losses = []
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        order = epoch_rng.permutation(len(train_idx))
        for start in range(0, len(order), config.batch_size):
            chunk = order[start:start + config.batch_size]
            batch = make_batch(train_rows[chunk], topo, train_labels[chunk], cache)
            logits = forward(params, batch, config)
            loss = cross_entropy(logits, batch.labels)
            params.zero_grad()
            loss.backward()
            adam_step(params, state, config)
        val_loss = _evaluate_loss(params, val_batch, config)
        val_losses.append(val_loss)
        if val_loss < best_loss:
            best_loss = val_loss
            best_state = params.state_arrays()
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break

    params.load_state_arrays(best_state)
    with eval_mode(params):
        scores = predict_proba(params, val_batch, config)
    fold_metrics = compute_metrics(scores, labels[val_idx])
    fold_metrics["val_loss"] = best_loss
    return FoldResult(
        metrics=fold_metrics,
        best_epoch=best_epoch,
        epochs_run=epoch,
        best_state=best_state,
        val_losses=val_losses,
    )


# -- cross-validation ------------------------------------------------------


@dataclass
class MetricsReport:
    per_fold: list[dict]
    mean: dict
    config: dict
    fingerprint: str
    seed: int
    variant: str = "full"

    def to_doc(self) -> dict:
        return {
            "variant": self.variant,
            "seed": self.seed,
            "fingerprint": self.fingerprint,
            "config": self.config,
            "per_fold": self.per_fold,
            "mean": self.mean,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "MetricsReport":
        return cls(
            per_fold=doc["per_fold"],
            mean=doc["mean"],
            config=doc["config"],
            fingerprint=doc["fingerprint"],
            seed=doc["seed"],
            variant=doc.get("variant", "full"),
        )


def _run_fold_task(args):
    dataset, split, config, fold_index = args
    result = train_fold(dataset, split, config, fold_index)
    return result.metrics, result.best_epoch, result.epochs_run, result.best_state


def cross_validate(
    dataset: list[PatientRecord],
    config: RunConfig,
    manifest_doc: dict | None = None,
    jobs: int = 1,
    variant: str | None = None,
    collect_states: list | None = None,
) -> MetricsReport:
    """Stratified k-fold evaluation of the two-stage pipeline.

    Fold partitioning, stage-1 statistics, initialization, and batch
    order all derive from the config seed, so repeated runs agree
    bit for bit. Folds are independent; ``jobs > 1`` runs them in
    separate processes with identical results.
    """
    splits = stratified_folds(dataset, config.folds, config.seed)
    tasks = [(dataset, split, config, k) for k, split in enumerate(splits)]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_fold_task, tasks))
    else:
        results = [_run_fold_task(t) for t in tasks]
    per_fold = []
    for k, (fold_metrics, best_epoch, epochs_run, best_state) in enumerate(results):
        entry = dict(fold_metrics)
        entry["fold"] = k
        entry["best_epoch"] = best_epoch
        entry["epochs_run"] = epochs_run
        per_fold.append(entry)
        if collect_states is not None:
            collect_states.append(best_state)
    if variant is None:
        variant = _variant_name(config)
    return MetricsReport(
        per_fold=per_fold,
        mean=mean_metrics(per_fold),
        config=config.to_dict(),
        fingerprint=config_fingerprint(config, manifest_doc),
        seed=config.seed,
        variant=variant,
    )


def _variant_name(config: RunConfig) -> str:
    if config.no_mi and config.no_mgf:
        return "no_mi+no_mgf"
    if config.no_mi:
        return "no_mi"
    if config.no_mgf:
        return "no_mgf"
    return "full"


ABLATION_VARIANTS = ("full", "no_mi", "no_mgf")


def run_ablation(
    dataset: list[PatientRecord],
    config: RunConfig,
    manifest_doc: dict | None = None,
    jobs: int = 1,
) -> dict[str, MetricsReport]:
    """Run the full model and both single-component removals under
    identical seeds; returns one report per variant."""
    reports = {}
    for name in ABLATION_VARIANTS:
        variant_config = config.replace(
            no_mi=(name == "no_mi"), no_mgf=(name == "no_mgf")
        )
        reports[name] = cross_validate(
            dataset, variant_config, manifest_doc, jobs=jobs, variant=name
        )
    return reports

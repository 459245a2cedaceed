"""Command-line entry points.

Commands: build-graphs, cv, ablate, synth, report. All state flows
through flags and files; every run is reproducible from --seed. Exit
codes: 0 success, 2 input or contract error, 3 internal invariant
violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, config_fingerprint
from .checkpoint import save_checkpoint
from .data import load_dataset, load_manifest
from .errors import ContractError, InvariantError
from .graphbuild import build_graph, graph_to_json, mi_table_to_json
from .report import ablation_table, report_from_json, report_to_json, report_to_table
from .synth import SynthSpec, write_dataset
from .train import cross_validate, prepare_fold, run_ablation, stratified_folds


def _load_config(args) -> RunConfig:
    if args.config:
        config = RunConfig.from_json(Path(args.config).read_text(encoding="utf-8"))
    else:
        config = RunConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "no_mi", False):
        overrides["no_mi"] = True
    if getattr(args, "no_mgf", False):
        overrides["no_mgf"] = True
    return config.replace(**overrides) if overrides else config


def _load_inputs(args):
    manifest = load_manifest(args.manifest)
    dataset = load_dataset(manifest, Path(args.manifest).parent)
    return manifest, dataset


def cmd_build_graphs(args) -> int:
    config = _load_config(args)
    manifest, dataset = _load_inputs(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    splits = stratified_folds(dataset, config.folds, config.seed)
    weight_histogram = np.zeros(10, dtype=np.int64)
    summary_folds = []
    for k, (train_idx, _) in enumerate(splits):
        artifacts = prepare_fold(dataset, train_idx, config, k)
        fold_dir = out / f"fold_{k}"
        fold_dir.mkdir(exist_ok=True)
        if artifacts.mi_table is not None:
            (fold_dir / "mi_table.json").write_text(
                mi_table_to_json(artifacts.mi_table), encoding="utf-8"
            )
        edges = (artifacts.edge_src, artifacts.edge_dst, artifacts.edge_weight)
        for i, record in enumerate(dataset):
            graph = build_graph(
                _scaled_record(artifacts, dataset, i),
                artifacts.mi_table,
                inter_prob=config.inter_prob,
                rng_seed=artifacts.topology_seed,
                tau=config.tau,
                uniform_weight=1.0 if config.no_mi else None,
                edges=edges,
            )
            (fold_dir / f"graph_{record.id}.json").write_text(
                graph_to_json(graph), encoding="utf-8"
            )
        hist, _ = np.histogram(artifacts.edge_weight, bins=10, range=(0.0, 1.0))
        weight_histogram += hist
        summary_folds.append({
            "fold": k,
            "nodes": int(artifacts.num_nodes),
            "directed_edges": int(artifacts.edge_src.size),
            "mi_pairs": len(artifacts.mi_table.values) if artifacts.mi_table else 0,
        })
    summary = {
        "dataset": manifest.name,
        "patients": len(dataset),
        "folds": config.folds,
        "fingerprint": config_fingerprint(config, manifest.to_doc()),
        "per_fold": summary_folds,
        "weight_histogram": {
            "bin_edges": [round(i / 10, 1) for i in range(11)],
            "counts": weight_histogram.tolist(),
        },
    }
    (out / "summary.json").write_text(
        json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    print(f"wrote {config.folds} folds to {out}")
    return 0


def _scaled_record(artifacts, dataset, index):
    """Rebuild a standardized record from the fold's feature matrix."""
    from .graphbuild import PatientRecord

    record = dataset[index]
    row = artifacts.feature_matrix[index]
    modalities = []
    offset = 0
    for m in record.modalities:
        modalities.append(row[offset:offset + m.size])
        offset += m.size
    return PatientRecord(id=record.id, modalities=modalities, label=record.label)


def cmd_cv(args) -> int:
    config = _load_config(args)
    manifest, dataset = _load_inputs(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    states: list = []
    report = cross_validate(
        dataset, config, manifest.to_doc(), jobs=args.jobs, collect_states=states
    )
    (out / "report.json").write_text(report_to_json(report), encoding="utf-8")
    (out / "report.txt").write_text(report_to_table(report), encoding="utf-8")
    for k, state in enumerate(states):
        save_checkpoint(out / f"fold_{k}.ckpt", state, report.fingerprint)
    print(report_to_table(report), end="")
    return 0


def cmd_ablate(args) -> int:
    config = _load_config(args)
    manifest, dataset = _load_inputs(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = run_ablation(dataset, config, manifest.to_doc(), jobs=args.jobs)
    for name, report in reports.items():
        (out / f"report_{name}.json").write_text(report_to_json(report), encoding="utf-8")
    table = ablation_table(reports)
    (out / "ablation.txt").write_text(table, encoding="utf-8")
    print(table, end="")
    return 0


def cmd_synth(args) -> int:
    spec = SynthSpec(
        n=args.n,
        modality_sizes=[int(s) for s in args.modality_sizes.split(",")],
        strength=args.strength,
        seed=args.seed if args.seed is not None else 0,
        name=args.name,
    )
    write_dataset(spec, args.out)
    print(f"wrote synthetic dataset ({spec.n} records) to {args.out}")
    return 0


def cmd_report(args) -> int:
    report = report_from_json(Path(args.report).read_text(encoding="utf-8"))
    print(report_to_table(report), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphfuse",
        description="Feature-graph construction and attention-network "
                    "training for multimodal prognosis",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_data=True):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="master RNG seed (overrides config)")
        if needs_data:
            p.add_argument("--manifest", required=True, help="dataset manifest JSON")
            p.add_argument("--out", required=True, help="output directory")
            p.add_argument("--jobs", type=int, default=1, help="parallel folds")
            p.add_argument("--no-mi", action="store_true", dest="no_mi",
                           help="uniform edge weights of 1 instead of MI")
            p.add_argument("--no-mgf", action="store_true", dest="no_mgf",
                           help="skip the global fusion block")

    p = sub.add_parser("build-graphs", help="write per-fold MI tables and graphs")
    common(p)
    p.set_defaults(fn=cmd_build_graphs)

    p = sub.add_parser("cv", help="run k-fold cross-validation")
    common(p)
    p.set_defaults(fn=cmd_cv)

    p = sub.add_parser("ablate", help="run full / w-o MI / w-o MGF side by side")
    common(p)
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=400)
    p.add_argument("--modality-sizes", default="8,8", dest="modality_sizes")
    p.add_argument("--strength", type=float, default=3.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--name", default="synthetic")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("report", help="render a saved report as a table")
    p.add_argument("--report", required=True, help="path to report.json")
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except InvariantError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3
    except (ContractError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

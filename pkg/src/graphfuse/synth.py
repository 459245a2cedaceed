"""Synthetic dataset generator with a planted cross-modal dependency.

Labels are balanced. For each modality, feature 0 is the signal feature:
it is shifted by +/- strength according to the label, so the two signal
features are statistically dependent on each other (through the label)
and jointly predictive. All remaining features are independent standard
normal noise. Strength 0 removes the signal entirely.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Manifest, ModalityEntry
from .errors import ContractError
from .graphbuild import PatientRecord


@dataclass
class SynthSpec:
    n: int = 400
    modality_sizes: list[int] = field(default_factory=lambda: [8, 8])
    strength: float = 3.0
    seed: int = 0
    name: str = "synthetic"

    def __post_init__(self):
        if self.n < 4:
            raise ContractError(f"need at least 4 records, got {self.n}")
        if not self.modality_sizes or any(s < 1 for s in self.modality_sizes):
            raise ContractError(f"bad modality sizes {self.modality_sizes}")
        if self.strength < 0:
            raise ContractError(f"strength must be nonnegative, got {self.strength}")


def generate_records(spec: SynthSpec) -> list[PatientRecord]:
    rng = np.random.default_rng(np.random.SeedSequence(entropy=spec.seed, spawn_key=(7,)))
    labels = np.repeat([0, 1], [spec.n - spec.n // 2, spec.n // 2])
    rng.shuffle(labels)
    signs = 2.0 * labels - 1.0
    records = []
    width = len(str(spec.n - 1))
    features = []
    for size in spec.modality_sizes:
        block = rng.standard_normal((spec.n, size))
        block[:, 0] += signs * spec.strength
        features.append(block)
    for i in range(spec.n):
        records.append(
            PatientRecord(
                id=f"p{i:0{width}d}",
                modalities=[block[i] for block in features],
                label=int(labels[i]),
            )
        )
    return records


def write_dataset(spec: SynthSpec, out_dir) -> Manifest:
    """Write modality CSVs, labels CSV, and the manifest; byte-identical
    for identical specs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = generate_records(spec)
    entries = []
    for k, size in enumerate(spec.modality_sizes):
        filename = f"modality_{k}.csv"
        header = ["id"] + [f"f{j}" for j in range(size)]
        lines = [",".join(header)]
        for record in records:
            cells = [record.id] + [format(v, ".17g") for v in record.modalities[k]]
            lines.append(",".join(cells))
        (out / filename).write_text("\n".join(lines) + "\n", encoding="utf-8")
        entries.append(ModalityEntry(name=f"modality_{k}", path=filename, features=size))
    label_lines = ["id,label"] + [f"{r.id},{r.label}" for r in records]
    (out / "labels.csv").write_text("\n".join(label_lines) + "\n", encoding="utf-8")
    manifest = Manifest(
        name=spec.name, id_column="id", labels_path="labels.csv", modalities=entries
    )
    (out / "manifest.json").write_text(
        json.dumps(manifest.to_doc(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest

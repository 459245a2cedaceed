"""Dataset ingestion: one CSV per modality plus a labels CSV, joined on
a shared id column, described by a JSON manifest.

Parsing is strict: any missing id, duplicate id, or non-numeric cell is
an error naming the file and location. No imputation.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError
from .graphbuild import PatientRecord


@dataclass
class ModalityEntry:
    name: str
    path: str
    features: int


@dataclass
class Manifest:
    name: str
    id_column: str
    labels_path: str
    modalities: list[ModalityEntry]

    def to_doc(self) -> dict:
        return {
            "name": self.name,
            "id_column": self.id_column,
            "labels": self.labels_path,
            "modalities": [
                {"name": m.name, "path": m.path, "features": m.features}
                for m in self.modalities
            ],
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "Manifest":
        try:
            modalities = [
                ModalityEntry(name=m["name"], path=m["path"], features=int(m["features"]))
                for m in doc["modalities"]
            ]
            return cls(
                name=doc["name"],
                id_column=doc.get("id_column", "id"),
                labels_path=doc["labels"],
                modalities=modalities,
            )
        except KeyError as exc:
            raise ContractError(f"manifest is missing field {exc}") from exc


def load_manifest(path) -> Manifest:
    path = Path(path)
    if not path.exists():
        raise ContractError(f"manifest not found: {path}")
    return Manifest.from_doc(json.loads(path.read_text(encoding="utf-8")))


def _read_table(path: Path, id_column: str) -> tuple[list[str], dict[str, list[str]]]:
    """Rows keyed by id, preserving column order; duplicates are errors."""
    if not path.exists():
        raise ContractError(f"data file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ContractError(f"{path}: empty file") from None
        if id_column not in header:
            raise ContractError(f"{path}: no {id_column!r} column in header {header}")
        id_pos = header.index(id_column)
        rows: dict[str, list[str]] = {}
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ContractError(
                    f"{path}: row {line_no} has {len(row)} cells, header has {len(header)}"
                )
            rid = row[id_pos]
            if rid in rows:
                raise ContractError(f"{path}: duplicate id {rid!r} at row {line_no}")
            rows[rid] = [c for i, c in enumerate(row) if i != id_pos]
    columns = [c for i, c in enumerate(header) if i != id_pos]
    return columns, rows


def _parse_cell(text: str, path: Path, rid: str, column: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ContractError(
            f"{path}: non-numeric value {text!r} for id {rid!r}, column {column!r}"
        ) from None


def load_dataset(manifest: Manifest, base_dir) -> list[PatientRecord]:
    """Join modality files and labels on id; records come back ordered by id."""
    base = Path(base_dir)
    labels_path = base / manifest.labels_path
    label_cols, label_rows = _read_table(labels_path, manifest.id_column)
    if "label" not in label_cols:
        raise ContractError(f"{labels_path}: expected a 'label' column, got {label_cols}")
    label_pos = label_cols.index("label")

    tables = []
    for entry in manifest.modalities:
        mod_path = base / entry.path
        columns, rows = _read_table(mod_path, manifest.id_column)
        if len(columns) != entry.features:
            raise ContractError(
                f"{mod_path}: manifest declares {entry.features} features, "
                f"file has {len(columns)}"
            )
        tables.append((entry, mod_path, columns, rows))

    all_ids = set(label_rows)
    for entry, mod_path, _, rows in tables:
        missing = all_ids - set(rows)
        if missing:
            raise ContractError(
                f"{mod_path}: id {sorted(missing)[0]!r} missing from modality {entry.name!r}"
            )
        extra = set(rows) - all_ids
        if extra:
            raise ContractError(
                f"{labels_path}: id {sorted(extra)[0]!r} present in modality "
                f"{entry.name!r} but absent from labels"
            )

    records = []
    for rid in sorted(label_rows):
        raw_label = label_rows[rid][label_pos]
        try:
            label = int(raw_label)
        except ValueError:
            raise ContractError(
                f"{labels_path}: non-integer label {raw_label!r} for id {rid!r}"
            ) from None
        if label not in (0, 1):
            raise ContractError(f"{labels_path}: label for id {rid!r} must be 0 or 1")
        modalities = []
        for entry, mod_path, columns, rows in tables:
            cells = rows[rid]
            values = np.array(
                [_parse_cell(c, mod_path, rid, col) for c, col in zip(cells, columns)]
            )
            modalities.append(values)
        records.append(PatientRecord(id=rid, modalities=modalities, label=label))
    return records

"""Report emission: machine-readable JSON and aligned plain-text tables."""

from __future__ import annotations

import json

from .metrics import METRIC_KEYS
from .train import MetricsReport

_HEADERS = {"acc": "ACC", "precision": "Precision", "recall": "Recall",
            "f1": "F1", "auc": "AUC"}


def report_to_json(report: MetricsReport) -> str:
    return json.dumps(report.to_doc(), sort_keys=True, indent=2) + "\n"


def report_from_json(text: str) -> MetricsReport:
    return MetricsReport.from_doc(json.loads(text))


def _cell(value) -> str:
    return "n/a" if value is None else f"{value:.4f}"


def _render(rows: list[tuple[str, dict]], label_header: str) -> str:
    header = [label_header] + [_HEADERS[k] for k in METRIC_KEYS]
    body = [[name] + [_cell(m.get(k)) for k in METRIC_KEYS] for name, m in rows]
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    lines = []
    for row in [header] + body:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"


def report_to_table(report: MetricsReport) -> str:
    rows = [(f"fold {m['fold']}", m) for m in report.per_fold]
    rows.append(("mean", report.mean))
    table = _render(rows, "split")
    return (
        f"variant: {report.variant}  seed: {report.seed}\n"
        f"fingerprint: {report.fingerprint}\n{table}"
    )


def ablation_table(reports: dict[str, MetricsReport]) -> str:
    """Side-by-side mean metrics, one row per variant."""
    pretty = {"full": "full", "no_mi": "w/o MI", "no_mgf": "w/o MGF"}
    rows = [(pretty.get(name, name), rep.mean) for name, rep in reports.items()]
    return _render(rows, "method")

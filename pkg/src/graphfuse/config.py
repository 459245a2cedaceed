"""Run configuration: training hyperparameters, stage-1 parameters, and
ablation switches, serializable to and from a single JSON file."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields

from .errors import ContractError


@dataclass
class RunConfig:
    learning_rate: float = 1e-4
    max_epochs: int = 200
    patience: int = 50
    folds: int = 5
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    leaky_slope: float = 0.01
    batch_size: int = 32
    n_heads: int = 4
    d_head: int = 8
    n_state: int = 16
    bins: int = 8
    inter_prob: float = 0.2
    tau: float = 0.1
    no_mi: bool = False
    no_mgf: bool = False

    def __post_init__(self):
        positive = (
            "learning_rate", "max_epochs", "patience", "folds", "batch_size",
            "n_heads", "d_head", "n_state", "bins", "tau",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ContractError(f"config field {name} must be positive")
        if self.patience > self.max_epochs:
            raise ContractError(
                f"patience ({self.patience}) exceeds max_epochs ({self.max_epochs})"
            )
        if not 0.0 < self.inter_prob <= 1.0:
            raise ContractError(f"inter_prob must lie in (0, 1], got {self.inter_prob}")
        if not 0.0 < self.leaky_slope < 1.0:
            raise ContractError(f"leaky_slope must lie in (0, 1), got {self.leaky_slope}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ContractError(f"unknown config fields: {sorted(unknown)}")
        return cls(**doc)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))

    def replace(self, **changes) -> "RunConfig":
        doc = self.to_dict()
        doc.update(changes)
        return RunConfig.from_dict(doc)


def config_fingerprint(config: RunConfig, manifest_doc: dict | None = None) -> str:
    """Stable hash of the effective config plus the dataset manifest."""
    payload = {"config": config.to_dict(), "manifest": manifest_doc}
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()

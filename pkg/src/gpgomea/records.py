"""Checkpointed run results and their JSON form."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

__all__ = ["CheckpointRecord", "RunRecord", "STANDARD_CHECKPOINTS"]

STANDARD_CHECKPOINTS = (100, 500, 1_000, 5_000, 10_000, 50_000, 100_000, 500_000,
                     1_000_000, 5_000_000)


@dataclass
class CheckpointRecord:
    fe_threshold: int
    fes: int
    train_mse: float
    test_mse: float
    train_r2: float
    test_r2: float
    expression: str


@dataclass
class RunRecord:
    config: str
    problem: str
    seed: int
    checkpoints: list[CheckpointRecord] = field(default_factory=list)
    total_fes: int = 0
    operators: str = ""
    depth: int = 0

    @property
    def key(self) -> tuple[str, str, int]:
        return self.config, self.problem, self.seed

    @property
    def final(self) -> CheckpointRecord | None:
        return self.checkpoints[-1] if self.checkpoints else None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        d = dict(d)
        d["checkpoints"] = [CheckpointRecord(**c) for c in d.get("checkpoints", [])]
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "RunRecord":
        return cls.from_dict(json.loads(Path(path).read_text()))

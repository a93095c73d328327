"""Training configuration and error types."""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional


class TrainerError(Exception):
    """Base class for trainer failures."""


class SchemaError(TrainerError):
    """A data file does not match the expected export schema."""


class MissingBaseCheckpoint(TrainerError):
    """The preference stage needs an existing supervised checkpoint."""


class Stage(enum.Enum):
    SFT = "SFT"
    DPO = "DPO"


@dataclass(frozen=True)
class TrainingConfig:
    """Hyperparameters for one post-training stage.

    ``base_model`` ids have the form ``tiny:<layers>x<dim>x<heads>``; the
    model is built in-process at that size. ``dpo_beta`` and ``batch_size``
    have no published reference values and default to 0.1 and 4.
    """

    base_model: str = "tiny:2x64x2"
    learning_rate: float = 2e-5
    epochs: int = 2
    adapter_rank: int = 128
    adapter_alpha: int = 256
    stage: Stage = Stage.SFT
    batch_size: int = 4
    max_seq_len: int = 1024
    dpo_beta: float = 0.1
    seed: int = 0
    sft_checkpoint: Optional[str] = None

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.adapter_rank < 1 or self.adapter_alpha < 1:
            raise ValueError("adapter rank and alpha must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_seq_len < 8:
            raise ValueError("max_seq_len must be >= 8")
        if self.dpo_beta <= 0:
            raise ValueError("dpo_beta must be positive")

    def to_dict(self) -> dict:
        payload = asdict(self)
        payload["stage"] = self.stage.value
        return payload

    @classmethod
    def from_dict(cls, data: dict) -> "TrainingConfig":
        known = dict(data)
        stage = known.pop("stage", "SFT")
        try:
            stage = Stage(str(stage).upper())
        except ValueError:
            raise SchemaError(f"unknown stage {stage!r}") from None
        try:
            return cls(stage=stage, **known)
        except TypeError as exc:
            raise SchemaError(f"bad config: {exc}") from exc

    def write(self, path: Path) -> None:
        path.write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )

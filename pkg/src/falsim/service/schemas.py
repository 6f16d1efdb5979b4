"""Request and response models for the HTTP endpoints.

CSV payloads are carried as plain text fields so every endpoint is a pure
function of its request body.
"""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class SynthRequest(BaseModel):
    num_classes: int = Field(ge=2)
    dim: int = Field(ge=1)
    per_class: int = Field(ge=2)
    spread: float = Field(default=0.5, ge=0.0)
    seed: int = 0


class SynthResponse(BaseModel):
    train_csv: str
    test_csv: str
    train_rows: int
    test_rows: int


class PartitionRequest(BaseModel):
    dataset_csv: str
    alpha: float | Literal["uniform"] = "uniform"
    num_clients: int = Field(default=10, ge=1)
    seed: int = 0


class PartitionResponse(BaseModel):
    partition_csv: str
    class_counts: list[list[int]]
    table: str


class RunRequest(BaseModel):
    config_text: str
    files: dict[str, str] = Field(default_factory=dict)
    seeds: Optional[list[int]] = None
    strategy: Optional[str] = None


class RunResponse(BaseModel):
    results_csv: str
    rows: int
    flags: list[str]


class CompareRequest(BaseModel):
    results_i_csv: str
    results_j_csv: str
    metric: Literal["accuracy", "balanced_recall"] = "accuracy"
    threshold: float = Field(default=2.776, gt=0.0)


class CompareResponse(BaseModel):
    report_csv: str
    win_rate: float
    defeat_rate: float
    rounds: int


class ShiftRequest(BaseModel):
    dataset_csv: str
    partition_csv: str
    neighbors: int = Field(default=20, ge=1)
    threshold: float = 1.0


class ShiftResponse(BaseModel):
    histogram_csv: str
    summary_csv: str
    centralized_mean: float
    within_client_mean: float
    retention: Optional[float]   # None when no point clears the threshold


class PlotdataRequest(BaseModel):
    kind: Literal["curves", "winrate", "histogram"]
    results_csv: list[str] = Field(default_factory=list)
    comparison_csv: list[str] = Field(default_factory=list)
    histogram_csv: Optional[str] = None
    metric: Literal["accuracy", "balanced_recall"] = "accuracy"


class PlotdataResponse(BaseModel):
    table_csv: str


class HealthResponse(BaseModel):
    status: str
    version: str

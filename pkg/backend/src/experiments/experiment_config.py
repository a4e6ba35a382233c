"""
Experiment config schema.

One JSON file describes one run. Unknown keys are rejected so typos surface
as schema violations instead of silently falling back to defaults.
"""

import json
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from services.errors import ConfigError

ExperimentKind = Literal[
    "approx-prob",
    "owp-roundtrip",
    "keyrec",
    "pseudodet",
    "dualmode",
    "synth",
    "flatness",
    "geom",
    "product-lemma",
    "chernoff",
    "mode1-law",
    "purification",
]

EXPERIMENT_KINDS = list(ExperimentKind.__args__)


class NoiseConfig(BaseModel):
    """Sampler / inverter noise (see oracle_service.NoiseSpec)."""
    model_config = ConfigDict(extra="forbid")

    epsilon: float = Field(0.0, ge=0.0, lt=1.0)
    mode: Literal["none", "mass-shift", "prefix-corrupt"] = "none"


class ProbOracleConfig(BaseModel):
    """Probability-oracle noise (see oracle_service.ProbOracle)."""
    model_config = ConfigDict(extra="forbid")

    rel_error: float = Field(0.0, ge=0.0)
    fail_prob: float = Field(0.0, ge=0.0, le=1.0)


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    experiment: ExperimentKind
    seed: int = Field(..., ge=0, lt=2 ** 64)
    n: int = Field(4, ge=1)
    depth: int = Field(4, ge=0)
    instances: int = Field(1, ge=1)
    samples: int = Field(1000, ge=1)
    samples_per_bit: int = Field(1000, ge=1)
    repeats: int = Field(50, ge=2)
    trials_per_estimate: Optional[int] = Field(None, ge=1)
    puzzle_qubits: int = Field(2, ge=1)
    families: int = Field(2, ge=1)
    ensemble_size: int = Field(2, ge=1)
    delta: Optional[float] = Field(None, gt=0.0)
    threshold_multiple: float = Field(64.0, gt=0.0)
    initial_state: Literal["haar", "zero"] = "haar"
    probabilities: List[float] = Field(default_factory=lambda: [0.1, 0.5, 0.9])
    epsilons: List[float] = Field(default_factory=lambda: [0.0])
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    oracle: ProbOracleConfig = Field(default_factory=ProbOracleConfig)
    acceptance: Dict[str, float] = Field(default_factory=dict)
    out: Optional[str] = None

    @field_validator("probabilities")
    @classmethod
    def check_probabilities(cls, values: List[float]) -> List[float]:
        if not values or any(not (0.0 <= p <= 1.0) for p in values):
            raise ValueError("probabilities must be a nonempty list of values in [0, 1]")
        return values

    @field_validator("epsilons")
    @classmethod
    def check_epsilons(cls, values: List[float]) -> List[float]:
        if not values or any(not (0.0 <= e < 1.0) for e in values):
            raise ValueError("epsilons must be a nonempty list of values in [0, 1)")
        return values

    @model_validator(mode="after")
    def check_delta(self) -> "ExperimentConfig":
        # register sizes are checked by the simulator and reported as a qubit-cap error
        if self.delta is not None and self.delta >= 1.0 / self.n:
            raise ValueError(f"delta must be below 1/n = {1.0 / self.n}")
        return self

    def threshold(self, name: str, default: float) -> float:
        """Acceptance threshold, overridable from the config's `acceptance` block."""
        return float(self.acceptance.get(name, default))


def load_config(path: str) -> ExperimentConfig:
    """
    Load and validate an experiment config file.

    Raises:
        ConfigError: On unreadable JSON or schema violations
    """
    try:
        with open(path, "r", encoding="utf-8") as handle:
            payload = json.load(handle)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot read config {path}: {e}")
    try:
        return ExperimentConfig.model_validate(payload)
    except ValidationError as e:
        raise ConfigError(f"Schema violation in {path}: {e}")


def config_schema() -> Dict:
    return ExperimentConfig.model_json_schema()

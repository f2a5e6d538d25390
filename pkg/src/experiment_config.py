"""
Experiment configuration models.

ExperimentConfig describes one full run; AttackSpec and DefenseSpec are
the slices of it handed to the attack and defense hooks.
"""

import math
from typing import Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from . import config

AttackKind = Literal["none", "ipm", "label_flip", "sign_flip", "gauss_noise"]
DefenseKind = Literal["none", "cos_defense", "krum", "multi_krum", "median", "clipping_median"]
DatasetName = Literal["mnist", "fmnist", "synthetic"]


class AttackSpec(BaseModel):
    """
    Attack selection and parameters.

    Attributes:
        kind: Attack family
        epsilon: IPM scale (> 0)
        noise_sigma: Gaussian noise standard deviation (>= 0)
        start_round: First round (0-based) in which attackers misbehave
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: AttackKind = "none"
    epsilon: float = Field(default=config.IPM_EPSILON, gt=0)
    noise_sigma: float = Field(default=config.GAUSS_NOISE_SIGMA, ge=0)
    start_round: int = Field(default=config.ATTACK_START_ROUND, ge=0)


class DefenseSpec(BaseModel):
    """
    Defense selection and parameters.

    Attributes:
        kind: Defense family
        krum_f: Presumed attacker count for the Krum family; None means the
            true number of sampled attackers each round
        clip_bound: Norm bound for clipping; None means calibrate
        include_bias: Append the last layer's bias to the CosDefense vectors
        post_filter_aggregation: Rule applied to the CosDefense benign set
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: DefenseKind = "none"
    krum_f: Optional[int] = Field(default=None, ge=0)
    clip_bound: Optional[float] = Field(default=None, gt=0)
    include_bias: bool = False
    post_filter_aggregation: Literal["fedavg", "median"] = "fedavg"

    @property
    def uses_clipping(self) -> bool:
        return self.kind == "clipping_median"

    @property
    def is_krum_family(self) -> bool:
        return self.kind in ("krum", "multi_krum")


class ExperimentConfig(BaseModel):
    """
    Full description of one simulated experiment.

    Defaults reproduce the reference protocol: 100 clients, 1000 rounds,
    10% sampled per round, learning rate 0.01, batch 128, one local
    iteration, q = 0.5, 30% attackers launching IPM at round 200.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    # data
    dataset: DatasetName = "mnist"
    data_dir: str = config.DATA_DIR
    synthetic_classes: int = Field(default=config.SYNTHETIC_CLASSES, ge=2)
    synthetic_per_class: int = Field(default=config.SYNTHETIC_PER_CLASS, ge=1)
    synthetic_test_per_class: int = Field(default=config.SYNTHETIC_TEST_PER_CLASS, ge=1)
    synthetic_dim: int = Field(default=config.SYNTHETIC_DIM, ge=2)

    # model
    hidden_dims: Tuple[int, ...] = config.HIDDEN_DIMS

    # federated protocol
    num_clients: int = Field(default=config.NUM_CLIENTS, ge=1)
    num_rounds: int = Field(default=config.NUM_ROUNDS, ge=1)
    sample_rate: float = Field(default=config.SAMPLE_RATE, gt=0, le=1)
    learning_rate: float = Field(default=config.LEARNING_RATE, ge=0)
    batch_size: int = Field(default=config.BATCH_SIZE, ge=1)
    local_iters: int = Field(default=config.LOCAL_ITERS, ge=1)
    q: float = Field(default=config.NONIID_Q, gt=0, le=1)
    malicious_frac: float = Field(default=config.MALICIOUS_FRACTION, ge=0, lt=1)

    # attack
    attack: AttackKind = config.DEFAULT_ATTACK
    ipm_eps: float = Field(default=config.IPM_EPSILON, gt=0)
    noise_sigma: float = Field(default=config.GAUSS_NOISE_SIGMA, ge=0)
    attack_start: int = Field(default=config.ATTACK_START_ROUND, ge=0)

    # defense
    defense: DefenseKind = config.DEFAULT_DEFENSE
    krum_f: Optional[int] = Field(default=None, ge=0)
    clip_bound: Optional[float] = Field(default=None, gt=0)
    calibration_rounds: int = Field(default=config.CALIBRATION_ROUNDS, ge=1)
    cos_include_bias: bool = False
    post_filter_aggregation: Literal["fedavg", "median"] = "fedavg"

    # execution
    seed: int = Field(default=config.DEFAULT_SEED, ge=0)
    workers: int = Field(default=1, ge=1)
    progress: bool = True
    out_dir: str = config.OUTPUT_DIR

    @field_validator("hidden_dims")
    @classmethod
    def _positive_widths(cls, value: Tuple[int, ...]) -> Tuple[int, ...]:
        if any(width < 1 for width in value):
            raise ValueError(f"hidden widths must be positive, got {list(value)}")
        return value

    @model_validator(mode="after")
    def _cross_field_invariants(self) -> "ExperimentConfig":
        if self.clients_per_round < 1:
            raise ValueError(
                f"sample_rate: floor(num_clients * sample_rate) must be >= 1, "
                f"got {self.num_clients} * {self.sample_rate}"
            )
        if self.attack_start > self.num_rounds:
            raise ValueError(
                f"attack_start: {self.attack_start} exceeds num_rounds {self.num_rounds}"
            )
        num_classes = self.num_classes
        if self.q < 1.0 / num_classes - 1e-12:
            raise ValueError(f"q: {self.q} is below 1/C = {1.0 / num_classes:.4f}")
        if self.num_clients < num_classes or self.num_clients % num_classes != 0:
            raise ValueError(
                f"num_clients: {self.num_clients} must be a positive multiple of C = {num_classes}"
            )
        if self.dataset == "synthetic" and self.synthetic_dim < self.synthetic_classes:
            raise ValueError(
                f"synthetic_dim: {self.synthetic_dim} must be >= synthetic_classes "
                f"{self.synthetic_classes}"
            )
        return self

    @property
    def num_classes(self) -> int:
        if self.dataset == "synthetic":
            return self.synthetic_classes
        return config.IDX_NUM_CLASSES

    @property
    def clients_per_round(self) -> int:
        # the epsilon keeps 100 * 0.1 from rounding down to 9
        return int(math.floor(self.num_clients * self.sample_rate + 1e-9))

    @property
    def num_malicious(self) -> int:
        """m = floor(p * K)."""
        return int(math.floor(self.malicious_frac * self.num_clients + 1e-9))

    def attack_spec(self) -> AttackSpec:
        return AttackSpec(
            kind=self.attack,
            epsilon=self.ipm_eps,
            noise_sigma=self.noise_sigma,
            start_round=self.attack_start,
        )

    def defense_spec(self) -> DefenseSpec:
        return DefenseSpec(
            kind=self.defense,
            krum_f=self.krum_f,
            clip_bound=self.clip_bound,
            include_bias=self.cos_include_bias,
            post_filter_aggregation=self.post_filter_aggregation,
        )

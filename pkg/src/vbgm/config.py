"""Run configuration: fitting, preprocessing, and session-layout knobs."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

from .errors import ConfigError
from .variational import FitConfig

SCHEMA_VERSION = 1

AUTO = "auto"

FIT_METHODS = ("vi", "pe", "cm")
METRICS = ("mahalanobis", "euclidean")


@dataclass
class PipelineConfig:
    """Everything a full run needs, JSON round-trippable.

    Defaults follow the reference hyperparameters: learning rate 1e-5,
    1000 update steps, early-stop tolerance 0.01, PCA to 384 dimensions,
    and the half-classes-labeled session layout.
    """

    # fitting
    learning_rate: float = 1e-5
    max_steps: int = 1000
    batch_size: int = 0
    epsilon: float = 0.01
    kl_weight_mode: str = "per_datum"
    plateau_tol: float = 1e-6
    early_stop_enabled: bool = True
    early_stop_offline: bool = True
    fit_method: str = "vi"
    jitter: float = 1e-4
    seed: int = 0

    # preprocessing
    pca_dim: int = 384  # 0 = off; values >= the input dim are a no-op
    standardize: bool = True

    # online-session behavior
    classifier_metric: str = "mahalanobis"
    refit_old: bool = False
    cluster_include_old: bool = False
    min_class_size: int = 2
    estimate_new_classes: bool = False
    k_min: int = 2
    k_max: int = 20

    # session layout
    labeled_class_fraction: float = 0.5
    labeled_sample_fraction: float = 0.8
    test_fraction: float = 0.2
    sessions: int = 5
    new_per_session: int = 10
    carryover_per_known: int = 25

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        if self.epsilon < 0:
            raise ConfigError("epsilon must be >= 0")
        if self.batch_size < 0:
            raise ConfigError("batch_size must be >= 0")
        if self.kl_weight_mode not in ("per_datum", "fixed"):
            raise ConfigError(f"unknown kl_weight_mode {self.kl_weight_mode!r}")
        if self.fit_method not in FIT_METHODS:
            raise ConfigError(f"fit_method must be one of {FIT_METHODS}")
        if self.classifier_metric not in METRICS:
            raise ConfigError(f"classifier_metric must be one of {METRICS}")
        if self.jitter < 0:
            raise ConfigError("jitter must be >= 0")
        if self.pca_dim < 0:
            raise ConfigError("pca_dim must be >= 0")
        if self.min_class_size < 1:
            raise ConfigError("min_class_size must be >= 1")
        if not (2 <= self.k_min <= self.k_max):
            raise ConfigError("need 2 <= k_min <= k_max")
        if not (0.0 < self.labeled_class_fraction < 1.0):
            raise ConfigError("labeled_class_fraction must be in (0, 1)")
        if not (0.0 < self.labeled_sample_fraction <= 1.0):
            raise ConfigError("labeled_sample_fraction must be in (0, 1]")
        if not (0.0 <= self.test_fraction < 1.0):
            raise ConfigError("test_fraction must be in [0, 1)")
        if self.sessions < 1:
            raise ConfigError("sessions must be >= 1")
        if self.new_per_session < 0:
            raise ConfigError("new_per_session must be >= 0")
        if self.carryover_per_known < 0:
            raise ConfigError("carryover_per_known must be >= 0")

    def fit_config(self, early_stop: bool | None = None) -> FitConfig:
        return FitConfig(
            learning_rate=self.learning_rate,
            max_steps=self.max_steps,
            batch_size=self.batch_size,
            epsilon=self.epsilon,
            kl_weight_mode=self.kl_weight_mode,
            early_stop_enabled=self.early_stop_enabled if early_stop is None else early_stop,
            plateau_tol=self.plateau_tol,
            seed=self.seed,
        )

    def to_dict(self) -> dict:
        payload = {"schema_version": SCHEMA_VERSION}
        payload.update(dataclasses.asdict(self))
        return payload

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, payload: dict) -> "PipelineConfig":
        data = dict(payload)
        version = data.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported config schema_version {version}")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, text: str) -> "PipelineConfig":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(payload, dict):
            raise ConfigError("config JSON must be an object")
        return cls.from_dict(payload)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            with open(path, "r") as handle:
                text = handle.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        return cls.from_json(text)

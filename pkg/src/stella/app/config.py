"""Run configuration: one JSON document per experiment."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ..calibration import CalibrationConfig
from ..errors import ConfigError
from ..evalharness.experiments import DEFAULT_M_VALUES, ExperimentConfig
from ..evalharness.results import params_digest
from ..prompting import DOMAINS, LabelScheme
from ..rankers.remote import EndpointConfig
from ..rankers.simulator import PROFILES

FORMAT_VERSION = 1


@dataclass
class SweepConfig:
    sizes: list[int] = field(default_factory=lambda: [2, 3, 5, 10, 15, 20, 25])
    schemes: list[str] = field(default_factory=lambda: [s.value for s in LabelScheme])
    m_values: list[int] = field(default_factory=lambda: list(DEFAULT_M_VALUES))
    heatmap_size: int = 4


@dataclass
class RunConfig:
    backend: str = "simulated"
    profile: str = "canonical"
    remote: dict = field(default_factory=lambda: asdict(EndpointConfig()))
    cache_path: str = "cache.jsonl"
    candidate_size: int = 5
    num_negatives: int = 4
    m: int = 5
    calibration: dict = field(default_factory=lambda: asdict(CalibrationConfig()))
    bootstrap_repeats: int = 3
    scheme: str = LabelScheme.UPPERCASE_LETTERS.value
    domain: str = "book"
    dataset: str = "toy"
    dataset_name: str = ""
    max_users: int | None = 200
    max_history: int | None = None
    seed: int = 0
    parallelism: int = 1
    output_dir: str = "out"
    sweep: SweepConfig = field(default_factory=SweepConfig)
    format_version: int = FORMAT_VERSION

    def validate(self) -> "RunConfig":
        if self.format_version != FORMAT_VERSION:
            raise ConfigError(f"unsupported config format_version {self.format_version}")
        if self.backend not in ("simulated", "remote"):
            raise ConfigError(f"backend must be 'simulated' or 'remote', got {self.backend!r}")
        if self.backend == "simulated" and self.profile not in PROFILES:
            raise ConfigError(f"unknown profile {self.profile!r}; choose from {sorted(PROFILES)}")
        if self.candidate_size != self.num_negatives + 1:
            raise ConfigError("candidate_size must equal num_negatives + 1")
        if not 2 <= self.candidate_size <= 26:
            raise ConfigError("candidate_size must lie in [2, 26]")
        for name in ("m", "bootstrap_repeats", "parallelism"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.max_users is not None and self.max_users < 1:
            raise ConfigError("max_users must be positive")
        try:
            LabelScheme(self.scheme)
        except ValueError:
            raise ConfigError(f"unknown label scheme {self.scheme!r}") from None
        if self.domain not in DOMAINS:
            raise ConfigError(f"unknown domain {self.domain!r}; choose from {sorted(DOMAINS)}")
        try:
            self.calibration_config()
            self.endpoint_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        if not 2 <= self.sweep.heatmap_size <= 5:
            raise ConfigError("sweep.heatmap_size must lie in [2, 5]")
        return self

    def calibration_config(self) -> CalibrationConfig:
        return CalibrationConfig(**{**self.calibration, "seed": self.seed})

    def endpoint_config(self) -> EndpointConfig:
        return EndpointConfig(**self.remote)

    @property
    def name(self) -> str:
        return self.dataset_name or (self.dataset if self.dataset == "toy" else Path(self.dataset).stem)

    def digest(self) -> str:
        # output location and worker count never change results
        d = asdict(self)
        for key in ("output_dir", "parallelism"):
            d.pop(key)
        return params_digest(d)

    def experiment_config(self) -> ExperimentConfig:
        return ExperimentConfig(
            dataset=self.name,
            num_negatives=self.num_negatives,
            m=self.m,
            calibration=self.calibration_config(),
            bootstrap_repeats=self.bootstrap_repeats,
            scheme=LabelScheme(self.scheme),
            domain=DOMAINS[self.domain],
            max_users=self.max_users,
            max_history=self.max_history,
            parallelism=self.parallelism,
            seed=self.seed,
            digest=self.digest(),
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        sweep = data.pop("sweep", {})
        sweep_known = {f.name for f in fields(SweepConfig)}
        if not isinstance(sweep, dict) or set(sweep) - sweep_known:
            raise ConfigError(f"sweep must be an object with keys from {sorted(sweep_known)}")
        defaults = cls()
        # nested dicts merge over defaults so partial configs stay valid
        for key in ("remote", "calibration"):
            if key in data:
                if not isinstance(data[key], dict):
                    raise ConfigError(f"{key} must be an object")
                data[key] = {**getattr(defaults, key), **data[key]}
        try:
            cfg = cls(**data, sweep=SweepConfig(**sweep))
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        return cfg.validate()

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(data)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_json(text)

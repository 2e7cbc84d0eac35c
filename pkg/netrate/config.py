"""
Experiment configuration for netrate.

Loads experiment specs from YAML (with optional .env overrides) into
pydantic models, and provides the figure presets.
"""

import math
import os
from pathlib import Path
from typing import List, Literal, Optional, Union

import numpy as np
import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from .exceptions import ConfigError
from .system_model import REFERENCE_PATH_LOSS, PathLossMatrix, SystemConfig

REFERENCE_PRESET = "paper-3x3"

SweepKind = Literal["snr", "tau", "backhaul"]
Method = Literal["det", "mc"]


class SystemSettings(BaseModel):
    """System parameters not implied by the path-loss matrix or the sweep."""
    M: int = Field(2, ge=1, description="Antennas per BS")
    L: int = Field(1, ge=1, description="Number of sub-carriers")
    T: float = Field(1000.0, gt=0, description="Coherence block length (channel uses)")


class SweepConfig(BaseModel):
    """What is swept, over which range, and the values held fixed."""
    kind: SweepKind = Field("snr", description="Swept quantity")
    start: Optional[float] = Field(None, description="First value (tau sweeps default to K)")
    stop: float = Field(30.0, description="Last value (inclusive)")
    step: float = Field(2.0, gt=0, description="Step (dB, channel uses or bits/channel use)")
    snr_db: float = Field(0.0, description="Fixed SNR in dB for tau/backhaul sweeps")
    tau: float = Field(40.0, gt=0, description="Fixed training length for snr/backhaul sweeps")
    backhaul: List[float] = Field(default_factory=lambda: [math.inf],
                                  description="Backhaul series for snr/tau sweeps (one CSV each)")
    include_infinite_backhaul: bool = Field(False, description="Append a C=inf row to backhaul sweeps")

    @field_validator('backhaul', mode='before')
    @classmethod
    def parse_backhaul(cls, v):
        if isinstance(v, (int, float, str)):
            v = [v]
        return [math.inf if str(c).strip().lower() in ("inf", "+inf", "infinity") else c for c in v]

    @field_validator('backhaul')
    @classmethod
    def validate_backhaul(cls, v):
        if not v:
            raise ValueError("backhaul series must not be empty")
        if any(not (c > 0) for c in v):
            raise ValueError("backhaul capacities must be positive")
        return v

    @model_validator(mode='after')
    def validate_range(self):
        if self.start is not None and self.stop < self.start:
            raise ValueError(f"sweep range is empty: stop={self.stop} < start={self.start}")
        if self.kind == "backhaul":
            first = self.start if self.start is not None else self.step
            if not (first > 0):
                raise ValueError(f"backhaul sweep must start above 0, got start={first}")
            if self.stop < first:
                raise ValueError(f"sweep range is empty: stop={self.stop} < start={first}")
        return self

    def values(self, K: int) -> List[float]:
        """Inclusive grid of sweep values; tau sweeps start at K, backhaul sweeps at step."""
        if self.start is not None:
            start = self.start
        elif self.kind == "tau":
            start = float(K)
        elif self.kind == "backhaul":
            start = self.step
        else:
            start = 0.0
        if self.stop < start:
            raise ConfigError(f"sweep range is empty: stop={self.stop} < start={start}")
        count = int(math.floor((self.stop - start) / self.step + 1e-9)) + 1
        return [float(v) for v in np.round(start + self.step * np.arange(count), 12)]


class MonteCarloSettings(BaseModel):
    """Monte Carlo parameters."""
    n_samples: int = Field(10_000, ge=1, description="Samples per point")
    seed: int = Field(0, ge=0, le=2 ** 64 - 1, description="Master seed")
    window: int = Field(10, ge=0, description="Half-width of the tau* search grid around tau_bar*")
    grid_step: int = Field(1, ge=1, description="Step of the tau* search grid")


class OptimizerSettings(BaseModel):
    """Bisection parameters."""
    tol_tau: float = Field(1e-3, gt=0, description="Final bracket width (channel uses)")


class OutputConfig(BaseModel):
    """Where results go and how many workers produce them."""
    prefix: str = Field("results/run", description="Output path prefix")
    workers: int = Field(1, ge=1, description="Concurrent sweep points")


class LoggingConfig(BaseModel):
    """Logging configuration."""
    log_level: str = Field("INFO", description="Logging level")
    log_file: Optional[str] = Field(None, description="Log file path")


class ExperimentSpec(BaseModel):
    """A complete batch experiment."""
    name: str = Field("custom", description="Experiment name (recorded in outputs)")
    system: SystemSettings = SystemSettings()
    path_loss: Union[Literal["paper-3x3"], List[List[float]]] = REFERENCE_PRESET
    sweep: SweepConfig = SweepConfig()
    methods: List[Method] = Field(default_factory=lambda: ["det", "mc"])
    mc: MonteCarloSettings = MonteCarloSettings()
    optimizer: OptimizerSettings = OptimizerSettings()
    output: OutputConfig = OutputConfig()
    logging: LoggingConfig = LoggingConfig()

    @field_validator('methods')
    @classmethod
    def validate_methods(cls, v):
        if not v:
            raise ValueError("at least one method (det, mc) is required")
        return list(dict.fromkeys(v))

    @field_validator('path_loss')
    @classmethod
    def validate_path_loss(cls, v):
        if isinstance(v, list):
            if not v or any(len(row) != len(v[0]) for row in v):
                raise ValueError("path_loss rows must be non-empty and of equal length")
            if any(not (a > 0) or not math.isfinite(a) for row in v for a in row):
                raise ValueError("path_loss entries must be positive and finite")
        return v

    def path_loss_matrix(self) -> PathLossMatrix:
        """Inverse path-loss matrix (the preset expands to the reference 3x3 matrix)."""
        if self.path_loss == REFERENCE_PRESET:
            return PathLossMatrix(REFERENCE_PATH_LOSS.copy())
        return PathLossMatrix(np.array(self.path_loss, dtype=float))

    def system_config(self, snr_db: float, C: float) -> SystemConfig:
        """SystemConfig for one sweep point; P = L * 10^(snr_db/10)."""
        a = self.path_loss_matrix()
        return SystemConfig.from_snr_db(
            snr_db, B=a.B, M=self.system.M, K=a.K, L=self.system.L, T=self.system.T, C=C
        )

    @property
    def uses_mc(self) -> bool:
        return "mc" in self.methods

    @property
    def uses_det(self) -> bool:
        return "det" in self.methods


def _format_validation_error(error: ValidationError) -> str:
    lines = []
    for item in error.errors():
        loc = ".".join(str(part) for part in item["loc"])
        lines.append(f"{loc}: {item['msg']}")
    return "; ".join(lines)


def apply_env_overrides(spec: ExperimentSpec) -> ExperimentSpec:
    """
    Apply NETRATE_* environment overrides to a spec.

    Args:
        spec: Validated spec

    Returns:
        New validated spec
    """
    data = spec.model_dump()
    env_map = {
        "NETRATE_SEED": ("mc", "seed"),
        "NETRATE_SAMPLES": ("mc", "n_samples"),
        "NETRATE_WORKERS": ("output", "workers"),
        "NETRATE_LOG_LEVEL": ("logging", "log_level"),
    }
    for var, (section, key) in env_map.items():
        value = os.getenv(var)
        if value:
            data[section][key] = value
    try:
        return ExperimentSpec(**data)
    except ValidationError as e:
        raise ConfigError(f"Invalid environment override: {_format_validation_error(e)}") from e


def load_experiment(yaml_file: str, env_file: Optional[str] = None) -> ExperimentSpec:
    """
    Load an experiment spec from YAML, then apply environment overrides.

    Args:
        yaml_file: Path to the experiment YAML
        env_file: Path to .env file (default: .env in working directory)

    Returns:
        ExperimentSpec: Validated spec

    Raises:
        ConfigError: If the file is missing, unparsable or invalid
    """
    if env_file:
        load_dotenv(env_file)
    else:
        load_dotenv()

    path = Path(yaml_file)
    if not path.exists():
        raise ConfigError(f"Config file not found: {yaml_file}")

    try:
        with open(path, 'r') as f:
            data = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"{yaml_file}{where}: {getattr(e, 'problem', e)}") from e

    if not isinstance(data, dict):
        raise ConfigError(f"{yaml_file}: top level must be a mapping of sections")

    try:
        spec = ExperimentSpec(**data)
    except ValidationError as e:
        raise ConfigError(f"{yaml_file}: {_format_validation_error(e)}") from e

    return apply_env_overrides(spec)


# Presets for the reference figures. Sample counts and grids are fixed here.
SWEEP_PRESETS = ("fig3", "fig4")
OPTIMIZE_PRESETS = ("fig4", "fig5", "fig6")


def preset(name: str, command: str = "sweep") -> ExperimentSpec:
    """
    Build a figure preset.

    sweep presets:
        fig3: R_net vs SNR (-10..30 dB, step 2), tau=40, T=1000, C in {1, 5, 10}
        fig4: R_net vs tau (K..300), SNR 0 dB, T=1000, C in {1, 5, 10}
    optimize presets:
        fig4: tau*, tau_bar* vs SNR (-10..30 dB, step 5), C=1, T=100
        fig5: tau_bar* vs C (1..30), SNR 10 dB, T=1000, plus C=inf
        fig6: R_net(tau_bar*) vs C (1..30), SNR 10 dB, T=1000, with Monte Carlo

    Args:
        name: Preset name
        command: "sweep" or "optimize"

    Returns:
        ExperimentSpec
    """
    if command == "sweep" and name == "fig3":
        return ExperimentSpec(
            name="fig3",
            sweep=SweepConfig(kind="snr", start=-10, stop=30, step=2, tau=40, backhaul=[1, 5, 10]),
            methods=["det", "mc"],
            output=OutputConfig(prefix="results/fig3"),
        )
    if command == "sweep" and name == "fig4":
        return ExperimentSpec(
            name="fig4",
            sweep=SweepConfig(kind="tau", start=None, stop=300, step=1, snr_db=0.0, backhaul=[1, 5, 10]),
            methods=["det", "mc"],
            output=OutputConfig(prefix="results/fig4"),
        )
    if command == "optimize" and name == "fig4":
        return ExperimentSpec(
            name="fig4",
            system=SystemSettings(T=100),
            sweep=SweepConfig(kind="snr", start=-10, stop=30, step=5, backhaul=[1]),
            methods=["det", "mc"],
            output=OutputConfig(prefix="results/fig4_optimum"),
        )
    if command == "optimize" and name in ("fig5", "fig6"):
        return ExperimentSpec(
            name=name,
            sweep=SweepConfig(kind="backhaul", start=1, stop=30, step=1, snr_db=10.0,
                              include_infinite_backhaul=True),
            methods=["det"] if name == "fig5" else ["det", "mc"],
            output=OutputConfig(prefix=f"results/{name}"),
        )

    known = SWEEP_PRESETS if command == "sweep" else OPTIMIZE_PRESETS
    raise ConfigError(f"Unknown preset '{name}' for '{command}' (choose from {', '.join(known)})")

"""
Application configuration using Pydantic Settings.

Two layers:
- Settings: process-level knobs from environment variables or a .env file.
- ExperimentConfig: one run of the laboratory, read from a TOML file with one
  level of [section] headers and `key = value` lines.
"""

from pathlib import Path
from typing import Literal, Optional
import logging
import sys

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
from pydantic_settings import (
    BaseSettings,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
    TomlConfigSettingsSource,
)

from app.services.classifier import ClassifierParams
from app.validators import is_open_interval

logger = logging.getLogger(__name__)

INITIAL_TAGS = (
    "ground+noise",
    "excited+ground-seed",
    "dispersive-packet",
    "custom-coefficients",
)


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""

    # Application Configuration
    data_dir: Path = Path("./data")
    log_level: str = "INFO"  # Logging level: DEBUG, INFO, WARNING, ERROR, CRITICAL

    # Sweep Configuration
    sweep_threads: int = 1
    default_seed: int = 20240611

    # Numerics shared by every run
    fgr_extension: int = 16  # continuum box length / working box length
    cap_ramp_fraction: float = 0.2  # outer share of the domain under the CAP

    model_config = SettingsConfigDict(
        env_file=".env", env_file_encoding="utf-8", case_sensitive=False, extra="ignore"
    )

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        """Validate log level is valid."""
        valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        v_upper = v.upper()
        if v_upper not in valid_levels:
            raise ValueError(
                f"LOG_LEVEL must be one of: {', '.join(valid_levels)}. Got: {v}"
            )
        return v_upper

    @field_validator("sweep_threads", "fgr_extension")
    @classmethod
    def validate_positive_count(cls, v: int) -> int:
        """Thread counts and box extensions must be at least 1."""
        if v < 1:
            raise ValueError(f"must be >= 1. Got: {v}")
        return v

    @field_validator("default_seed")
    @classmethod
    def validate_seed(cls, v: int) -> int:
        """Seeds are unsigned 64-bit integers."""
        if not 0 <= v < 2**64:
            raise ValueError(f"DEFAULT_SEED must fit in an unsigned 64-bit integer. Got: {v}")
        return v

    @field_validator("cap_ramp_fraction")
    @classmethod
    def validate_ramp(cls, v: float) -> float:
        """The absorbing ramp must leave an interior region."""
        if not is_open_interval(v, 0.0, 0.5):
            raise ValueError(f"CAP_RAMP_FRACTION must lie in (0, 0.5). Got: {v}")
        return v

    def get_output_dir(self, verb: str) -> Path:
        """Get the default output directory for a CLI verb."""
        return self.data_dir / verb


class PotentialSection(BaseModel):
    """[potential] section."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    form: Literal["gaussian"] = "gaussian"
    depth: float = 0.0  # ignored when auto_design is on
    width: float = 1.0
    auto_design: bool = True
    margin: float = 0.1

    @field_validator("width")
    @classmethod
    def validate_width(cls, v: float) -> float:
        if v <= 0:
            raise ValueError(f"potential.width must be positive. Got: {v}")
        return v

    @field_validator("depth")
    @classmethod
    def validate_depth(cls, v: float) -> float:
        if v < 0:
            raise ValueError(f"potential.depth is the well depth and must be >= 0. Got: {v}")
        return v

    @field_validator("margin")
    @classmethod
    def validate_margin(cls, v: float) -> float:
        if not is_open_interval(v, 0.0, 0.5):
            raise ValueError(f"potential.margin must lie in (0, 0.5). Got: {v}")
        return v


class GridSection(BaseModel):
    """[grid] section."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    r_max: float = 40.0
    nodes: int = 2000

    @field_validator("r_max")
    @classmethod
    def validate_r_max(cls, v: float) -> float:
        if v <= 0:
            raise ValueError(f"grid.r_max must be positive. Got: {v}")
        return v

    @field_validator("nodes")
    @classmethod
    def validate_nodes(cls, v: int) -> int:
        if v < 16:
            raise ValueError(f"grid.nodes must be at least 16. Got: {v}")
        return v


class ModelSection(BaseModel):
    """[model] section: the nonlinearity and the bound-state branches."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    lam: int = 1  # 0 switches the nonlinearity off (linear mode)
    branch_max: Optional[float] = None  # None: 1.5x the initial-data size
    branch_samples: int = 13

    @field_validator("lam")
    @classmethod
    def validate_lam(cls, v: int) -> int:
        if v not in (-1, 0, 1):
            raise ValueError(f"model.lam must be -1, 0 or 1. Got: {v}")
        return v

    @field_validator("branch_samples")
    @classmethod
    def validate_samples(cls, v: int) -> int:
        if v < 5:
            raise ValueError(f"model.branch_samples must be at least 5. Got: {v}")
        return v


class InitialSection(BaseModel):
    """[initial] section: which initial datum to build and its amplitudes."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    tag: str = "excited+ground-seed"
    x0: float = 0.0
    y0: float = 0.1
    seed_ratio: float = 0.1  # x0 / y0 for excited+ground-seed
    noise: float = 0.0  # L2 size of the P_c noise for ground+noise
    packet_amplitude: float = 0.05
    packet_center: float = 4.0
    packet_width: float = 1.5
    packet_wavenumber: float = 0.0

    @field_validator("tag")
    @classmethod
    def validate_tag(cls, v: str) -> str:
        v_lower = v.strip().lower()
        if v_lower not in INITIAL_TAGS:
            raise ValueError(
                f"initial.tag must be one of: {', '.join(INITIAL_TAGS)}. Got: {v}"
            )
        return v_lower

    @field_validator("noise", "packet_amplitude", "seed_ratio")
    @classmethod
    def validate_nonnegative(cls, v: float) -> float:
        if v < 0:
            raise ValueError(f"amplitudes must be >= 0. Got: {v}")
        return v

    @field_validator("packet_width")
    @classmethod
    def validate_packet_width(cls, v: float) -> float:
        if v <= 0:
            raise ValueError(f"initial.packet_width must be positive. Got: {v}")
        return v


class RunSection(BaseModel):
    """[run] section: time stepping and the absorbing layer."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    t_final: float = 100.0
    dt: float = 0.0  # 0: 1e-3 / |e0|
    stride: int = 0  # 0: about 1000 samples per run
    cap: Literal["off", "on", "auto"] = "auto"
    cap_strength: float = 2.0  # multiple of the dispersive energy cutoff

    @field_validator("t_final", "dt")
    @classmethod
    def validate_nonnegative(cls, v: float) -> float:
        if v < 0:
            raise ValueError(f"run times must be >= 0. Got: {v}")
        return v

    @field_validator("stride")
    @classmethod
    def validate_stride(cls, v: int) -> int:
        if v < 0:
            raise ValueError(f"run.stride must be >= 0. Got: {v}")
        return v

    @field_validator("cap_strength")
    @classmethod
    def validate_cap_strength(cls, v: float) -> float:
        if v <= 0:
            raise ValueError(f"run.cap_strength must be positive. Got: {v}")
        return v


class ExperimentConfig(BaseSettings):
    """One laboratory run: potential, grid, model, initial datum, run, classifier.

    Values come from the TOML file first; keys the file omits may be supplied
    through EXPERIMENT_<SECTION>__<KEY> environment variables.
    """

    potential: PotentialSection = PotentialSection()
    grid: GridSection = GridSection()
    model: ModelSection = ModelSection()
    initial: InitialSection = InitialSection()
    run: RunSection = RunSection()
    classifier: ClassifierParams = ClassifierParams()
    seed: int = Field(default=20240611, ge=0, lt=2**64)

    model_config = SettingsConfigDict(
        env_prefix="EXPERIMENT_",
        env_nested_delimiter="__",
        case_sensitive=False,
        extra="forbid",
        frozen=True,
    )

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        # The .env file belongs to Settings; experiments only read their own
        # file (passed as init kwargs) and explicit EXPERIMENT_* variables.
        return (init_settings, env_settings)

    def with_field(self, dotted: str, value) -> "ExperimentConfig":
        """Return a validated copy with one `section.key` (or top-level) field set.

        Args:
            dotted: Field path, e.g. "initial.seed_ratio" or "seed".
            value: New value.

        Returns:
            A new ExperimentConfig; validation errors propagate.

        Raises:
            KeyError: If the path does not name an existing field.
        """
        data = self.model_dump()
        parts = dotted.split(".")
        target = data
        for part in parts[:-1]:
            if part not in target or not isinstance(target[part], dict):
                raise KeyError(f"Unknown config section: {dotted}")
            target = target[part]
        if parts[-1] not in target:
            raise KeyError(f"Unknown config field: {dotted}")
        target[parts[-1]] = value
        return type(self)(**data)


def load_experiment(path: Path) -> ExperimentConfig:
    """Read an experiment file.

    Args:
        path: TOML file with [potential], [grid], [model], [initial], [run]
            and [classifier] sections (all optional).

    Returns:
        Validated ExperimentConfig.

    Raises:
        FileNotFoundError: If the file does not exist.
        pydantic.ValidationError: On invalid or unknown keys.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Experiment config not found: {path}")
    data = TomlConfigSettingsSource(ExperimentConfig, toml_file=path)()
    logger.info(f"Loaded experiment config from {path}")
    return ExperimentConfig(**data)


def load_settings() -> Settings:
    """
    Load and validate settings with helpful error messages.

    Returns:
        Settings instance

    Exits:
        System exit with code 1 if validation fails
    """
    try:
        return Settings()
    except ValidationError as e:
        logger.error("=" * 60)
        logger.error("CONFIGURATION ERROR - Invalid environment variables")
        logger.error("=" * 60)

        for error in e.errors():
            field = error["loc"][0] if error["loc"] else "unknown"
            msg = error["msg"]

            # Convert field name to env var format
            env_var = str(field).upper()

            logger.error(f"  {env_var}: {msg}")

        logger.error("")
        logger.error("Optional environment variables:")
        logger.error(
            "  - LOG_LEVEL: Logging level - DEBUG, INFO, WARNING, ERROR, CRITICAL (default: INFO)"
        )
        logger.error("  - DATA_DIR: Output root (default: ./data)")
        logger.error("  - SWEEP_THREADS: Concurrent sweep runs (default: 1)")
        logger.error("  - DEFAULT_SEED: Seed when --seed is not given")
        logger.error("  - FGR_EXTENSION: Continuum box extension factor (default: 16)")
        logger.error("  - CAP_RAMP_FRACTION: Absorbing layer share of the box (default: 0.2)")
        logger.error("")
        logger.error("See DEVELOPMENT.md for setup instructions.")
        logger.error("=" * 60)

        sys.exit(1)


# Global settings instance
settings = load_settings()

"""
Configuration management using Pydantic and TOML
Provides type-safe configuration for the articulatory inversion toolkit.
"""

import os
import sys
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any

from loguru import logger
from pydantic import BaseModel, Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

REPOSITORY_CONFIG = Path(__file__).parent.parent / "config" / "config.toml"

# variable -> (section, field); values are validated by the section models
ENV_SHORTCUTS = {
    "ARTIC_THREADS": ("app", "threads"),
    "ARTIC_LOG_LEVEL": ("app", "log_level"),
    "ARTIC_SAMPLE_RATE": ("features", "sample_rate"),
}


class AppConfig(BaseModel):
    """Process-level settings"""

    log_level: str = Field(default="INFO", description="Logging level")
    threads: int = Field(default=4, ge=1, description="Worker threads for per-utterance work")


class FeatureConfig(BaseModel):
    """Acoustic front-end settings (HTK-style defaults)"""

    sample_rate: int = Field(default=16000, ge=8000, description="Expected audio rate in Hz")
    window_ms: float = Field(default=25.0, gt=0, description="Analysis window length")
    hop_ms: float = Field(default=10.0, gt=0, description="Frame period")
    preemphasis: float = Field(default=0.97, ge=0, lt=1, description="Pre-emphasis coefficient")
    n_filters: int = Field(default=26, ge=13, description="Mel filters")
    n_ceps: int = Field(default=13, ge=1, description="Cepstral coefficients kept (c0 included)")
    delta_width: int = Field(default=2, ge=1, description="Half-width of the delta regression")
    log_floor: float = Field(default=1e-10, gt=0, description="Floor applied before the log")
    std_floor: float = Field(default=1e-8, gt=0, description="Floor for per-speaker std")
    slack_ms: float = Field(default=50.0, ge=0, description="Tolerated alignment/audio end gap")


class ArticulatoryConfig(BaseModel):
    """Pellet geometry settings"""

    palate_bins: int = Field(default=50, ge=3, description="x bins for the palate upper envelope")
    tongue_tip: str = Field(default="T1", description="Pellet used for TTCL/TTCD")
    tongue_body: str = Field(default="T3", description="Pellet used for TBCL/TBCD")


class TrainingConfig(BaseModel):
    """Training loop settings shared by every model family"""

    minibatch_size: int = Field(default=128, ge=1, description="Frames per weakly supervised step")
    max_epochs: int = Field(default=50, ge=1, description="Epoch cap for weakly supervised runs")
    blstm_max_epochs: int = Field(default=30, ge=1, description="Epoch cap for BLSTM runs")
    blstm_batch_utterances: int = Field(default=8, ge=1, description="Utterances per BLSTM step")
    patience: int = Field(default=3, ge=1, description="Epochs without improvement before stopping")


class EvaluationConfig(BaseModel):
    """Scoring and report settings"""

    table_decimals: int = Field(default=4, ge=1, description="Decimals printed in result tables")
    plot_features: list[str] = Field(
        default=["LA", "TTCD", "TBCD"], description="Features exported by plot-data"
    )


class Config(BaseSettings):
    """Main configuration class that combines all sub-configurations"""

    app: AppConfig = Field(default_factory=AppConfig)
    features: FeatureConfig = Field(default_factory=FeatureConfig)
    articulatory: ArticulatoryConfig = Field(default_factory=ArticulatoryConfig)
    training: TrainingConfig = Field(default_factory=TrainingConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)

    model_config = SettingsConfigDict(
        env_file=".env", env_nested_delimiter="__", case_sensitive=False, extra="ignore"
    )

    @classmethod
    def from_toml(cls, config_path: Path) -> "Config":
        """Read `config_path`, then apply ARTIC_* environment overrides"""
        try:
            data = tomllib.loads(Path(config_path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            logger.warning(f"No config at {config_path}; using built-in defaults")
            data = {}
        except tomllib.TOMLDecodeError as e:
            logger.error(f"Cannot parse {config_path}: {e}")
            raise

        for section, values in cls._env_overrides().items():
            data[section] = {**data.get(section, {}), **values}

        try:
            return cls(**data)
        except ValidationError as e:
            logger.error(f"Invalid configuration in {config_path}: {e}")
            raise

    @staticmethod
    def _env_overrides() -> dict[str, dict[str, Any]]:
        """Sections touched by the ARTIC_* shortcut variables"""
        overrides: dict[str, dict[str, Any]] = {}
        for variable, (section, key) in ENV_SHORTCUTS.items():
            if value := os.getenv(variable):
                overrides.setdefault(section, {})[key] = value
        return overrides


_config: Config | None = None


def config_path() -> Path:
    """ARTIC_CONFIG if set, the repository config otherwise"""
    return Path(os.getenv("ARTIC_CONFIG") or REPOSITORY_CONFIG)


def get_config() -> Config:
    """Process-wide configuration; the first call also sets up the loguru sink"""
    global _config
    if _config is None:
        _config = Config.from_toml(config_path())
        logger.remove()
        logger.add(
            sys.stderr,
            level=_config.app.log_level,
            format="<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | <cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>",
        )
    return _config


def reload_config() -> Config:
    """Drop the cached configuration and read it again"""
    global _config
    _config = None
    return get_config()

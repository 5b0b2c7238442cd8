"""
Configuration loader and validation using Pydantic models.
"""

from pathlib import Path
from typing import Dict, List, Optional, Any
import os

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, Field, field_validator


LOG_ENV_VAR = "DIRAC_OCP_LOG"
OUTPUT_ENV_VAR = "DIRAC_OCP_OUTPUT_DIR"

LOG_LEVELS = {"error": "ERROR", "info": "INFO", "debug": "DEBUG"}


class TolerancesConfig(BaseModel):
    """Solver tolerances."""
    tol_lin: float = 1e-12
    tol_newton: float = 1e-10
    tol_kkt: float = 1e-8

    @field_validator("tol_lin", "tol_newton", "tol_kkt")
    @classmethod
    def positive(cls, v: float) -> float:
        if v <= 0.0:
            raise ValueError("tolerances must be positive")
        return v


class NewtonConfig(BaseModel):
    """Newton iteration limits."""
    max_iter: int = Field(50, ge=1)
    max_halvings: int = Field(30, ge=0)


class LinearConfig(BaseModel):
    """Conjugate gradient limits; ``max_iter`` None means 10 n + 100."""
    max_iter: Optional[int] = None


class OptimizerConfig(BaseModel):
    """Projected gradient settings."""
    max_iter: int = Field(500, ge=1)
    armijo: float = Field(1e-4, gt=0.0, lt=1.0)


class StudyDefaults(BaseModel):
    """Default refinement study settings; the problem file's [study] section takes precedence."""
    threads: int = Field(1, ge=1)
    anchor_levels: List[int] = Field(default_factory=lambda: [2, 3, 4, 5, 6])


class SoscDefaults(BaseModel):
    """Second-order check settings; None selects 10 tol_kkt and alpha / 2."""
    tau: Optional[float] = None
    kappa_min: Optional[float] = None
    sign_samples: int = 100


class DefaultsYamlConfig(BaseModel):
    """Full defaults.yaml configuration."""
    tolerances: TolerancesConfig = Field(default_factory=TolerancesConfig)
    newton: NewtonConfig = Field(default_factory=NewtonConfig)
    linear: LinearConfig = Field(default_factory=LinearConfig)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    study: StudyDefaults = Field(default_factory=StudyDefaults)
    sosc: SoscDefaults = Field(default_factory=SoscDefaults)
    output_dir: str = "./outputs"


class ConfigLoader:
    """
    Loads and validates configuration from YAML files and environment variables.
    """

    def __init__(self, config_dir: Optional[Path] = None):
        """
        Initialize the configuration loader.

        Args:
            config_dir: Path to configuration directory. Defaults to ./config
        """
        if config_dir is None:
            config_dir = Path(__file__).parent.parent.parent / "config"

        self.config_dir = Path(config_dir)

        # Load environment variables
        env_file = Path.cwd() / ".env"
        if env_file.exists():
            load_dotenv(env_file)

        self._defaults: Optional[DefaultsYamlConfig] = None

    def load_defaults(self) -> DefaultsYamlConfig:
        """Load and validate defaults.yaml; built-in values if the file is absent."""
        if self._defaults is not None:
            return self._defaults

        defaults_file = self.config_dir / "defaults.yaml"
        data: Dict[str, Any] = {}
        if defaults_file.exists():
            with open(defaults_file, "r", encoding="utf-8") as f:
                data = yaml.safe_load(f) or {}

        self._defaults = DefaultsYamlConfig(**data)
        return self._defaults

    def get_log_level(self) -> str:
        """Logging level from DIRAC_OCP_LOG (error, info or debug); INFO otherwise."""
        value = os.getenv(LOG_ENV_VAR, "info").strip().lower()
        return LOG_LEVELS.get(value, "INFO")

    def get_output_dir(self) -> Path:
        """Default output directory."""
        output_dir = os.getenv(OUTPUT_ENV_VAR, self.load_defaults().output_dir)
        return Path(output_dir)

    def solver_limits(self) -> Dict[str, Any]:
        """Iteration limits passed on to every control problem."""
        defaults = self.load_defaults()
        return {
            "max_newton_iter": defaults.newton.max_iter,
            "max_halvings": defaults.newton.max_halvings,
            "cg_max_iter": defaults.linear.max_iter,
        }

    def get_template_path(self, name: str) -> Path:
        return self.config_dir / "templates" / name

    def get_benchmark_path(self, name: str) -> Path:
        """Path of a shipped benchmark problem, with or without the .toml suffix."""
        filename = name if name.endswith(".toml") else f"{name}.toml"
        return self.config_dir / "benchmarks" / filename

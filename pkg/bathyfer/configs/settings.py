import os
from dataclasses import dataclass
from dotenv import load_dotenv

from bathyfer.core.errors import ConfigError

load_dotenv()

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


@dataclass
class SolverSettings:
    gravity: float = 9.81
    friction: float = 0.0
    dry_tolerance: float = 1e-8


@dataclass
class SamplerSettings:
    adapt_window: int = 100
    discard_threshold: float = 2.0


@dataclass
class RuntimeSettings:
    threads: int = 1
    log_level: str = "INFO"
    output_dir: str = "runs"


class Config:
    """Process-wide defaults, overridable from the environment or a .env file"""

    def __init__(self):
        try:
            self.solver = SolverSettings(
                gravity=float(os.getenv("BATHYFER_GRAVITY", "9.81")),
                friction=float(os.getenv("BATHYFER_FRICTION", "0.0")),
            )

            self.sampler = SamplerSettings()

            self.runtime = RuntimeSettings(
                threads=int(os.getenv("BATHYFER_THREADS", "1")),
                log_level=os.getenv("BATHYFER_LOG_LEVEL", "INFO").upper(),
                output_dir=os.getenv("BATHYFER_OUTPUT_DIR", "runs"),
            )
        except ValueError as e:
            raise ConfigError(f"invalid BATHYFER_* environment value: {e}") from e

        self.validate()

    def validate(self):
        if self.solver.gravity <= 0:
            raise ConfigError("BATHYFER_GRAVITY must be positive")

        if self.solver.friction < 0:
            raise ConfigError("BATHYFER_FRICTION must be non-negative")

        if self.runtime.threads < 1:
            raise ConfigError("BATHYFER_THREADS must be at least 1")

        if self.runtime.log_level not in LOG_LEVELS:
            raise ConfigError(f"BATHYFER_LOG_LEVEL must be one of {LOG_LEVELS}")

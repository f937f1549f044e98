"""Runtime configuration for the experiment runner, loaded from environment variables."""

import logging
import os
from dataclasses import dataclass


@dataclass
class Config:
    """Process-level settings; experiment content lives in the TOML experiment config."""

    # OTLP configuration
    otlp_endpoint: str
    otlp_insecure: bool
    otlp_metrics_enabled: bool
    otlp_logs_enabled: bool

    # Trial execution. `threads` is the default worker count, overridden by
    # `--threads` on the command line.
    threads: int
    bootstrap_resamples: int

    log_level: str

    def __post_init__(self):
        if self.threads < 1:
            raise ValueError(f"SKETCH_THREADS must be >= 1, got {self.threads}")
        if self.bootstrap_resamples < 0:
            raise ValueError(f"SKETCH_BOOTSTRAP_RESAMPLES must be >= 0, got {self.bootstrap_resamples}")
        if not isinstance(logging.getLevelName(self.log_level), int):
            raise ValueError(f"SKETCH_LOG_LEVEL is not a logging level: {self.log_level}")

    @classmethod
    def from_env(cls) -> "Config":
        """Load configuration from environment variables."""
        try:
            threads = int(os.getenv("SKETCH_THREADS", "1"))
            bootstrap = int(os.getenv("SKETCH_BOOTSTRAP_RESAMPLES", "200"))
        except ValueError as e:
            raise ValueError(f"SKETCH_THREADS / SKETCH_BOOTSTRAP_RESAMPLES must be integers: {e}") from e
        return cls(
            otlp_endpoint=os.getenv("OTLP_ENDPOINT", "http://localhost:4317"),
            otlp_insecure=os.getenv("OTLP_INSECURE", "true").lower() == "true",
            otlp_metrics_enabled=os.getenv("OTLP_METRICS_ENABLED", "false").lower() == "true",
            otlp_logs_enabled=os.getenv("OTLP_LOGS_ENABLED", "false").lower() == "true",
            threads=threads,
            bootstrap_resamples=bootstrap,
            log_level=os.getenv("SKETCH_LOG_LEVEL", "INFO").upper(),
        )

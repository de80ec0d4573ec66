"""Run configuration loading and provenance."""

from .run import (
    RESOLVED_CONFIG_FILE,
    DataConfig,
    KnowledgeConfig,
    ResolvedConfig,
    RunConfig,
    RunConfigError,
    resolve_run_config,
    write_resolved_config,
)

__all__ = [
    "RESOLVED_CONFIG_FILE",
    "DataConfig",
    "KnowledgeConfig",
    "ResolvedConfig",
    "RunConfig",
    "RunConfigError",
    "resolve_run_config",
    "write_resolved_config",
]

from pathlib import Path

from pydantic import BaseModel, Field
from pydantic_settings import BaseSettings, SettingsConfigDict

DEFAULTS_PATH = Path(__file__).with_name("defaults.json")


class LoggingConfig(BaseModel):
    """Logging configuration."""

    level: str = Field(default="INFO", description="Log level")
    format: str = Field(default="console", description="Log format (console or json)")
    colorize: bool = Field(default=True, description="Enable colored logs")
    timestamp_format: str = Field(default="iso", description="Timestamp format")
    include_stack_info: bool = Field(default=False, description="Include stack info")
    file_path: str | None = Field(default=None, description="Log file path")
    context_class: str = Field(default="dict", description="Context class")


class TracingConfig(BaseModel):
    """OpenTelemetry tracing configuration."""

    enabled: bool = Field(default=False, description="Install an SDK tracer provider")
    exporter: str = Field(default="console", description="Span exporter (console or none)")


class RuntimeConfig(BaseModel):
    """Where the CLI reads scenarios from and writes artifacts to."""

    scenario_config: Path = Field(default=DEFAULTS_PATH, description="Default scenario JSON path")
    output_dir: Path = Field(default=Path("results"), description="Directory for CSV artifacts and checkpoints")
    jobs: int = Field(default=1, ge=1, description="Max parallel sweep jobs")
    metrics_file: Path | None = Field(default=None, description="Prometheus textfile dump path")


class Settings(BaseSettings):
    """Application settings."""

    model_config = SettingsConfigDict(
        env_prefix="RIS_LAB_",
        env_file=".env",
        env_nested_delimiter="__",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    logging: LoggingConfig = Field(default_factory=LoggingConfig)
    tracing: TracingConfig = Field(default_factory=TracingConfig)
    runtime: RuntimeConfig = Field(default_factory=RuntimeConfig)

    @property
    def LOG_LEVEL(self) -> str:
        return self.logging.level

    @property
    def LOG_FORMAT(self) -> str:
        return self.logging.format

    @property
    def LOG_COLORIZE(self) -> bool:
        return self.logging.colorize

    @property
    def LOG_TIMESTAMP_FORMAT(self) -> str:
        return self.logging.timestamp_format

    @property
    def LOG_INCLUDE_STACK_INFO(self) -> bool:
        return self.logging.include_stack_info

    @property
    def LOG_FILE_PATH(self) -> str | None:
        return self.logging.file_path

    @property
    def LOG_CONTEXT_CLASS(self) -> str:
        return self.logging.context_class


settings = Settings()

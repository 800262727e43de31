import logging
import sys
from typing import Any

import orjson
import structlog
from structlog.typing import EventDict, Processor

from ris_lab.config.settings import settings
from ris_lab.core.observability import correlation_id

# Leading hex digits of the scenario SHA-256 carried on every log line
CONFIG_HASH_PREFIX = 12


def setup_logging() -> structlog.typing.FilteringBoundLogger:
    """Route structlog through stdlib logging on stderr; stdout stays free for command output."""
    log_level = getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO)

    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if settings.LOG_FILE_PATH:
        handlers.append(logging.FileHandler(settings.LOG_FILE_PATH))
    logging.basicConfig(format="%(message)s", level=log_level, handlers=handlers, force=True)

    structlog.configure(
        processors=build_processors(settings.LOG_FORMAT, settings.LOG_INCLUDE_STACK_INFO),
        wrapper_class=structlog.make_filtering_bound_logger(log_level),
        context_class=dict if settings.LOG_CONTEXT_CLASS == "dict" else None,
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=True,
    )

    logger = structlog.get_logger()
    logger.debug("Logger configured", level=settings.LOG_LEVEL, format=settings.LOG_FORMAT, file=settings.LOG_FILE_PATH)
    return logger


def bind_run_context(config_sha256: str, seed: int, command: str) -> None:
    """Tag every following log line with the scenario it belongs to; earlier run context is dropped."""
    structlog.contextvars.clear_contextvars()
    structlog.contextvars.bind_contextvars(config=config_sha256[:CONFIG_HASH_PREFIX], seed=seed, command=command)


def build_processors(log_format: str, include_stack_info: bool = False) -> list[Processor]:
    processors: list[Processor] = [
        structlog.contextvars.merge_contextvars,
        structlog.stdlib.add_log_level,
        structlog.processors.TimeStamper(fmt=settings.LOG_TIMESTAMP_FORMAT),
        add_correlation_id,
    ]
    if include_stack_info:
        processors.append(structlog.processors.StackInfoRenderer())
    processors.append(structlog.processors.format_exc_info)
    processors.append(_create_renderer(log_format))
    return processors


def add_correlation_id(logger: Any, method_name: str, event_dict: EventDict) -> EventDict:
    event_dict["correlation_id"] = correlation_id.get("")
    return event_dict


def _orjson_dumps(event_dict: EventDict, **kwargs: Any) -> str:
    # rates and losses often arrive as numpy scalars or small arrays
    return orjson.dumps(event_dict, default=kwargs.get("default"), option=orjson.OPT_SERIALIZE_NUMPY).decode()


def _create_renderer(log_format: str) -> Processor:
    if log_format.lower() == "json":
        return structlog.processors.JSONRenderer(serializer=_orjson_dumps)
    return structlog.dev.ConsoleRenderer(colors=settings.LOG_COLORIZE)

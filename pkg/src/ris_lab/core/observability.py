from contextvars import ContextVar
from pathlib import Path

from opentelemetry import trace
from prometheus_client import CollectorRegistry, Counter, Histogram, write_to_textfile

# Context variables for run tracing
correlation_id: ContextVar[str] = ContextVar("correlation_id", default="")

# OpenTelemetry tracer
tracer = trace.get_tracer("ris_lab")

# Prometheus metrics, kept off the global registry so repeated imports in tests stay clean
registry = CollectorRegistry()
ien_epochs_counter = Counter("ris_lab_ien_epochs_total", "IEN training epochs completed", registry=registry)
agent_steps_counter = Counter(
    "ris_lab_agent_steps_total", "Environment steps taken by DDPG agents", ["oracle"], registry=registry
)
agent_updates_counter = Counter("ris_lab_agent_updates_total", "DDPG gradient updates applied", registry=registry)
ao_sweeps_counter = Counter("ris_lab_ao_sweeps_total", "Alternating-optimization sweeps", registry=registry)
jobs_counter = Counter("ris_lab_jobs_total", "Experiment jobs", ["kind", "status"], registry=registry)
job_duration = Histogram("ris_lab_job_duration_seconds", "Experiment job duration", registry=registry)


def setup_tracing(enabled: bool, exporter: str = "console") -> None:
    """Install an SDK tracer provider when tracing is switched on."""
    if not enabled:
        return

    from opentelemetry.sdk.resources import Resource
    from opentelemetry.sdk.trace import TracerProvider
    from opentelemetry.sdk.trace.export import ConsoleSpanExporter, SimpleSpanProcessor

    provider = TracerProvider(resource=Resource.create({"service.name": "ris-lab"}))
    if exporter == "console":
        provider.add_span_processor(SimpleSpanProcessor(ConsoleSpanExporter()))
    trace.set_tracer_provider(provider)


def dump_metrics(path: Path) -> None:
    """Write the lab registry in Prometheus text format."""
    write_to_textfile(str(path), registry)


__all__ = [
    "correlation_id",
    "tracer",
    "registry",
    "ien_epochs_counter",
    "agent_steps_counter",
    "agent_updates_counter",
    "ao_sweeps_counter",
    "jobs_counter",
    "job_duration",
    "setup_tracing",
    "dump_metrics",
]

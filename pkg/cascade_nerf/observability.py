"""Structured logging and OpenTelemetry setup."""

import logging
import sys
from dataclasses import dataclass

import structlog
from opentelemetry import metrics, trace
from opentelemetry.exporter.otlp.proto.http.metric_exporter import OTLPMetricExporter
from opentelemetry.exporter.otlp.proto.http.trace_exporter import OTLPSpanExporter
from opentelemetry.sdk.metrics import MeterProvider
from opentelemetry.sdk.metrics.export import MetricReader, PeriodicExportingMetricReader
from opentelemetry.sdk.resources import Resource
from opentelemetry.sdk.trace import TracerProvider
from opentelemetry.sdk.trace.export import (
    BatchSpanProcessor,
    ConsoleSpanExporter,
    SimpleSpanProcessor,
)

from . import __version__
from .config import Settings

logger = structlog.get_logger(__name__)


def configure_logging(level: str = "INFO") -> None:
    """Route structlog through stdlib logging on stderr with JSON lines."""
    logging.basicConfig(format="%(message)s", stream=sys.stderr, level=level.upper(), force=True)
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="ISO"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            structlog.processors.JSONRenderer(),
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=True,
    )


def setup_telemetry(settings: Settings) -> None:
    """Set up OpenTelemetry tracing and metrics based on configuration."""
    resource = Resource.create({
        "service.name": settings.otel_service_name,
        "service.version": __version__,
        "deployment.environment": settings.environment,
    })

    tracer_provider = TracerProvider(resource=resource)
    trace.set_tracer_provider(tracer_provider)
    _setup_trace_exporters(tracer_provider, settings)

    meter_provider = MeterProvider(resource=resource, metric_readers=_setup_metric_readers(settings))
    metrics.set_meter_provider(meter_provider)

    logger.debug(
        "OpenTelemetry initialized",
        service=settings.otel_service_name,
        environment=settings.environment,
        trace_exporter=settings.otel_traces_exporter,
    )


def _parse_otlp_headers(headers_str: str) -> dict[str, str]:
    """Parse OTLP headers from 'key=value,key2=value2' format."""
    headers: dict[str, str] = {}
    for header in headers_str.split(","):
        if "=" in header:
            key, value = header.strip().split("=", 1)
            headers[key.strip()] = value.strip()
    if headers_str and not headers:
        logger.warning("OTLP headers set but none parsed", expected="key=value,key2=value2")
    return headers


def _setup_trace_exporters(tracer_provider: TracerProvider, settings: Settings) -> None:
    if settings.otel_traces_exporter == "console":
        tracer_provider.add_span_processor(SimpleSpanProcessor(ConsoleSpanExporter(out=sys.stderr)))
        logger.debug("Added console trace exporter")

    if settings.otel_traces_exporter == "otlp" or settings.otel_exporter_otlp_endpoint:
        if not settings.otel_exporter_otlp_endpoint:
            logger.warning("OTLP traces requested but no endpoint configured")
            return
        headers = _parse_otlp_headers(settings.otel_exporter_otlp_headers)
        try:
            exporter = OTLPSpanExporter(endpoint=settings.otel_exporter_otlp_endpoint, headers=headers or None)
            tracer_provider.add_span_processor(BatchSpanProcessor(exporter))
            logger.debug("Added OTLP trace exporter", endpoint=settings.otel_exporter_otlp_endpoint)
        except Exception as e:
            _log_exporter_failure("trace", settings, e)


def _setup_metric_readers(settings: Settings) -> list[MetricReader]:
    readers: list[MetricReader] = []
    if settings.otel_exporter_otlp_endpoint:
        headers = _parse_otlp_headers(settings.otel_exporter_otlp_headers)
        try:
            exporter = OTLPMetricExporter(endpoint=settings.otel_exporter_otlp_endpoint, headers=headers or None)
            readers.append(PeriodicExportingMetricReader(exporter=exporter, export_interval_millis=30000))
        except Exception as e:
            _log_exporter_failure("metric", settings, e)
    return readers


def _log_exporter_failure(exporter_type: str, settings: Settings, e: Exception) -> None:
    """Error in production, warning elsewhere."""
    if settings.environment == "production":
        logger.error("Failed to set up OTLP exporter", exporter=exporter_type, error=str(e))
    else:
        logger.warning("Failed to set up OTLP exporter", exporter=exporter_type, error=str(e))


def shutdown_telemetry() -> None:
    """Flush and shut down the tracer and meter providers."""
    from opentelemetry.sdk.metrics import MeterProvider as SdkMeterProvider
    from opentelemetry.sdk.trace import TracerProvider as SdkTracerProvider

    try:
        tracer_provider = trace.get_tracer_provider()
        if isinstance(tracer_provider, SdkTracerProvider):
            tracer_provider.force_flush()
            tracer_provider.shutdown()
    except Exception as e:
        logger.warning("Error shutting down tracer provider", error=str(e))

    try:
        meter_provider = metrics.get_meter_provider()
        if isinstance(meter_provider, SdkMeterProvider):
            meter_provider.force_flush()
            meter_provider.shutdown()
    except Exception as e:
        logger.warning("Error shutting down meter provider", error=str(e))


def get_tracer(name: str) -> trace.Tracer:
    """Get a tracer for the specified component."""
    return trace.get_tracer(name)


def get_meter(name: str) -> metrics.Meter:
    """Get a meter for the specified component."""
    return metrics.get_meter(name)


@dataclass(frozen=True)
class TrainingInstruments:
    """Counters and histograms recorded by the trainer and the cascade."""

    iterations: metrics.Counter
    rays_rendered: metrics.Counter
    stage_psnr: metrics.Histogram
    stage_seconds: metrics.Histogram


def create_training_metrics() -> TrainingInstruments:
    meter = get_meter("cascade-nerf")

    return TrainingInstruments(
        iterations=meter.create_counter(
            "training_iterations_total",
            description="Optimizer steps taken",
            unit="1",
        ),
        rays_rendered=meter.create_counter(
            "rays_rendered_total",
            description="Rays pushed through the renderer",
            unit="1",
        ),
        stage_psnr=meter.create_histogram(
            "stage_validation_psnr",
            description="Validation PSNR at the end of each stage",
            unit="dB",
        ),
        stage_seconds=meter.create_histogram(
            "stage_wall_time_seconds",
            description="Wall-clock time per training stage",
            unit="s",
        ),
    )

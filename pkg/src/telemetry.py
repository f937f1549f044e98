"""OpenTelemetry configuration for logs and metrics."""

import logging
from dataclasses import dataclass
from typing import Any, Optional
from opentelemetry import metrics
from opentelemetry.sdk.metrics import MeterProvider
from opentelemetry.sdk.metrics.export import PeriodicExportingMetricReader
from opentelemetry.sdk.resources import get_aggregated_resources, OTELResourceDetector
from opentelemetry.exporter.otlp.proto.grpc.metric_exporter import OTLPMetricExporter
from opentelemetry.exporter.otlp.proto.grpc._log_exporter import OTLPLogExporter
from opentelemetry.sdk._logs.export import BatchLogRecordProcessor
from opentelemetry.sdk._logs import LoggerProvider
from opentelemetry._logs import set_logger_provider
from opentelemetry.instrumentation.logging.handler import LoggingHandler

from .config import Config


@dataclass
class Metrics:
    """Per-cell experiment metrics."""

    # OpenTelemetry Gauge instruments
    bias: Any
    variance: Any
    rejection_rate: Any
    # OpenTelemetry Counter instrument
    trials: Any

    def record(self, attributes: dict[str, Any], bias: float, variance: float, accepted: int, rejected: int):
        self.bias.set(bias, attributes)
        self.variance.set(variance, attributes)
        total = accepted + rejected
        self.rejection_rate.set(rejected / total if total else 0.0, attributes)
        self.trials.add(total, attributes)


def setup_telemetry(cfg: Config) -> tuple[Optional[MeterProvider], Optional[LoggerProvider]]:
    """Initialize OpenTelemetry with OTLP exporters based on configuration."""

    resource = get_aggregated_resources(detectors=[OTELResourceDetector()])

    meter_provider = None
    logger_provider = None

    if cfg.otlp_metrics_enabled:
        metric_reader = PeriodicExportingMetricReader(
            OTLPMetricExporter(endpoint=cfg.otlp_endpoint, insecure=cfg.otlp_insecure),
        )
        meter_provider = MeterProvider(resource=resource, metric_readers=[metric_reader])
        metrics.set_meter_provider(meter_provider)
        logging.info("OTLP metrics enabled")
    else:
        logging.debug("OTLP metrics disabled")

    if cfg.otlp_logs_enabled:
        logger_provider = LoggerProvider()
        set_logger_provider(logger_provider)
        logger_provider.add_log_record_processor(BatchLogRecordProcessor(
            OTLPLogExporter(endpoint=cfg.otlp_endpoint, insecure=cfg.otlp_insecure)))
        logging.getLogger().addHandler(LoggingHandler(level=logging.NOTSET, logger_provider=logger_provider))
        logging.info("OTLP logs enabled")
    else:
        logging.debug("OTLP logs disabled")

    return meter_provider, logger_provider


def create_metrics(meter_provider: Optional[MeterProvider]) -> Optional[Metrics]:
    """Create experiment metrics.

    Args:
        meter_provider: MeterProvider instance, or None if metrics disabled

    Returns:
        Metrics dataclass, or None if meter_provider is None
    """
    if not meter_provider:
        return None

    meter = meter_provider.get_meter(__name__)
    return Metrics(
        bias=meter.create_gauge("sketch_bias", description="Monte-Carlo bias per experiment cell", unit="1"),
        variance=meter.create_gauge("sketch_variance", description="Monte-Carlo variance per experiment cell",
                                    unit="1"),
        rejection_rate=meter.create_gauge("sketch_rejection_rate",
                                          description="Fraction of trials rejected by the conditioning event",
                                          unit="1"),
        trials=meter.create_counter("sketch_trials", description="Trials executed", unit="1"),
    )

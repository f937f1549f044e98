import logging

from src.config import Config
from src.telemetry import Metrics, create_metrics, setup_telemetry


def make_config(**overrides):
    values = dict(otlp_endpoint="http://localhost:4317", otlp_insecure=True, otlp_metrics_enabled=False,
                  otlp_logs_enabled=False, threads=1, bootstrap_resamples=10, log_level="INFO")
    values.update(overrides)
    return Config(**values)


def test_setup_telemetry_disabled():
    assert setup_telemetry(make_config()) == (None, None)


def test_create_metrics_without_provider():
    assert create_metrics(None) is None


def test_create_metrics_registers_instruments(mocker):
    provider = mocker.MagicMock()
    metrics = create_metrics(provider)
    meter = provider.get_meter.return_value
    gauges = [c.args[0] for c in meter.create_gauge.call_args_list]
    assert gauges == ["sketch_bias", "sketch_variance", "sketch_rejection_rate"]
    meter.create_counter.assert_called_once()
    assert isinstance(metrics, Metrics)


def test_metrics_record(mocker):
    metrics = Metrics(bias=mocker.MagicMock(), variance=mocker.MagicMock(), rejection_rate=mocker.MagicMock(),
                      trials=mocker.MagicMock())
    attributes = {"experiment": "ols", "family": "uniform", "debiased": False, "m": 64}
    metrics.record(attributes, bias=0.5, variance=2.0, accepted=75, rejected=25)
    metrics.bias.set.assert_called_once_with(0.5, attributes)
    metrics.variance.set.assert_called_once_with(2.0, attributes)
    metrics.rejection_rate.set.assert_called_once_with(0.25, attributes)
    metrics.trials.add.assert_called_once_with(100, attributes)


def test_setup_telemetry_enables_metrics(mocker):
    exporter = mocker.patch("src.telemetry.OTLPMetricExporter")
    reader = mocker.patch("src.telemetry.PeriodicExportingMetricReader")
    provider = mocker.patch("src.telemetry.MeterProvider")
    set_provider = mocker.patch("src.telemetry.metrics.set_meter_provider")
    meter_provider, logger_provider = setup_telemetry(make_config(otlp_metrics_enabled=True))
    exporter.assert_called_once_with(endpoint="http://localhost:4317", insecure=True)
    reader.assert_called_once_with(exporter.return_value)
    set_provider.assert_called_once_with(provider.return_value)
    assert meter_provider is provider.return_value
    assert logger_provider is None


def test_setup_telemetry_logs_use_configured_endpoint(mocker):
    exporter = mocker.patch("src.telemetry.OTLPLogExporter")
    processor = mocker.patch("src.telemetry.BatchLogRecordProcessor")
    mocker.patch("src.telemetry.LoggerProvider")
    mocker.patch("src.telemetry.set_logger_provider")
    handler = logging.NullHandler()
    mocker.patch("src.telemetry.LoggingHandler", return_value=handler)
    cfg = make_config(otlp_logs_enabled=True, otlp_endpoint="collector:4317", otlp_insecure=False)
    try:
        meter_provider, logger_provider = setup_telemetry(cfg)
    finally:
        logging.getLogger().removeHandler(handler)
    exporter.assert_called_once_with(endpoint="collector:4317", insecure=False)
    processor.assert_called_once_with(exporter.return_value)
    assert meter_provider is None
    assert logger_provider is not None

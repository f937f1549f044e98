"""Debiased sketching - bias/variance experiments for sketched OLS and CUR with OTLP observability."""

__version__ = "0.1.0"

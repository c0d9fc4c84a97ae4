"""Multi-factor recurrent load forecasting for distribution networks."""

from . import cli, experiments, features, ingest, neural, stats, timebase  # noqa: F401

__version__ = "0.1.0"

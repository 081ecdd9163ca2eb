"""Charging-station location under congestion-aware user equilibrium."""
from importlib.metadata import PackageNotFoundError, version

from .queueing import QueueSpec, mmsk_metrics

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source checkout
    __version__ = "0.0.0"

__all__ = ["QueueSpec", "mmsk_metrics", "__version__"]

"""Multi-view robot-scene sequence editing toolkit."""

__version__ = "0.1.0"

from . import geom, metrics, windows  # breadth-first, cheap imports only

__all__ = ["geom", "metrics", "windows", "__version__"]

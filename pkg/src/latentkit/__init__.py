"""Psychometric scale construction and validation toolkit."""

from .errors import ConfigError, LatentKitError

__version__ = "0.1.0"

__all__ = ["ConfigError", "LatentKitError", "__version__"]

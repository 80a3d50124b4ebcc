"""Error taxonomy shared by the library and the CLI."""

from __future__ import annotations

# codes that signal a bad parameter rather than bad data; the CLI maps them to exit 2
CONFIG_CODES = frozenset({"CONFIG_ERROR", "DIMENSION_ERROR", "MIN_TRIALS"})


class LatentKitError(Exception):
    """Analysis failure carrying a stable machine-readable ``code``."""

    def __init__(self, code: str, message: str = "", **details):
        self.code = code
        self.message = message or code
        self.details = details
        super().__init__(f"{code}: {self.message}")

    @property
    def exit_code(self) -> int:
        return 2 if self.code in CONFIG_CODES else 1

    def to_dict(self) -> dict:
        return {"error": self.code, "message": self.message, "details": self.details}


class ConfigError(LatentKitError):
    def __init__(self, message: str = "", **details):
        super().__init__("CONFIG_ERROR", message, **details)

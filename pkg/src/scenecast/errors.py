"""Exception hierarchy shared by all modules."""


class ScenecastError(Exception):
    """Base class for library errors."""


class DomainError(ScenecastError, ValueError):
    """An argument lies outside the domain of a mathematical map."""


class DegenerateGeometryError(ScenecastError):
    """Registration or fitting has too little usable geometry."""


class DataError(ScenecastError):
    """Malformed, missing or inconsistent input data."""


class ConfigError(DataError):
    """A configuration file failed to parse or validate."""

    def __init__(self, message, line=None, key=None):
        self.line = line
        self.key = key
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)

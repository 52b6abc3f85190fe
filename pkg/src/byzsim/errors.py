"""Exception types shared across the simulator."""


class ByzsimError(Exception):
    pass


class DimensionError(ByzsimError, ValueError):
    pass


class ConfigError(ByzsimError, ValueError):
    pass


class ParseError(ByzsimError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ProtocolError(ByzsimError, RuntimeError):
    pass


class IndexRangeError(ParseError):
    pass

"""Exception hierarchy. Each family maps to a distinct CLI exit code."""


class AlrtError(Exception):
    exit_code = 1


class ConfigError(AlrtError, ValueError):
    exit_code = 2


class ParseError(AlrtError, ValueError):
    """Malformed input file. ``path``, ``line`` and ``column`` are filled when known."""

    exit_code = 3

    def __init__(self, message, *, path=None, line=None, column=None):
        self.path = path
        self.line = line
        self.column = column
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column!r}")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.bare_message = message


class SchemaError(ParseError):
    pass


class LabelError(ParseError):
    pass


class NumericError(AlrtError, ArithmeticError):
    exit_code = 4

"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand extents, channel counts or groups are inconsistent."""


class SizeError(ValueError):
    """A requested tensor is too large to address."""


class UnsupportedError(ValueError):
    """The operation does not support this configuration (stride, kernel shape, plan size)."""


class FormatError(ValueError):
    """A T5DF file is malformed. ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class ConfigError(ValueError):
    """A model config could not be parsed or validated."""

    def __init__(self, message, line=None, field=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)
        self.line = line
        self.field = field

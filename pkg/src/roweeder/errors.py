"""Exception types shared across the pipeline."""


class RoweederError(Exception):
    """Base class for all pipeline errors."""


class DimensionMismatch(RoweederError):
    """Two grids that must share dimensions do not."""


class InvalidParam(RoweederError):
    """A parameter is outside its documented range."""


class EmptyInput(RoweederError):
    """An operation requiring a nonempty sample received none."""


class EmptyMask(RoweederError):
    """An operation requiring at least one set pixel received an empty mask."""


class OutOfBounds(RoweederError):
    """Pixel coordinates exceed the grid they are applied to."""


class ConfigError(RoweederError):
    """Configuration file or CLI usage error (exit code 2)."""

"""Trainer-side exception types."""


class TrainerError(Exception):
    """Base class for trainer errors."""


class ShapeError(TrainerError):
    """Tensor shape incompatible with the model contract."""


class InvalidParam(TrainerError):
    """A parameter is outside its documented range."""


class MissingData(TrainerError):
    """Required tiles or manifests are absent."""

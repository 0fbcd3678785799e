"""Exception types raised across the package."""


class PnsError(Exception):
    """Base class for all package errors."""


class ShapeError(PnsError, ValueError):
    pass


class TapeError(PnsError, RuntimeError):
    pass


class CheckpointError(PnsError):
    pass


class DatasetFormatError(PnsError):
    pass


class ConfigError(PnsError, ValueError):
    pass


class NonFiniteLossError(PnsError, FloatingPointError):
    """Training produced a NaN or infinite loss."""

    def __init__(self, epoch, batch, components):
        self.epoch = epoch
        self.batch = batch
        self.components = dict(components)
        parts = ", ".join(f"{k}={v!r}" for k, v in self.components.items())
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}: {parts}")

"""Exception types shared across the package."""


class ShapeError(ValueError):
    pass


class ParameterError(ValueError):
    pass


class DegenerateFeatureError(ParameterError):
    """A feature is constant over the fitting data, so min-max scaling is undefined."""


class SplitError(ParameterError):
    pass


class StateError(RuntimeError):
    pass


class NumericError(FloatingPointError):
    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message if epoch is None else f"{message} (epoch {epoch})")
        self.epoch = epoch

"""Exception types raised across the package."""


class DimensionError(ValueError):
    """An array does not have the dimension an operation expects."""

    def __init__(self, what, expected, actual):
        self.what = what
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what}: expected dimension {expected}, got {actual}")


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, stage="train"):
        self.epoch = epoch
        self.stage = stage
        super().__init__(f"{stage}: non-finite loss at epoch {epoch}")


class InversionError(RuntimeError):
    """Every restart of an inversion failed."""


class SamplingError(RuntimeError):
    """Rejection sampling could not produce enough admissible designs."""


"""Exception types raised by the simulator."""


class GridError(ValueError):
    """Grid construction failed or two grids are incompatible."""


class SupportError(GridError):
    """A state's support does not fit inside its grid."""


class TruncationError(ValueError):
    """A state carries too much weight above the number-basis cutoff."""

    def __init__(self, message, weight=None):
        super().__init__(message)
        self.weight = weight


class SpectrumError(ValueError):
    """The angular window misses too much probability."""


class StageError(RuntimeError):
    """A protocol stage failed; ``stage`` names which one."""

    def __init__(self, stage, cause):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause

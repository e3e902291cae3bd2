"""Exception hierarchy. ``exit_code`` is what the CLI returns for each family."""


class MmloopError(Exception):
    exit_code = 1


class ConfigError(MmloopError, ValueError):
    exit_code = 2


class DataError(MmloopError, ValueError):
    exit_code = 3


class InvalidInputError(DataError):
    """Input outside the domain an operation accepts (e.g. latitude out of band)."""


class InsufficientDataError(DataError):
    pass


class ExtrapolationError(DataError):
    """Query time outside the bracketing fixes; callers drop such samples."""


class StructuralError(DataError):
    """Shape, length or zone mismatch between two objects that must agree."""


class MiningExhaustedError(DataError):
    def __init__(self, anchor, regime):
        super().__init__(f"no eligible {regime} negative for anchor {anchor}")
        self.anchor = anchor
        self.regime = regime


class EmptyIndexError(DataError):
    pass


class WeightFileError(DataError):
    pass


class PhaseOrderError(MmloopError, RuntimeError):
    exit_code = 2


class TrainingDivergenceError(MmloopError, RuntimeError):
    exit_code = 4

    def __init__(self, message, last_good=None):
        super().__init__(message)
        self.last_good = last_good

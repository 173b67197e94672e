"""Exception hierarchy shared by every mixfit module."""


class MixfitError(Exception):
    """Base class for all errors raised by mixfit."""


class DimensionError(MixfitError, ValueError):
    """Array shapes do not agree with a manifold or a parameter set."""


class NotSPDError(MixfitError, ValueError):
    """A matrix that must be symmetric positive-definite is not."""


class NumericError(MixfitError, ArithmeticError):
    """A computation produced a non-finite value."""


class InsufficientDataError(MixfitError, ValueError):
    """Too few data points (or too little total weight) for an estimate."""


class ConfigurationError(MixfitError, ValueError):
    """Options are inconsistent with each other or with the data."""


class DataFormatError(MixfitError, ValueError):
    """An input file could not be parsed."""


class ModelFileError(MixfitError, ValueError):
    """A model file is malformed or fails validation."""


class FitError(MixfitError, RuntimeError):
    """An estimator could not produce a result."""

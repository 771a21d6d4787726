class NeuralKDBError(Exception):
    """Base class for errors raised by this package."""


class DataError(NeuralKDBError, ValueError):
    """Input data is malformed or violates a precondition."""


class ModelFormatError(NeuralKDBError, ValueError):
    """A model file is malformed or has an unsupported version."""

"""Exception taxonomy shared across the library.

The CLI maps these onto process exit codes, so new error types should
subclass one of the three below rather than raising bare exceptions.
"""


class LLSError(Exception):
    """Base class for all library errors."""


class DataError(LLSError):
    """Malformed or inconsistent user input (files, schemas, datasets)."""


class ModelNotApplicableError(LLSError):
    """The data does not support the requested model (rank, degeneracy)."""


class DegenerateInputError(ModelNotApplicableError):
    """Input is too degenerate to even start (e.g. no usable minor)."""


class NumericalError(LLSError):
    """A numerical procedure failed to produce a usable result."""


class GenerationError(NumericalError):
    """Synthetic model generation exhausted its rejection budget."""

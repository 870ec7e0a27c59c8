"""Exception types shared across the toolkit."""


class DecomcamError(Exception):
    """Base class for all toolkit errors."""


class InvalidArgumentError(DecomcamError, ValueError):
    """An argument violates a documented precondition."""


class ComputationFailedError(DecomcamError, RuntimeError):
    """A numerical routine failed (e.g. SVD non-convergence)."""


class FormatError(DecomcamError):
    """A binary file is malformed (bad magic, truncation, garbage)."""


class SchemaError(DecomcamError):
    """A file parses but does not satisfy the expected schema."""

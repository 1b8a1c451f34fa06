"""Exception types shared across the package."""


class MixlabError(Exception):
    """Base class for all package-specific errors."""


class ParameterError(MixlabError, ValueError):
    """A scalar parameter or configuration value is out of its valid domain."""


class ShapeMismatchError(MixlabError, ValueError):
    """Array operands have incompatible shapes; message names both shapes."""


class NumericError(MixlabError, ArithmeticError):
    """An operation produced non-finite values where finite ones are required."""


class DataFormatError(MixlabError, ValueError):
    """A dataset or checkpoint file violates the documented format."""


class ConfigError(MixlabError, ValueError):
    """An experiment config file is malformed or contains unknown keys."""


class TrainingAbort(MixlabError, RuntimeError):
    """Training hit a non-finite loss; message names the step and config hash."""
